#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "tpf/error.hpp"
#include "tpf/geometry.hpp"
#include "tpf/image.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

using namespace tpf;

namespace {

Polygon rect(double x0, double y0, double x1, double y1) {
    Polygon p;
    p.vertices = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
    return p;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected tpf::Error");
    return ErrorCode::InvalidArgument;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("tpf_geom_" + name)).string();
}

// Random 8-connected blob grown from the centre of a w x h grid.
BinaryMask random_blob(std::mt19937_64& rng, int w, int h, int cells) {
    BinaryMask m(w, h);
    int x = w / 2, y = h / 2;
    m.set(x, y);
    std::uniform_int_distribution<int> step(-1, 1);
    while (static_cast<int>(m.count()) < cells) {
        x = std::clamp(x + step(rng), 0, w - 1);
        y = std::clamp(y + step(rng), 0, h - 1);
        m.set(x, y);
    }
    return m;
}

// Background cells that cannot reach the border through 4-neighbours.
BinaryMask holes_of(const BinaryMask& m) {
    const int w = m.width(), h = m.height();
    BinaryMask outside(w, h);
    std::vector<std::pair<int, int>> stack;
    for (int x = 0; x < w; ++x) {
        stack.push_back({x, 0});
        stack.push_back({x, h - 1});
    }
    for (int y = 0; y < h; ++y) {
        stack.push_back({0, y});
        stack.push_back({w - 1, y});
    }
    while (!stack.empty()) {
        auto [x, y] = stack.back();
        stack.pop_back();
        if (!m.contains(x, y) || m.at(x, y) || outside.at(x, y)) continue;
        outside.set(x, y);
        stack.push_back({x + 1, y});
        stack.push_back({x - 1, y});
        stack.push_back({x, y + 1});
        stack.push_back({x, y - 1});
    }
    BinaryMask holes(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) holes.set(x, y, !m.at(x, y) && !outside.at(x, y));
    }
    return holes;
}

} // namespace

TEST_CASE("rasterize: axis-aligned square covers exactly its cells") {
    const BinaryMask m = rasterize_polygon(rect(0, 0, 2, 2), 4, 4);
    CHECK(m.count() == 4);
    CHECK(m.at(0, 0));
    CHECK(m.at(1, 1));
    CHECK_FALSE(m.at(2, 0));
}

TEST_CASE("rasterize: degenerate polygons are rejected") {
    Polygon two;
    two.vertices = {{0, 0}, {3, 3}};
    CHECK(code_of([&] { rasterize_polygon(two, 4, 4); }) == ErrorCode::InvalidPolygon);
    Polygon flat;
    flat.vertices = {{0, 0}, {1, 1}, {2, 2}};
    CHECK(code_of([&] { rasterize_polygon(flat, 4, 4); }) == ErrorCode::InvalidPolygon);
}

TEST_CASE("rasterize: rotated rectangle matches the per-cell oracle") {
    const double c = std::cos(std::numbers::pi / 4), s = std::sin(std::numbers::pi / 4);
    Polygon p;
    for (auto [u, v] : {std::pair{-3.0, -1.2}, {3.0, -1.2}, {3.0, 1.2}, {-3.0, 1.2}}) {
        p.vertices.push_back({4.1 + c * u - s * v, 3.9 + s * u + c * v});
    }
    CHECK(rasterize_polygon(p, 8, 8) == oracle::rasterize_by(p, 8, 8, oracle::inside_vertical_ray));
}

TEST_CASE("rasterize: 200 random convex polygons match the convex inside test") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> coord(-2.0, 22.0);
    std::uniform_int_distribution<int> count(3, 9);
    for (int t = 0; t < 200; ++t) {
        std::vector<Point2> pts(static_cast<std::size_t>(count(rng)));
        for (auto& q : pts) q = {coord(rng), coord(rng)};
        const auto hull = oracle::convex_hull(pts);
        if (hull.size() < 3) continue;
        Polygon p;
        p.vertices = hull;
        if (p.area() < 1e-6) continue;
        const BinaryMask m = rasterize_polygon(p, 20, 20);
        for (int y = 0; y < 20; ++y) {
            for (int x = 0; x < 20; ++x) REQUIRE(m.at(x, y) == oracle::inside_convex(hull, {x + 0.5, y + 0.5}));
        }
    }
}

TEST_CASE("point_in_polygon agrees with an upward ray cast on random concave polygons") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> radius(2.0, 8.0), probe(-1.0, 21.0);
    for (int t = 0; t < 50; ++t) {
        Polygon star;
        for (int i = 0; i < 10; ++i) {
            const double a = 2 * std::numbers::pi * i / 10;
            const double r = radius(rng);
            star.vertices.push_back({10 + r * std::cos(a), 10 + r * std::sin(a)});
        }
        for (int k = 0; k < 200; ++k) {
            const Point2 q{probe(rng), probe(rng)};
            CHECK(point_in_polygon(star, q) == oracle::inside_vertical_ray(star, q));
        }
    }
}

TEST_CASE("connected components: single cells and diagonal contact") {
    BinaryMask one(3, 3);
    one.set(1, 1);
    CHECK(connected_components(one).region_count == 1);
    BinaryMask diag(3, 3);
    diag.set(0, 0);
    diag.set(1, 1);
    CHECK(connected_components(diag).region_count == 1);
    CHECK(connected_components(BinaryMask(4, 4)).region_count == 0);
}

TEST_CASE("connected components match a flood-fill oracle on 100 random masks") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 100; ++t) {
        const BinaryMask m = oracle::random_mask(rng, 16, 16, 0.3 + 0.004 * t);
        int expected_count = 0;
        const auto expected = oracle::flood_fill_labels(m, expected_count);
        const LabeledRegions r = connected_components(m);
        REQUIRE(r.region_count == expected_count);
        CHECK(r.label_grid == expected);
    }
}

TEST_CASE("trace_contour: single cell gives a unit square") {
    BinaryMask m(5, 5);
    m.set(2, 3);
    const Polygon p = trace_contour(connected_components(m), 1);
    REQUIRE(p.vertices.size() == 4);
    CHECK(p.signed_area() == doctest::Approx(1.0));
    double min_x = 1e9, min_y = 1e9;
    for (const auto& v : p.vertices) {
        min_x = std::min(min_x, v.x);
        min_y = std::min(min_y, v.y);
    }
    CHECK(min_x == 2.0);
    CHECK(min_y == 3.0);
}

TEST_CASE("trace_contour: 3x3 square encloses exactly its nine cells") {
    BinaryMask m(6, 6);
    for (int y = 1; y < 4; ++y) {
        for (int x = 2; x < 5; ++x) m.set(x, y);
    }
    const Polygon p = trace_contour(connected_components(m), 1);
    CHECK(p.vertices.size() == 4);
    CHECK(p.signed_area() == doctest::Approx(9.0));  // positive: clockwise with y pointing down
    CHECK(rasterize_polygon(p, 6, 6) == m);
}

TEST_CASE("trace_contour: unknown label") {
    BinaryMask m(3, 3);
    m.set(0, 0);
    const auto r = connected_components(m);
    CHECK(code_of([&] { trace_contour(r, 2); }) == ErrorCode::LabelNotFound);
    CHECK(code_of([&] { trace_contour(r, 0); }) == ErrorCode::LabelNotFound);
}

TEST_CASE("trace_contour round trip on random blobs of at least 9 cells") {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 200; ++t) {
        const BinaryMask walk = random_blob(rng, 20, 20, 9 + t % 60);
        const BinaryMask holes = holes_of(walk);
        const LabeledRegions r = connected_components(walk);
        REQUIRE(r.region_count == 1);
        const Polygon p = trace_contour(r, 1);
        CHECK(p.signed_area() > 0);
        // The outer boundary fills holes and nothing else.
        CHECK(rasterize_polygon(p, 20, 20) == mask_union(walk, holes));

        const BinaryMask solid = mask_union(walk, holes);
        const Polygon q = trace_contour(connected_components(solid), 1);
        CHECK(mask_iou(rasterize_polygon(q, 20, 20), solid) >= 0.9);
    }
}

TEST_CASE("mask_iou") {
    BinaryMask a(4, 4), b(4, 4);
    a.set(0, 0);
    a.set(1, 0);
    a.set(0, 1);
    a.set(1, 1);
    CHECK(mask_iou(a, a) == 1.0);
    b.set(3, 3);
    CHECK(mask_iou(a, b) == 0.0);
    BinaryMask c(4, 4);
    c.set(1, 0);
    c.set(2, 0);
    c.set(1, 1);
    c.set(2, 1);
    CHECK(mask_iou(a, c) == doctest::Approx(2.0 / 6.0));
    CHECK(mask_iou(BinaryMask(2, 2), BinaryMask(2, 2)) == 1.0);
    CHECK(code_of([&] { mask_iou(a, BinaryMask(3, 4)); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("mask_iou is symmetric and 1 only for identical non-empty masks") {
    std::mt19937_64 rng(23);
    for (int t = 0; t < 100; ++t) {
        BinaryMask a = oracle::random_mask(rng, 8, 8, 0.4);
        BinaryMask b = oracle::random_mask(rng, 8, 8, 0.4);
        if (a.empty() || b.empty()) continue;
        CHECK(mask_iou(a, b) == mask_iou(b, a));
        CHECK((mask_iou(a, b) == 1.0) == (a == b));
        CHECK(mask_iou(a, a) == 1.0);
    }
}

TEST_CASE("upscale and union") {
    BinaryMask m(2, 2);
    m.set(1, 0);
    const BinaryMask up = upscale_mask(m, 4, 7, 8);
    CHECK(up.width() == 7);
    CHECK(up.count() == 3 * 4);  // cropped column range 4..6
    CHECK(up.at(4, 0));
    CHECK_FALSE(up.at(3, 0));
    BinaryMask n(2, 2);
    n.set(0, 1);
    CHECK(mask_union(m, n).count() == 2);
}

TEST_CASE("polygon distance") {
    CHECK(polygon_distance(rect(0, 0, 2, 2), rect(5, 0, 7, 2)) == doctest::Approx(3.0));
    CHECK(polygon_distance(rect(0, 0, 2, 2), rect(1, 1, 3, 3)) == 0.0);
    CHECK(polygon_distance(rect(0, 0, 10, 10), rect(4, 4, 5, 5)) == 0.0);
    CHECK(polygon_distance(rect(0, 0, 1, 1), rect(4, 5, 6, 6)) == doctest::Approx(5.0));
}

TEST_CASE("polygon lines parse and format") {
    const Polygon p = parse_polygon_line("1,2, 3.5,4,5,-6");
    REQUIRE(p.vertices.size() == 3);
    CHECK(p.vertices[1].x == 3.5);
    CHECK(p.vertices[2].y == -6);
    CHECK(parse_polygon_line(format_polygon_line(p)).vertices.size() == 3);
    const Polygon q = rect(0.1, 1.0 / 3.0, 7.25, 9);
    const Polygon back = parse_polygon_line(format_polygon_line(q));
    for (std::size_t i = 0; i < q.vertices.size(); ++i) {
        CHECK(back.vertices[i].x == q.vertices[i].x);
        CHECK(back.vertices[i].y == q.vertices[i].y);
    }
    CHECK(code_of([] { parse_polygon_line("1,2,3"); }) == ErrorCode::ParseError);
    CHECK(code_of([] { parse_polygon_line("1,2,x,4,5,6"); }) == ErrorCode::ParseError);
}

TEST_CASE("polygon files report the failing line") {
    const std::string path = temp_path("bad.txt");
    {
        std::ofstream out(path);
        out << "0,0,4,0,4,4,0,4\n\n1,2,3\n";
    }
    try {
        read_polygon_file(path);
        FAIL("expected ParseError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ParseError);
        CHECK(std::string(e.what()).find("bad.txt:3") != std::string::npos);
    }
    {
        std::ofstream out(path);
        out << "0,0,4,4,4,0,0,4\n";  // bow tie
    }
    CHECK(code_of([&] { read_polygon_file(path); }) == ErrorCode::InvalidPolygon);
    write_polygon_file(path, {rect(0, 0, 4, 2), rect(5, 5, 9, 6.5)});
    const auto back = read_polygon_file(path);
    REQUIRE(back.size() == 2);
    CHECK(back[1].vertices[2].y == 6.5);
    CHECK(code_of([] { read_polygon_file("/nonexistent/tpf.txt"); }) == ErrorCode::IoError);
}

TEST_CASE("PGM and PPM round trips") {
    std::mt19937_64 rng(2);
    const BinaryMask m = oracle::random_mask(rng, 9, 5, 0.5);
    const std::string pgm = temp_path("m.pgm");
    write_pgm(pgm, m);
    CHECK(read_pgm(pgm) == m);

    Image img(6, 4);
    std::uniform_real_distribution<double> u(0, 1);
    for (auto& v : img.data) v = u(rng);
    quantize_8bit(img);
    const std::string ppm = temp_path("i.ppm");
    write_ppm(ppm, img);
    CHECK(read_ppm(ppm) == img);
}
