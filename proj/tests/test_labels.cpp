#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tpf/error.hpp"
#include "tpf/labels.hpp"
#include "tpf/synthgen.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

using namespace tpf;
using oracle::AxisRange;
using oracle::valid_range;

namespace {

Polygon rect(double x0, double y0, double x1, double y1) {
    Polygon p;
    p.vertices = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
    return p;
}

BinaryMask cells(int w, int h, int x0, int y0, int x1, int y1) {
    BinaryMask m(w, h);
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) m.set(x, y);
    }
    return m;
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

} // namespace

TEST_CASE("grid dims use ceiling division") {
    CHECK(grid_dims_for(64, 64) == GridDims{16, 16});
    CHECK(grid_dims_for(30, 17) == GridDims{8, 5});
}

TEST_CASE("instance stack") {
    const auto one = build_instance_stack({rect(8, 8, 40, 24)}, 64, 64);
    REQUIRE(one.count() == 1);
    CHECK(one.masks[0].width() == 16);
    CHECK(one.masks[0].height() == 16);

    const auto three = build_instance_stack({rect(0, 0, 20, 8), rect(0, 20, 20, 28), rect(30, 30, 60, 40)}, 64, 64);
    REQUIRE(three.count() == 3);
    for (int a = 0; a < 3; ++a) {
        for (int b = a + 1; b < 3; ++b) CHECK(mask_iou(three.masks[a], three.masks[b]) == 0.0);
    }

    CHECK(code_of([] { build_instance_stack({rect(0.1, 0.1, 1.0, 1.0)}, 64, 64); }) == ErrorCode::NoValidInstances);

    const auto mixed = build_instance_stack({rect(0.1, 0.1, 1.0, 1.0), rect(8, 8, 40, 24)}, 64, 64);
    CHECK(mixed.count() == 1);
    CHECK(mixed.source_index == std::vector<int>{1});
    CHECK(mixed.warnings.size() == 1);
}

TEST_CASE("center points on a horizontal 10x2 ribbon") {
    // Extent 0..9, trim 2.25 each side: valid integer positions 3..6, so four points on the lower span row.
    const BinaryMask ribbon = cells(12, 4, 0, 0, 9, 1);
    const auto pts = sample_center_points(ribbon, LabelConfig{5, 0.5});
    const std::vector<CellPoint> expected{{3, 1}, {4, 1}, {5, 1}, {6, 1}};
    CHECK(pts == expected);
}

TEST_CASE("center points: single cell and square tie") {
    BinaryMask single(5, 5);
    single.set(2, 3);
    CHECK(sample_center_points(single, LabelConfig{}) == std::vector<CellPoint>{{2, 3}});

    // w == h samples along y; x stays at the span midpoint.
    const BinaryMask square = cells(12, 12, 1, 1, 9, 9);
    const auto pts = sample_center_points(square, LabelConfig{5, 1.0});
    REQUIRE(pts.size() == 5);
    for (const auto& p : pts) CHECK(p.x == 5);
    CHECK(pts.front().y == 1);
    CHECK(pts.back().y == 9);

    CHECK(code_of([] { sample_center_points(BinaryMask(3, 3), LabelConfig{}); }) == ErrorCode::EmptyMask);
}

TEST_CASE("center points snap to the foreground on concave shapes") {
    // Hourglass along x: columns near the middle only have cells at the top and bottom rows.
    BinaryMask m(11, 7);
    for (int x = 0; x < 11; ++x) {
        m.set(x, 0);
        m.set(x, 6);
        if (x < 3 || x > 7) {
            for (int y = 0; y < 7; ++y) m.set(x, y);
        }
    }
    const auto pts = sample_center_points(m, LabelConfig{5, 1.0});
    CHECK_FALSE(pts.empty());
    for (const auto& p : pts) CHECK(m.at(p.x, p.y));
}

TEST_CASE("equidistant spacing for long instances") {
    for (int n : {2, 3, 5, 7}) {
        for (int len = 4 * n; len < 4 * n + 20; ++len) {
            const BinaryMask bar = cells(len + 2, 5, 1, 1, len, 3);
            const auto pts = sample_center_points(bar, LabelConfig{n, 0.5});
            REQUIRE(static_cast<int>(pts.size()) == n);
            const int step = pts[1].x - pts[0].x;
            for (std::size_t i = 1; i < pts.size(); ++i) CHECK(std::abs((pts[i].x - pts[i - 1].x) - step) <= 1);
        }
    }
}

TEST_CASE("center point mask") {
    const GridDims dims{8, 6};
    CHECK(build_center_point_mask({}, dims).count() == 0);
    CenterPointSet five;
    for (int i = 0; i < 5; ++i) five.points.push_back({i, i % 3, i < 3 ? 0 : 1});
    const BinaryMask m = build_center_point_mask(five, dims);
    CHECK(m.count() == 5);
    CHECK(m.at(4, 1));
    CenterPointSet bad;
    bad.points.push_back({8, 0, 0});
    CHECK(code_of([&] { build_center_point_mask(bad, dims); }) == ErrorCode::PointOutOfBounds);
}

TEST_CASE("reinforcement matrix block structure") {
    CenterPointSet pts;
    for (int i = 0; i < 5; ++i) pts.points.push_back({i, 0, i < 3 ? 0 : 1});
    const ReinforcementMatrix m = build_reinforcement_matrix(pts);
    const std::vector<std::uint8_t> expected{1, 1, 1, 0, 0, 1, 1, 1, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 1, 1};
    CHECK(m.bits == expected);

    CenterPointSet single;
    for (int i = 0; i < 4; ++i) single.points.push_back({i, 0, 7});
    const auto ones = build_reinforcement_matrix(single);
    CHECK(std::all_of(ones.bits.begin(), ones.bits.end(), [](auto b) { return b == 1; }));
}

TEST_CASE("reinforcement matrix permutes with the points") {
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> inst(0, 3);
    for (int t = 0; t < 50; ++t) {
        CenterPointSet pts;
        for (int i = 0; i < 9; ++i) pts.points.push_back({i, 0, inst(rng)});
        std::vector<int> perm(9);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        CenterPointSet shuffled;
        for (int i : perm) shuffled.points.push_back(pts.points[static_cast<std::size_t>(i)]);
        const auto a = build_reinforcement_matrix(pts);
        const auto b = build_reinforcement_matrix(shuffled);
        for (int r = 0; r < 9; ++r) {
            for (int c = 0; c < 9; ++c) CHECK(b.at(r, c) == a.at(perm[static_cast<std::size_t>(r)], perm[static_cast<std::size_t>(c)]));
        }
    }
}

TEST_CASE("foreground mask") {
    const std::vector<Polygon> disjoint{rect(0, 0, 20, 8), rect(0, 20, 20, 28)};
    const auto stack = build_instance_stack(disjoint, 64, 64);
    const BinaryMask fg = build_foreground_mask(disjoint, 64, 64);
    CHECK(fg == mask_union(stack.masks[0], stack.masks[1]));
    CHECK(fg.count() == stack.masks[0].count() + stack.masks[1].count());

    const std::vector<Polygon> overlapping{rect(0, 0, 20, 12), rect(8, 4, 28, 16)};
    const auto s2 = build_instance_stack(overlapping, 64, 64);
    CHECK(build_foreground_mask(overlapping, 64, 64).count() < s2.masks[0].count() + s2.masks[1].count());
}

TEST_CASE("label invariants over a synthetic corpus") {
    SceneSpec spec;
    spec.curved = true;
    const LabelConfig config;
    int instances = 0;
    for (int i = 0; i < 40; ++i) {
        spec.seed = 500 + static_cast<std::uint64_t>(i);
        const SceneSample scene = generate_scene(spec);
        const LabelBundle b = build_label_bundle(scene.polygons, scene.image.width, scene.image.height, config);
        CHECK(b.matrix.is_symmetric());
        CHECK(b.matrix.has_unit_diagonal());
        CHECK(b.matrix.n == b.points.size());
        CHECK(b.center_mask.count() == static_cast<std::size_t>(b.points.size()));
        BinaryMask all(b.dims.width, b.dims.height);
        for (const auto& m : b.stack.masks) all = mask_union(all, m);
        CHECK(all == b.foreground);
        for (int k = 0; k < b.stack.count(); ++k) {
            ++instances;
            const BinaryMask& mask = b.stack.masks[static_cast<std::size_t>(k)];
            int count = 0;
            for (const auto& p : b.points.points) {
                if (p.instance_id != k) continue;
                ++count;
                CHECK(mask.at(p.x, p.y));
            }
            const AxisRange r = valid_range(mask, config.valid_fraction);
            const int available = r.last - r.first + 1;
            bool every_position_filled = true;
            for (int a = r.first; a <= r.last; ++a) {
                bool any = false;
                for (int c = 0; c < (r.along_x ? mask.height() : mask.width()); ++c) {
                    any = any || (r.along_x ? mask.at(a, c) : mask.at(c, a));
                }
                every_position_filled = every_position_filled && any;
            }
            CHECK(count >= 1);
            CHECK(count <= std::min(config.points_per_text, available));
            if (every_position_filled) CHECK(count == std::min(config.points_per_text, available));
        }
    }
    CHECK(instances > 40);
}

TEST_CASE("label bundle on disk") {
    const auto dir = std::filesystem::temp_directory_path() / "tpf_labels_bundle";
    std::filesystem::remove_all(dir);
    const auto bundle = build_label_bundle({rect(4, 4, 44, 12), rect(4, 30, 44, 40)}, 64, 64, LabelConfig{});
    write_label_bundle(dir.string(), bundle);
    for (const char* f : {"foreground.pgm", "centers.pgm", "matrix.csv", "points.csv", "instances/0.pgm", "instances/1.pgm"}) {
        CHECK(std::filesystem::exists(dir / f));
    }
    std::ifstream points(dir / "points.csv");
    std::string header;
    std::getline(points, header);
    CHECK(header == "x,y,instance_id");
    int rows = 0;
    for (std::string line; std::getline(points, line);) rows += line.empty() ? 0 : 1;
    CHECK(rows == bundle.points.size());
    std::ifstream matrix(dir / "matrix.csv");
    int mrows = 0;
    for (std::string line; std::getline(matrix, line);) {
        if (line.empty()) continue;
        ++mrows;
        CHECK(std::count(line.begin(), line.end(), ',') == bundle.matrix.n - 1);
    }
    CHECK(mrows == bundle.matrix.n);
}

TEST_CASE("label config validation") {
    CHECK(code_of([] { LabelConfig{0, 0.5}.validate(); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { LabelConfig{5, 0.0}.validate(); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { LabelConfig{5, 1.5}.validate(); }) == ErrorCode::InvalidArgument);
}
