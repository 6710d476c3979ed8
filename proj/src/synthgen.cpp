#include "tpf/synthgen.hpp"

#include "tpf/error.hpp"
#include "tpf/labels.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

namespace tpf {

namespace {

constexpr int kPlacementAttempts = 100;
constexpr int kArcSegments = 8;
constexpr double kBorderMargin = 2.0;

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
    bool coin() { return integer(0, 1) == 1; }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

struct Candidate {
    Polygon polygon;
    InstanceInfo info;
    Point2 center;
    double angle = 0.0;
};

Polygon oriented_rect(Point2 c, double angle, double length, double stroke) {
    const double ux = std::cos(angle), uy = std::sin(angle);
    const double nx = -uy, ny = ux;
    const double hl = length / 2, hw = stroke / 2;
    Polygon p;
    p.vertices = {{c.x - ux * hl - nx * hw, c.y - uy * hl - ny * hw},
                  {c.x + ux * hl - nx * hw, c.y + uy * hl - ny * hw},
                  {c.x + ux * hl + nx * hw, c.y + uy * hl + ny * hw},
                  {c.x - ux * hl + nx * hw, c.y - uy * hl + ny * hw}};
    return p;
}

Point2 bezier(Point2 a, Point2 b, Point2 c, double t) {
    const double s = 1 - t;
    return {s * s * a.x + 2 * s * t * b.x + t * t * c.x, s * s * a.y + 2 * s * t * b.y + t * t * c.y};
}

Point2 bezier_tangent(Point2 a, Point2 b, Point2 c, double t) {
    return {2 * (1 - t) * (b.x - a.x) + 2 * t * (c.x - b.x), 2 * (1 - t) * (b.y - a.y) + 2 * t * (c.y - b.y)};
}

// Ribbon of the given thickness around a quadratic centerline with chord `chord` and sagitta-like
// bend; returns the polygon and the centerline length.
Polygon arc_ribbon(Point2 c, double angle, double chord, double bend, double stroke, double& arc_length) {
    const double ux = std::cos(angle), uy = std::sin(angle);
    const double nx = -uy, ny = ux;
    const Point2 p0{c.x - ux * chord / 2, c.y - uy * chord / 2};
    const Point2 p2{c.x + ux * chord / 2, c.y + uy * chord / 2};
    const Point2 p1{c.x + nx * bend, c.y + ny * bend};
    std::vector<Point2> left, right;
    arc_length = 0.0;
    Point2 prev = p0;
    for (int i = 0; i <= kArcSegments; ++i) {
        const double t = static_cast<double>(i) / kArcSegments;
        const Point2 p = bezier(p0, p1, p2, t);
        const Point2 d = bezier_tangent(p0, p1, p2, t);
        const double len = std::hypot(d.x, d.y);
        const double ox = -d.y / len * stroke / 2, oy = d.x / len * stroke / 2;
        left.push_back({p.x + ox, p.y + oy});
        right.push_back({p.x - ox, p.y - oy});
        arc_length += std::hypot(p.x - prev.x, p.y - prev.y);
        prev = p;
    }
    Polygon poly;
    poly.vertices = right;
    for (auto it = left.rbegin(); it != left.rend(); ++it) poly.vertices.push_back(*it);
    return poly;
}

bool inside_frame(const Polygon& p, int width, int height) {
    for (const auto& v : p.vertices) {
        if (v.x < kBorderMargin || v.y < kBorderMargin || v.x > width - kBorderMargin || v.y > height - kBorderMargin) {
            return false;
        }
    }
    return true;
}

// `shrink` in (0, 1] tightens the length cap on late placement attempts.
Candidate random_instance(const SceneSpec& spec, Rng& rng, bool allow_arc, double shrink) {
    Candidate cand;
    const double aspect = rng.uniform(spec.min_aspect, spec.max_aspect);
    const double longest = shrink * 0.7 * std::min(spec.width, spec.height);
    const double stroke_hi = std::min(spec.stroke_max(), longest / aspect);
    const double stroke = rng.uniform(spec.stroke_min(), std::max(spec.stroke_min(), stroke_hi));
    const double length = aspect * stroke;
    cand.angle = rng.uniform(0, std::numbers::pi);
    cand.info.stroke = stroke;

    if (allow_arc && rng.coin()) {
        const double bend_ratio = rng.uniform(0.15, 0.3) * (rng.coin() ? 1 : -1);
        // Scale the chord until the centerline length matches the target length.
        double chord = length;
        double arc = 0.0;
        for (int i = 0; i < 4; ++i) {
            arc_ribbon(cand.center, cand.angle, chord, bend_ratio * chord, stroke, arc);
            chord *= length / arc;
        }
        cand.polygon = arc_ribbon(cand.center, cand.angle, chord, bend_ratio * chord, stroke, arc);
        cand.info.kind = ShapeKind::Arc;
        cand.info.length = arc;
    } else {
        cand.polygon = oriented_rect(cand.center, cand.angle, length, stroke);
        cand.info.kind = ShapeKind::Quad;
        cand.info.length = length;
    }
    // Shapes are built around the origin; slide them to a random spot where the bounding box fits.
    double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
    for (const auto& v : cand.polygon.vertices) {
        x0 = std::min(x0, v.x);
        y0 = std::min(y0, v.y);
        x1 = std::max(x1, v.x);
        y1 = std::max(y1, v.y);
    }
    const double lo_x = kBorderMargin - x0, hi_x = spec.width - kBorderMargin - x1;
    const double lo_y = kBorderMargin - y0, hi_y = spec.height - kBorderMargin - y1;
    if (hi_x < lo_x || hi_y < lo_y) return cand;  // does not fit; rejected by inside_frame
    const double dx = rng.uniform(lo_x, hi_x), dy = rng.uniform(lo_y, hi_y);
    for (auto& v : cand.polygon.vertices) {
        v.x += dx;
        v.y += dy;
    }
    cand.center = {dx, dy};
    return cand;
}

// Parallel partner of `anchor` whose facing edge sits within (0, 2] grid cells.
Candidate adjacent_instance(const SceneSpec& spec, const Candidate& anchor, Rng& rng) {
    Candidate cand;
    const double stroke = rng.uniform(spec.stroke_min(), std::max(spec.stroke_min(), anchor.info.stroke));
    const double length = anchor.info.length * rng.uniform(0.8, 1.0);
    const double gap = rng.uniform(0.5, 2.0) * kGridScale;
    const double offset = anchor.info.stroke / 2 + gap + stroke / 2;
    const double side = rng.coin() ? 1.0 : -1.0;
    const double nx = -std::sin(anchor.angle), ny = std::cos(anchor.angle);
    cand.center = {anchor.center.x + side * offset * nx, anchor.center.y + side * offset * ny};
    cand.angle = anchor.angle;
    cand.polygon = oriented_rect(cand.center, cand.angle, length, stroke);
    cand.info.kind = ShapeKind::Quad;
    cand.info.stroke = stroke;
    cand.info.length = length;
    return cand;
}

void paint_background(Image& image, Rng& rng) {
    constexpr int kCoarse = 5;
    for (int c = 0; c < 3; ++c) {
        const double base = rng.uniform(0.42, 0.58);
        double grid[kCoarse][kCoarse];
        for (auto& row : grid) {
            for (auto& v : row) v = rng.uniform(-1.0, 1.0);
        }
        for (int y = 0; y < image.height; ++y) {
            const double gy = static_cast<double>(y) / std::max(1, image.height - 1) * (kCoarse - 1);
            const int y0 = std::min(static_cast<int>(gy), kCoarse - 2);
            const double ty = gy - y0;
            for (int x = 0; x < image.width; ++x) {
                const double gx = static_cast<double>(x) / std::max(1, image.width - 1) * (kCoarse - 1);
                const int x0 = std::min(static_cast<int>(gx), kCoarse - 2);
                const double tx = gx - x0;
                const double v = (grid[y0][x0] * (1 - tx) + grid[y0][x0 + 1] * tx) * (1 - ty) +
                                 (grid[y0 + 1][x0] * (1 - tx) + grid[y0 + 1][x0 + 1] * tx) * ty;
                image.at(c, x, y) = base + 0.04 * v + rng.uniform(-0.01, 0.01);
            }
        }
    }
}

} // namespace

void SceneSpec::validate() const {
    if (width < 16 || height < 16) throw Error(ErrorCode::InvalidArgument, "scene must be at least 16x16");
    if (min_instances < 1 || max_instances < min_instances || max_instances > 8) {
        throw Error(ErrorCode::InvalidArgument, "instance range must satisfy 1 <= min <= max <= 8");
    }
    if (!(min_aspect >= 1.0) || max_aspect < min_aspect) {
        throw Error(ErrorCode::InvalidArgument, "aspect range must satisfy 1 <= min <= max");
    }
    if (adjacent && max_instances < 2) throw Error(ErrorCode::InvalidArgument, "adjacency needs two instances");
    if (min_gap_cells < 0) throw Error(ErrorCode::InvalidArgument, "min gap must be non-negative");
    if (stroke_max() < stroke_min()) throw Error(ErrorCode::InvalidArgument, "stroke range is empty");
}

double SceneSpec::stroke_min() const {
    return min_stroke_px > 0 ? min_stroke_px : std::max(6.0, std::min(width, height) / 16.0);
}

double SceneSpec::stroke_max() const {
    return max_stroke_px > 0 ? max_stroke_px : std::max(stroke_min(), std::min(width, height) / 8.0);
}

SceneSample generate_scene(const SceneSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    SceneSample sample;
    sample.spec = spec;
    sample.image = Image(spec.width, spec.height);
    paint_background(sample.image, rng);

    const int lo = spec.adjacent ? std::max(2, spec.min_instances) : spec.min_instances;
    const int count = rng.integer(lo, spec.max_instances);
    const GridDims grid = grid_dims_for(spec.width, spec.height);
    const double min_gap_px = spec.min_gap_cells * kGridScale;
    // Busy scenes get shorter instances so the last ones still fit.
    const double crowding = 1.0 - 0.1 * (count - 1);

    std::vector<Candidate> placed;
    for (int i = 0; i < count; ++i) {
        bool ok = false;
        for (int attempt = 0; attempt < kPlacementAttempts && !ok; ++attempt) {
            const bool partner = spec.adjacent && i == 1;
            Candidate cand = partner ? adjacent_instance(spec, placed[0], rng)
                                     : random_instance(spec, rng, spec.curved && !(spec.adjacent && i == 0),
                                                       crowding * (1.0 - 0.5 * attempt / kPlacementAttempts));
            if (!inside_frame(cand.polygon, spec.width, spec.height) || !is_simple(cand.polygon)) continue;
            if (rasterize_polygon(scale_polygon(cand.polygon, 1.0 / kGridScale), grid.width, grid.height).empty()) {
                continue;
            }
            ok = true;
            for (std::size_t j = 0; j < placed.size() && ok; ++j) {
                const double dist = polygon_distance(cand.polygon, placed[j].polygon);
                if (partner && j == 0) {
                    ok = dist > 0.0 && dist <= 2.0 * kGridScale;
                } else {
                    ok = dist >= min_gap_px;
                }
            }
            if (ok) placed.push_back(std::move(cand));
        }
        if (!ok) {
            throw Error(ErrorCode::PlacementFailed, "could not place instance " + std::to_string(i) + " of " +
                                                        std::to_string(count) + " (seed " +
                                                        std::to_string(spec.seed) + ")");
        }
    }

    // Distinct corners of the RGB cube; all lie >= 0.3 from the mid-gray background per channel.
    std::array<int, 8> corners{0, 1, 2, 3, 4, 5, 6, 7};
    for (int i = 7; i > 0; --i) std::swap(corners[static_cast<std::size_t>(i)], corners[static_cast<std::size_t>(rng.integer(0, i))]);
    for (std::size_t i = 0; i < placed.size(); ++i) {
        auto& info = placed[i].info;
        const int corner = corners[i % corners.size()];
        for (int c = 0; c < 3; ++c) {
            info.color[static_cast<std::size_t>(c)] = ((corner >> c) & 1) ? rng.uniform(0.95, 1.0) : rng.uniform(0.0, 0.05);
        }
        const BinaryMask mask = rasterize_polygon(placed[i].polygon, spec.width, spec.height);
        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                if (!mask.at(x, y)) continue;
                for (int c = 0; c < 3; ++c) sample.image.at(c, x, y) = info.color[static_cast<std::size_t>(c)];
            }
        }
        sample.polygons.push_back(placed[i].polygon);
        sample.instances.push_back(info);
    }
    quantize_8bit(sample.image);
    return sample;
}

CorpusManifest generate_corpus(const SceneSpec& base, int count, const std::string& out_dir) {
    namespace fs = std::filesystem;
    if (count < 0) throw Error(ErrorCode::InvalidArgument, "scene count must be non-negative");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir + ": " + ec.message());

    CorpusManifest manifest;
    manifest.base_seed = base.seed;
    manifest.width = base.width;
    manifest.height = base.height;
    nlohmann::json scenes = nlohmann::json::array();
    for (int i = 0; i < count; ++i) {
        SceneSpec spec = base;
        spec.seed = base.seed + static_cast<std::uint64_t>(i);
        const SceneSample sample = generate_scene(spec);
        CorpusEntry entry;
        entry.image_file = "scene_" + std::to_string(i) + ".ppm";
        entry.annotation_file = "scene_" + std::to_string(i) + ".txt";
        entry.seed = spec.seed;
        entry.instances = static_cast<int>(sample.polygons.size());
        write_ppm((fs::path(out_dir) / entry.image_file).string(), sample.image);
        write_polygon_file((fs::path(out_dir) / entry.annotation_file).string(), sample.polygons);
        manifest.total_instances += entry.instances;
        scenes.push_back({{"image", entry.image_file},
                          {"annotation", entry.annotation_file},
                          {"seed", entry.seed},
                          {"instances", entry.instances}});
        manifest.scenes.push_back(std::move(entry));
    }

    nlohmann::json j;
    j["base_seed"] = manifest.base_seed;
    j["count"] = count;
    j["width"] = base.width;
    j["height"] = base.height;
    j["min_instances"] = base.min_instances;
    j["max_instances"] = base.max_instances;
    j["min_aspect"] = base.min_aspect;
    j["max_aspect"] = base.max_aspect;
    j["curved"] = base.curved;
    j["adjacent"] = base.adjacent;
    j["min_gap_cells"] = base.min_gap_cells;
    j["total_instances"] = manifest.total_instances;
    j["scenes"] = std::move(scenes);
    std::ofstream out((fs::path(out_dir) / "manifest.json").string(), std::ios::binary);
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::IoError, "cannot write manifest in " + out_dir);
    return manifest;
}

CorpusManifest read_manifest(const std::string& corpus_dir) {
    namespace fs = std::filesystem;
    const std::string path = (fs::path(corpus_dir) / "manifest.json").string();
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    CorpusManifest m;
    try {
        const auto j = nlohmann::json::parse(in);
        m.base_seed = j.at("base_seed").get<std::uint64_t>();
        m.width = j.at("width").get<int>();
        m.height = j.at("height").get<int>();
        m.total_instances = j.at("total_instances").get<int>();
        for (const auto& s : j.at("scenes")) {
            m.scenes.push_back({s.at("image").get<std::string>(), s.at("annotation").get<std::string>(),
                                s.at("seed").get<std::uint64_t>(), s.at("instances").get<int>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path + ": " + e.what());
    }
    return m;
}

std::vector<CorpusScene> load_corpus(const std::string& corpus_dir) {
    namespace fs = std::filesystem;
    const CorpusManifest manifest = read_manifest(corpus_dir);
    std::vector<CorpusScene> scenes;
    for (const auto& entry : manifest.scenes) {
        CorpusScene s;
        s.name = fs::path(entry.image_file).stem().string();
        s.image = read_ppm((fs::path(corpus_dir) / entry.image_file).string());
        s.polygons = read_polygon_file((fs::path(corpus_dir) / entry.annotation_file).string());
        scenes.push_back(std::move(s));
    }
    return scenes;
}

} // namespace tpf
