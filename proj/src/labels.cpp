#include "tpf/labels.hpp"

#include "tpf/error.hpp"
#include "tpf/image.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace tpf {

namespace {

int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

BinaryMask rasterize_on_grid(const Polygon& polygon, GridDims dims) {
    return rasterize_polygon(scale_polygon(polygon, 1.0 / kGridScale), dims.width, dims.height);
}

} // namespace

void LabelConfig::validate() const {
    if (points_per_text < 1) throw Error(ErrorCode::InvalidArgument, "points_per_text must be >= 1");
    if (!(valid_fraction > 0.0 && valid_fraction <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "valid_fraction must be in (0, 1]");
    }
}

GridDims grid_dims_for(int image_width, int image_height) {
    return {(image_width + kGridScale - 1) / kGridScale, (image_height + kGridScale - 1) / kGridScale};
}

std::vector<CellPoint> CenterPointSet::cells() const {
    std::vector<CellPoint> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back({p.x, p.y});
    return out;
}

bool ReinforcementMatrix::is_symmetric() const {
    for (int r = 0; r < n; ++r) {
        for (int c = r + 1; c < n; ++c) {
            if (at(r, c) != at(c, r)) return false;
        }
    }
    return true;
}

bool ReinforcementMatrix::has_unit_diagonal() const {
    for (int i = 0; i < n; ++i) {
        if (!at(i, i)) return false;
    }
    return true;
}

InstanceMaskStack build_instance_stack(const std::vector<Polygon>& polygons, int image_width, int image_height) {
    if (polygons.empty()) throw Error(ErrorCode::NoValidInstances, "no polygons given");
    const GridDims dims = grid_dims_for(image_width, image_height);
    InstanceMaskStack stack;
    for (std::size_t i = 0; i < polygons.size(); ++i) {
        BinaryMask mask = rasterize_on_grid(polygons[i], dims);
        if (mask.empty()) {
            stack.warnings.push_back("polygon " + std::to_string(i) + " covers no grid cell; dropped");
            continue;
        }
        stack.masks.push_back(std::move(mask));
        stack.source_index.push_back(static_cast<int>(i));
    }
    if (stack.masks.empty()) {
        throw Error(ErrorCode::NoValidInstances, "every polygon rasterizes empty at grid resolution");
    }
    return stack;
}

std::vector<CellPoint> sample_center_points(const BinaryMask& mask, const LabelConfig& config) {
    config.validate();
    int min_x = mask.width(), max_x = -1, min_y = mask.height(), max_y = -1;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.at(x, y)) continue;
            min_x = std::min(min_x, x);
            max_x = std::max(max_x, x);
            min_y = std::min(min_y, y);
            max_y = std::max(max_y, y);
        }
    }
    if (max_x < 0) throw Error(ErrorCode::EmptyMask, "cannot sample points from an empty mask");

    const bool along_x = (max_x - min_x) > (max_y - min_y);
    const int a0 = along_x ? min_x : min_y;
    const int a1 = along_x ? max_x : max_y;
    const int c0 = along_x ? min_y : min_x;
    const int c1 = along_x ? max_y : max_x;
    const auto is_fg = [&](int a, int c) { return along_x ? mask.at(a, c) : mask.at(c, a); };

    // Central part of the extent: trim (1 - f)/2 of the cell-index span from each end.
    const double margin = (1.0 - config.valid_fraction) * (a1 - a0) / 2.0;
    const double lo = a0 + margin;
    const double hi = a1 - margin;
    int first = static_cast<int>(std::ceil(lo - 1e-9));
    int last = static_cast<int>(std::floor(hi + 1e-9));
    if (first > last) first = last = round_half_up(0.5 * (lo + hi));

    const int available = last - first + 1;
    const int count = std::min(config.points_per_text, available);

    std::vector<CellPoint> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const int target = count == 1 ? round_half_up(0.5 * (first + last))
                                      : round_half_up(first + i * static_cast<double>(last - first) / (count - 1));
        // Nearest axis position carrying foreground (ties toward the lower index).
        int axis_pos = -1;
        for (int d = 0; axis_pos < 0 && d <= a1 - a0; ++d) {
            for (int cand : {target - d, target + d}) {
                if (cand < a0 || cand > a1) continue;
                bool any = false;
                for (int c = c0; c <= c1 && !any; ++c) any = is_fg(cand, c);
                if (any) {
                    axis_pos = cand;
                    break;
                }
            }
        }
        int span_lo = c1, span_hi = c0;
        for (int c = c0; c <= c1; ++c) {
            if (is_fg(axis_pos, c)) {
                span_lo = std::min(span_lo, c);
                span_hi = std::max(span_hi, c);
            }
        }
        const int mid = round_half_up(0.5 * (span_lo + span_hi));
        int cross_pos = -1;
        for (int d = 0; cross_pos < 0 && d <= span_hi - span_lo; ++d) {
            for (int cand : {mid - d, mid + d}) {
                if (cand >= span_lo && cand <= span_hi && is_fg(axis_pos, cand)) {
                    cross_pos = cand;
                    break;
                }
            }
        }
        const CellPoint p = along_x ? CellPoint{axis_pos, cross_pos} : CellPoint{cross_pos, axis_pos};
        if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
    }
    return out;
}

CenterPointSet sample_all_center_points(const InstanceMaskStack& stack, const LabelConfig& config) {
    CenterPointSet set;
    for (int k = 0; k < stack.count(); ++k) {
        for (const auto& p : sample_center_points(stack.masks[static_cast<std::size_t>(k)], config)) {
            set.points.push_back({p.x, p.y, k});
        }
    }
    return set;
}

BinaryMask build_center_point_mask(const CenterPointSet& points, GridDims dims) {
    BinaryMask mask(dims.width, dims.height);
    for (const auto& p : points.points) {
        if (!mask.contains(p.x, p.y)) {
            throw Error(ErrorCode::PointOutOfBounds,
                        "point (" + std::to_string(p.x) + "," + std::to_string(p.y) + ") outside grid");
        }
        mask.set(p.x, p.y);
    }
    return mask;
}

ReinforcementMatrix build_reinforcement_matrix(const CenterPointSet& points) {
    const int n = points.size();
    ReinforcementMatrix m(n);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            m.set(r, c, points.points[static_cast<std::size_t>(r)].instance_id ==
                            points.points[static_cast<std::size_t>(c)].instance_id);
        }
    }
    return m;
}

BinaryMask build_foreground_mask(const std::vector<Polygon>& polygons, int image_width, int image_height) {
    const GridDims dims = grid_dims_for(image_width, image_height);
    BinaryMask fg(dims.width, dims.height);
    for (const auto& polygon : polygons) {
        const BinaryMask m = rasterize_on_grid(polygon, dims);
        for (std::size_t i = 0; i < fg.size(); ++i) fg.bits()[i] |= m.bits()[i];
    }
    return fg;
}

LabelBundle build_label_bundle(const std::vector<Polygon>& polygons, int image_width, int image_height,
                               const LabelConfig& config) {
    LabelBundle bundle;
    bundle.dims = grid_dims_for(image_width, image_height);
    bundle.stack = build_instance_stack(polygons, image_width, image_height);
    bundle.points = sample_all_center_points(bundle.stack, config);
    bundle.center_mask = build_center_point_mask(bundle.points, bundle.dims);
    bundle.foreground = build_foreground_mask(polygons, image_width, image_height);
    bundle.matrix = build_reinforcement_matrix(bundle.points);
    return bundle;
}

void write_label_bundle(const std::string& dir, const LabelBundle& bundle) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "instances", ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir + ": " + ec.message());

    write_pgm((fs::path(dir) / "foreground.pgm").string(), bundle.foreground);
    write_pgm((fs::path(dir) / "centers.pgm").string(), bundle.center_mask);
    for (int k = 0; k < bundle.stack.count(); ++k) {
        write_pgm((fs::path(dir) / "instances" / (std::to_string(k) + ".pgm")).string(),
                  bundle.stack.masks[static_cast<std::size_t>(k)]);
    }

    std::ofstream matrix((fs::path(dir) / "matrix.csv").string(), std::ios::binary);
    for (int r = 0; r < bundle.matrix.n; ++r) {
        for (int c = 0; c < bundle.matrix.n; ++c) {
            if (c) matrix << ',';
            matrix << (bundle.matrix.at(r, c) ? '1' : '0');
        }
        matrix << '\n';
    }
    std::ofstream points((fs::path(dir) / "points.csv").string(), std::ios::binary);
    points << "x,y,instance_id\n";
    for (const auto& p : bundle.points.points) points << p.x << ',' << p.y << ',' << p.instance_id << '\n';
    if (!matrix || !points) throw Error(ErrorCode::IoError, "failed writing label bundle in " + dir);
}

} // namespace tpf
