#include "tpf/geometry.hpp"

#include "tpf/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <sstream>

namespace tpf {

namespace {

double cross(Point2 o, Point2 a, Point2 b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool on_segment(Point2 p, Point2 a, Point2 b) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
           std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

bool segments_intersect(Point2 a, Point2 b, Point2 c, Point2 d) {
    const int d1 = sign(cross(c, d, a));
    const int d2 = sign(cross(c, d, b));
    const int d3 = sign(cross(a, b, c));
    const int d4 = sign(cross(a, b, d));
    if (d1 != d2 && d3 != d4 && d1 != 0 && d2 != 0 && d3 != 0 && d4 != 0) {
        return true;
    }
    if (d1 == 0 && on_segment(a, c, d)) return true;
    if (d2 == 0 && on_segment(b, c, d)) return true;
    if (d3 == 0 && on_segment(c, a, b)) return true;
    if (d4 == 0 && on_segment(d, a, b)) return true;
    return false;
}

double point_segment_distance(Point2 p, Point2 a, Point2 b) {
    const double vx = b.x - a.x;
    const double vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = 0.0;
    if (len2 > 0.0) {
        t = std::clamp(((p.x - a.x) * vx + (p.y - a.y) * vy) / len2, 0.0, 1.0);
    }
    const double dx = p.x - (a.x + t * vx);
    const double dy = p.y - (a.y + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

// x coordinate where the edge crosses the horizontal line y; caller guarantees a crossing.
double edge_crossing_x(Point2 p0, Point2 p1, double y) {
    return p0.x + (y - p0.y) * (p1.x - p0.x) / (p1.y - p0.y);
}

bool crosses(Point2 p0, Point2 p1, double y) { return (p0.y > y) != (p1.y > y); }

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

} // namespace

double Polygon::signed_area() const {
    double sum = 0.0;
    const std::size_t n = vertices.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point2& a = vertices[i];
        const Point2& b = vertices[(i + 1) % n];
        sum += a.x * b.y - b.x * a.y;
    }
    return 0.5 * sum;
}

double Polygon::area() const { return std::abs(signed_area()); }

void validate_polygon(const Polygon& polygon) {
    if (polygon.vertices.size() < 3) {
        throw Error(ErrorCode::InvalidPolygon,
                    "polygon needs at least 3 vertices, got " + std::to_string(polygon.vertices.size()));
    }
    for (const auto& v : polygon.vertices) {
        if (!std::isfinite(v.x) || !std::isfinite(v.y)) {
            throw Error(ErrorCode::InvalidPolygon, "non-finite vertex");
        }
    }
    if (!(polygon.area() > 0.0)) {
        throw Error(ErrorCode::InvalidPolygon, "polygon has zero area");
    }
}

bool is_simple(const Polygon& polygon) {
    const auto& v = polygon.vertices;
    const std::size_t n = v.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
            if (adjacent) continue;
            if (segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n])) return false;
        }
    }
    return true;
}

bool point_in_polygon(const Polygon& polygon, Point2 p) {
    const auto& v = polygon.vertices;
    bool inside = false;
    for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
        if (crosses(v[j], v[i], p.y) && edge_crossing_x(v[j], v[i], p.y) > p.x) inside = !inside;
    }
    return inside;
}

double polygon_distance(const Polygon& a, const Polygon& b) {
    const auto& va = a.vertices;
    const auto& vb = b.vertices;
    for (std::size_t i = 0; i < va.size(); ++i) {
        for (std::size_t j = 0; j < vb.size(); ++j) {
            if (segments_intersect(va[i], va[(i + 1) % va.size()], vb[j], vb[(j + 1) % vb.size()])) {
                return 0.0;
            }
        }
    }
    if (point_in_polygon(a, vb.front()) || point_in_polygon(b, va.front())) return 0.0;

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < va.size(); ++i) {
        for (std::size_t j = 0; j < vb.size(); ++j) {
            best = std::min(best, point_segment_distance(va[i], vb[j], vb[(j + 1) % vb.size()]));
            best = std::min(best, point_segment_distance(vb[j], va[i], va[(i + 1) % va.size()]));
        }
    }
    return best;
}

Polygon scale_polygon(const Polygon& polygon, double factor) {
    Polygon out = polygon;
    for (auto& v : out.vertices) {
        v.x *= factor;
        v.y *= factor;
    }
    return out;
}

BinaryMask::BinaryMask(int width, int height) : width_(width), height_(height) {
    if (width < 0 || height < 0) {
        throw Error(ErrorCode::InvalidArgument, "negative mask dimensions");
    }
    bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
}

bool BinaryMask::empty() const {
    return std::find(bits_.begin(), bits_.end(), std::uint8_t{1}) == bits_.end();
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMask LabeledRegions::region_mask(int label) const {
    BinaryMask mask(width, height);
    for (std::size_t i = 0; i < label_grid.size(); ++i) {
        if (label_grid[i] == label) mask.bits()[i] = 1;
    }
    return mask;
}

std::size_t LabeledRegions::region_size(int label) const {
    return static_cast<std::size_t>(std::count(label_grid.begin(), label_grid.end(), label));
}

BinaryMask rasterize_polygon(const Polygon& polygon, int width, int height) {
    validate_polygon(polygon);
    if (width < 1 || height < 1) {
        throw Error(ErrorCode::InvalidArgument, "raster dimensions must be positive");
    }
    BinaryMask mask(width, height);
    const auto& v = polygon.vertices;
    std::vector<double> xs;
    xs.reserve(v.size());

    double min_y = v.front().y;
    double max_y = v.front().y;
    for (const auto& p : v) {
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    const int row_begin = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
    const int row_end = std::min(height - 1, static_cast<int>(std::ceil(max_y)));

    for (int row = row_begin; row <= row_end; ++row) {
        const double yc = row + 0.5;
        xs.clear();
        for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
            if (crosses(v[j], v[i], yc)) xs.push_back(edge_crossing_x(v[j], v[i], yc));
        }
        std::sort(xs.begin(), xs.end());
        // A center is inside iff an odd number of crossings lie strictly to its right,
        // i.e. xs[2k] <= xc < xs[2k+1].
        for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
            const double lo = xs[k];
            const double hi = xs[k + 1];
            int col = std::max(0, static_cast<int>(std::floor(lo - 0.5)) - 1);
            for (; col < width; ++col) {
                const double xc = col + 0.5;
                if (xc >= hi) break;
                if (xc >= lo) mask.set(col, row);
            }
        }
    }
    return mask;
}

LabeledRegions connected_components(const BinaryMask& mask) {
    LabeledRegions out;
    out.width = mask.width();
    out.height = mask.height();
    out.label_grid.assign(mask.size(), 0);

    std::deque<CellPoint> queue;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.at(x, y) || out.at(x, y) != 0) continue;
            const int label = ++out.region_count;
            out.label_grid[static_cast<std::size_t>(y) * out.width + x] = label;
            queue.push_back({x, y});
            while (!queue.empty()) {
                const CellPoint c = queue.front();
                queue.pop_front();
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = c.x + dx;
                        const int ny = c.y + dy;
                        if (!mask.contains(nx, ny) || !mask.at(nx, ny)) continue;
                        int& slot = out.label_grid[static_cast<std::size_t>(ny) * out.width + nx];
                        if (slot != 0) continue;
                        slot = label;
                        queue.push_back({nx, ny});
                    }
                }
            }
        }
    }
    return out;
}

Polygon trace_contour(const LabeledRegions& regions, int label) {
    if (label < 1 || label > regions.region_count) {
        throw Error(ErrorCode::LabelNotFound, "label " + std::to_string(label) + " not in 1.." +
                                                  std::to_string(regions.region_count));
    }
    const auto inside = [&](int x, int y) {
        return x >= 0 && y >= 0 && x < regions.width && y < regions.height && regions.at(x, y) == label;
    };

    // Topmost-leftmost cell: its top-left corner is a convex corner visited exactly once.
    CellPoint start{-1, -1};
    for (int y = 0; y < regions.height && start.x < 0; ++y) {
        for (int x = 0; x < regions.width; ++x) {
            if (regions.at(x, y) == label) {
                start = {x, y};
                break;
            }
        }
    }
    if (start.x < 0) {
        throw Error(ErrorCode::LabelNotFound, "label " + std::to_string(label) + " has no cells");
    }

    // Walk the cell-corner lattice keeping the region on the right. At each corner the two
    // cells ahead decide the turn; checking ahead-left first keeps diagonal neighbours joined.
    Polygon contour;
    int px = start.x;
    int py = start.y;
    int dx = 1;
    int dy = 0;
    contour.vertices.push_back({static_cast<double>(px), static_cast<double>(py)});
    px += dx;
    py += dy;

    const std::size_t step_limit = 4 * regions.label_grid.size() + 8;
    for (std::size_t steps = 0; !(px == start.x && py == start.y); ++steps) {
        if (steps > step_limit) {
            throw Error(ErrorCode::InvalidArgument, "contour tracing did not close");
        }
        const int lx = dy, ly = -dx;   // left of heading (y grows downward)
        const int rx = -dy, ry = dx;   // right of heading
        // Cell containing corner + 0.5*heading + 0.5*side.
        const auto cell_at = [&](int sx, int sy) {
            const double cx = px + 0.5 * dx + 0.5 * sx;
            const double cy = py + 0.5 * dy + 0.5 * sy;
            return CellPoint{static_cast<int>(std::floor(cx)), static_cast<int>(std::floor(cy))};
        };
        const CellPoint ahead_left = cell_at(lx, ly);
        const CellPoint ahead_right = cell_at(rx, ry);

        int ndx = dx;
        int ndy = dy;
        if (inside(ahead_left.x, ahead_left.y)) {
            ndx = lx;
            ndy = ly;
        } else if (!inside(ahead_right.x, ahead_right.y)) {
            ndx = rx;
            ndy = ry;
        }
        if (ndx != dx || ndy != dy) {
            contour.vertices.push_back({static_cast<double>(px), static_cast<double>(py)});
        }
        dx = ndx;
        dy = ndy;
        px += dx;
        py += dy;
    }
    return contour;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
    if (a.width() != b.width() || a.height() != b.height()) {
        throw Error(ErrorCode::ShapeMismatch, "mask_iou needs equal dimensions");
    }
    std::size_t inter = 0;
    std::size_t uni = 0;
    const auto& ba = a.bits();
    const auto& bb = b.bits();
    for (std::size_t i = 0; i < ba.size(); ++i) {
        inter += (ba[i] & bb[i]);
        uni += (ba[i] | bb[i]);
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
    if (a.width() != b.width() || a.height() != b.height()) {
        throw Error(ErrorCode::ShapeMismatch, "mask_union needs equal dimensions");
    }
    BinaryMask out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.bits()[i] |= b.bits()[i];
    return out;
}

BinaryMask upscale_mask(const BinaryMask& mask, int factor, int out_width, int out_height) {
    if (factor < 1) throw Error(ErrorCode::InvalidArgument, "upscale factor must be positive");
    BinaryMask out(out_width, out_height);
    const int cover_w = std::min(out_width, mask.width() * factor);
    const int cover_h = std::min(out_height, mask.height() * factor);
    std::uint8_t* dst = out.bits().data();
    const std::uint8_t* src = mask.bits().data();
    const std::size_t row = static_cast<std::size_t>(out_width);
    for (int y = 0; y < cover_h; ++y) {
        std::uint8_t* line = dst + static_cast<std::size_t>(y) * row;
        if (y % factor != 0) {
            // Rows within one cell repeat the first.
            std::copy_n(line - row, cover_w, line);
            continue;
        }
        const std::uint8_t* cells = src + static_cast<std::size_t>(y / factor) * static_cast<std::size_t>(mask.width());
        for (int x = 0; x < cover_w; ++x) line[x] = cells[x / factor];
    }
    return out;
}

Polygon parse_polygon_line(const std::string& line) {
    const std::string text = trim(line);
    std::vector<double> values;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        const std::string token = trim(text.substr(pos, comma - pos));
        double value = 0.0;
        const auto* first = token.data();
        const auto* last = token.data() + token.size();
        const auto [ptr, ec] = std::from_chars(first, last, value);
        if (token.empty() || ec != std::errc{} || ptr != last) {
            throw Error(ErrorCode::ParseError, "bad coordinate '" + token + "'");
        }
        values.push_back(value);
        pos = comma + 1;
    }
    if (values.size() % 2 != 0) {
        throw Error(ErrorCode::ParseError, "odd number of coordinates");
    }
    Polygon polygon;
    for (std::size_t i = 0; i < values.size(); i += 2) {
        polygon.vertices.push_back({values[i], values[i + 1]});
    }
    return polygon;
}

std::string format_polygon_line(const Polygon& polygon) {
    std::string out;
    char buf[64];
    for (std::size_t i = 0; i < polygon.vertices.size(); ++i) {
        for (double value : {polygon.vertices[i].x, polygon.vertices[i].y}) {
            if (!out.empty()) out.push_back(',');
            const auto res = std::to_chars(buf, buf + sizeof(buf), value);
            out.append(buf, res.ptr);
        }
    }
    return out;
}

std::vector<Polygon> read_polygon_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    std::vector<Polygon> polygons;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (trim(line).empty()) continue;
        const std::string where = path + ":" + std::to_string(line_number);
        Polygon polygon;
        try {
            polygon = parse_polygon_line(line);
            validate_polygon(polygon);
        } catch (const Error& e) {
            throw Error(e.code() == ErrorCode::ParseError ? ErrorCode::ParseError : ErrorCode::InvalidPolygon,
                        where + ": " + e.what());
        }
        if (!is_simple(polygon)) {
            throw Error(ErrorCode::InvalidPolygon, where + ": self-intersecting polygon");
        }
        polygons.push_back(std::move(polygon));
    }
    return polygons;
}

void write_polygon_file(const std::string& path, const std::vector<Polygon>& polygons) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    for (const auto& p : polygons) out << format_polygon_line(p) << '\n';
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

} // namespace tpf
