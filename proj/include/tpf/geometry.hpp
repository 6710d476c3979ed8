#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace tpf {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

struct CellPoint {
    int x = 0;
    int y = 0;

    friend bool operator==(const CellPoint&, const CellPoint&) = default;
};

/// Closed polygon in pixel coordinates. The last vertex connects back to the first.
struct Polygon {
    std::vector<Point2> vertices;

    double signed_area() const;
    double area() const;
};

/// Throws InvalidPolygon unless the polygon has at least three vertices and non-zero area.
void validate_polygon(const Polygon& polygon);

/// True when no two non-adjacent edges intersect.
bool is_simple(const Polygon& polygon);

/// Euclidean distance between polygon boundaries; 0 if they intersect or one contains the other.
double polygon_distance(const Polygon& a, const Polygon& b);

bool point_in_polygon(const Polygon& polygon, Point2 p);

Polygon scale_polygon(const Polygon& polygon, double factor);

// Row-major boolean grid. Cell (x, y) covers [x, x+1) x [y, y+1).
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return bits_.size(); }

    bool at(int x, int y) const { return bits_[index(x, y)] != 0; }
    void set(int x, int y, bool value = true) { bits_[index(x, y)] = value ? 1 : 0; }
    bool contains(int x, int y) const noexcept {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }

    std::size_t count() const;
    bool empty() const;

    const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }
    std::vector<std::uint8_t>& bits() noexcept { return bits_; }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

struct LabeledRegions {
    int width = 0;
    int height = 0;
    std::vector<int> label_grid;
    int region_count = 0;

    int at(int x, int y) const { return label_grid[static_cast<std::size_t>(y) * width + x]; }
    BinaryMask region_mask(int label) const;
    std::size_t region_size(int label) const;
};

/// Cell-center sampling with the even-odd rule.
BinaryMask rasterize_polygon(const Polygon& polygon, int width, int height);

/// 8-connected labelling; labels are assigned in first-encountered raster order.
LabeledRegions connected_components(const BinaryMask& mask);

/// Outer boundary of a labelled region as a clockwise polygon on the cell-corner lattice.
/// Only direction changes are emitted as vertices. Interior holes are not traced.
Polygon trace_contour(const LabeledRegions& regions, int label);

/// |a & b| / |a | b|; two empty masks give 1.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b);

/// Nearest-cell upscale by an integer factor, cropped to (out_width, out_height).
BinaryMask upscale_mask(const BinaryMask& mask, int factor, int out_width, int out_height);

// ICDAR-style polygon lines: "x1,y1,x2,y2,...,xk,yk".
Polygon parse_polygon_line(const std::string& line);
std::string format_polygon_line(const Polygon& polygon);

/// Reads one polygon per non-blank line. Malformed lines raise ParseError naming the line number;
/// self-intersecting polygons raise InvalidPolygon.
std::vector<Polygon> read_polygon_file(const std::string& path);
void write_polygon_file(const std::string& path, const std::vector<Polygon>& polygons);

} // namespace tpf
