#pragma once

#include "tpf/geometry.hpp"

#include <string>
#include <vector>

namespace tpf {

inline constexpr int kGridScale = 4;

struct LabelConfig {
    int points_per_text = 5;
    double valid_fraction = 0.5;

    void validate() const;
};

struct GridDims {
    int width = 0;
    int height = 0;

    friend bool operator==(const GridDims&, const GridDims&) = default;
};

/// Quarter-resolution grid for an image: ceil(H/4) x ceil(W/4).
GridDims grid_dims_for(int image_width, int image_height);

struct InstanceMaskStack {
    std::vector<BinaryMask> masks;
    /// Source polygon index of each mask.
    std::vector<int> source_index;
    /// One entry per polygon dropped because it covered no grid cell.
    std::vector<std::string> warnings;

    int count() const { return static_cast<int>(masks.size()); }
};

struct CenterPoint {
    int x = 0;
    int y = 0;
    int instance_id = 0;

    friend bool operator==(const CenterPoint&, const CenterPoint&) = default;
};

struct CenterPointSet {
    std::vector<CenterPoint> points;

    int size() const { return static_cast<int>(points.size()); }
    std::vector<CellPoint> cells() const;
};

/// Dense n x n 0/1 relation, row-major.
struct ReinforcementMatrix {
    int n = 0;
    std::vector<std::uint8_t> bits;

    ReinforcementMatrix() = default;
    explicit ReinforcementMatrix(int size) : n(size), bits(static_cast<std::size_t>(size) * size, 0) {}

    bool at(int r, int c) const { return bits[static_cast<std::size_t>(r) * n + c] != 0; }
    void set(int r, int c, bool v) { bits[static_cast<std::size_t>(r) * n + c] = v ? 1 : 0; }

    bool is_symmetric() const;
    bool has_unit_diagonal() const;

    friend bool operator==(const ReinforcementMatrix&, const ReinforcementMatrix&) = default;
};

InstanceMaskStack build_instance_stack(const std::vector<Polygon>& polygons, int image_width, int image_height);

/// Equidistant points along the long axis of the mask's central part. The axis is x when the
/// bounding box is wider than tall, y otherwise. Returns distinct foreground cells.
std::vector<CellPoint> sample_center_points(const BinaryMask& mask, const LabelConfig& config);

/// Samples every instance in stack order; instance_id is the index into the stack.
CenterPointSet sample_all_center_points(const InstanceMaskStack& stack, const LabelConfig& config);

BinaryMask build_center_point_mask(const CenterPointSet& points, GridDims dims);

ReinforcementMatrix build_reinforcement_matrix(const CenterPointSet& points);

BinaryMask build_foreground_mask(const std::vector<Polygon>& polygons, int image_width, int image_height);

/// Everything a training step needs for one scene.
struct LabelBundle {
    GridDims dims;
    InstanceMaskStack stack;
    CenterPointSet points;
    BinaryMask center_mask;
    BinaryMask foreground;
    ReinforcementMatrix matrix;
};

LabelBundle build_label_bundle(const std::vector<Polygon>& polygons, int image_width, int image_height,
                               const LabelConfig& config);

/// Writes foreground.pgm, centers.pgm, instances/<k>.pgm, matrix.csv and points.csv into dir.
void write_label_bundle(const std::string& dir, const LabelBundle& bundle);

} // namespace tpf
