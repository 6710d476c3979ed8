#pragma once

#include <cstddef>
#include <vector>

namespace tpf {

// D-channel map on the quarter-resolution grid, channel-major: value(c, x, y) is
// values[(c * height + y) * width + x].
struct FeatureMap {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> values;

    FeatureMap() = default;
    FeatureMap(int c, int h, int w)
        : channels(c), height(h), width(w), values(static_cast<std::size_t>(c) * h * w, 0.0) {}

    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    double& at(int c, int x, int y) { return values[c * plane() + static_cast<std::size_t>(y) * width + x]; }
    double at(int c, int x, int y) const { return values[c * plane() + static_cast<std::size_t>(y) * width + x]; }

    friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

// n x D row-major block of vectors read out at center points.
struct SampledVectors {
    int rows = 0;
    int dim = 0;
    std::vector<double> data;

    SampledVectors() = default;
    SampledVectors(int n, int d) : rows(n), dim(d), data(static_cast<std::size_t>(n) * d, 0.0) {}

    double* row(int r) { return data.data() + static_cast<std::size_t>(r) * dim; }
    const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * dim; }

    friend bool operator==(const SampledVectors&, const SampledVectors&) = default;
};

} // namespace tpf
