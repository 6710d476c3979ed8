#pragma once

#include "tpf/geometry.hpp"

#include <string>
#include <vector>

namespace tpf {

// Planar RGB image with values in [0, 1]. Channel c, pixel (x, y) is at
// data[(c * height + y) * width + x].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(3) * w * h, 0.0) {}

    double& at(int c, int x, int y) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    double at(int c, int x, int y) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }

    friend bool operator==(const Image&, const Image&) = default;
};

/// Rounds every value to the nearest multiple of 1/255 so that PPM round trips are exact.
void quantize_8bit(Image& image);

/// Bilinear resample (half-pixel centers) to the given size.
Image resize_bilinear(const Image& image, int width, int height);

// NetPBM binary formats. Masks use P5 with 0/255 samples; images use P6.
void write_pgm(const std::string& path, const BinaryMask& mask);
BinaryMask read_pgm(const std::string& path);
void write_gray_pgm(const std::string& path, const std::vector<double>& values, int width, int height);
void write_ppm(const std::string& path, const Image& image);
Image read_ppm(const std::string& path);

} // namespace tpf
