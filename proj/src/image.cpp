#include "tpf/image.hpp"

#include "tpf/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace tpf {

namespace {

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Reads the whitespace/comment separated header tokens of a NetPBM file.
int read_header_int(std::istream& in, const std::string& path) {
    int c = in.peek();
    while (c == '#' || std::isspace(c)) {
        if (c == '#') {
            std::string skip;
            std::getline(in, skip);
        } else {
            in.get();
        }
        c = in.peek();
    }
    int value = 0;
    if (!(in >> value)) throw Error(ErrorCode::ParseError, "bad NetPBM header in " + path);
    return value;
}

std::vector<std::uint8_t> read_netpbm(const std::string& path, const char* magic, int channels, int& width,
                                      int& height) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    std::string tag;
    in >> tag;
    if (tag != magic) throw Error(ErrorCode::ParseError, path + ": expected " + magic + " header");
    width = read_header_int(in, path);
    height = read_header_int(in, path);
    const int maxval = read_header_int(in, path);
    if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) {
        throw Error(ErrorCode::ParseError, path + ": unsupported NetPBM dimensions or maxval");
    }
    in.get();
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(width) * height * channels);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
        throw Error(ErrorCode::ParseError, path + ": truncated pixel data");
    }
    if (maxval != 255) {
        for (auto& b : bytes) b = static_cast<std::uint8_t>(std::lround(255.0 * b / maxval));
    }
    return bytes;
}

void write_netpbm(const std::string& path, const char* magic, int width, int height,
                  const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    out << magic << '\n' << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

} // namespace

void quantize_8bit(Image& image) {
    for (auto& v : image.data) v = to_byte(v) / 255.0;
}

Image resize_bilinear(const Image& image, int width, int height) {
    if (width < 1 || height < 1) throw Error(ErrorCode::InvalidArgument, "resize to empty image");
    Image out(width, height);
    const double sx = static_cast<double>(image.width) / width;
    const double sy = static_cast<double>(image.height) / height;
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < height; ++y) {
            const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
            const int y0 = static_cast<int>(fy);
            const int y1 = std::min(y0 + 1, image.height - 1);
            const double ty = fy - y0;
            for (int x = 0; x < width; ++x) {
                const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
                const int x0 = static_cast<int>(fx);
                const int x1 = std::min(x0 + 1, image.width - 1);
                const double tx = fx - x0;
                const double top = image.at(c, x0, y0) * (1 - tx) + image.at(c, x1, y0) * tx;
                const double bottom = image.at(c, x0, y1) * (1 - tx) + image.at(c, x1, y1) * tx;
                out.at(c, x, y) = top * (1 - ty) + bottom * ty;
            }
        }
    }
    return out;
}

void write_pgm(const std::string& path, const BinaryMask& mask) {
    std::vector<std::uint8_t> bytes(mask.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.bits()[i] ? 255 : 0;
    write_netpbm(path, "P5", mask.width(), mask.height(), bytes);
}

BinaryMask read_pgm(const std::string& path) {
    int width = 0;
    int height = 0;
    const auto bytes = read_netpbm(path, "P5", 1, width, height);
    BinaryMask mask(width, height);
    for (std::size_t i = 0; i < bytes.size(); ++i) mask.bits()[i] = bytes[i] >= 128 ? 1 : 0;
    return mask;
}

void write_gray_pgm(const std::string& path, const std::vector<double>& values, int width, int height) {
    if (values.size() != static_cast<std::size_t>(width) * height) {
        throw Error(ErrorCode::ShapeMismatch, "gray map size does not match dimensions");
    }
    std::vector<std::uint8_t> bytes(values.size());
    std::transform(values.begin(), values.end(), bytes.begin(), to_byte);
    write_netpbm(path, "P5", width, height, bytes);
}

void write_ppm(const std::string& path, const Image& image) {
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(image.width) * image.height * 3);
    std::size_t k = 0;
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < 3; ++c) bytes[k++] = to_byte(image.at(c, x, y));
        }
    }
    write_netpbm(path, "P6", image.width, image.height, bytes);
}

Image read_ppm(const std::string& path) {
    int width = 0;
    int height = 0;
    const auto bytes = read_netpbm(path, "P6", 3, width, height);
    Image image(width, height);
    std::size_t k = 0;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c) image.at(c, x, y) = bytes[k++] / 255.0;
        }
    }
    return image;
}

} // namespace tpf
