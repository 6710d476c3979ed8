#include "tpf/micronet.hpp"

#include "tpf/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace tpf::net {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

int output_extent(int in, int kernel, int stride) {
    const int pad = kernel / 2;
    return (in + 2 * pad - kernel) / stride + 1;
}

void check_input(const FeatureMap& input, const ConvLayer& layer) {
    if (input.channels != layer.in_channels) {
        throw Error(ErrorCode::ShapeMismatch, "conv expects " + std::to_string(layer.in_channels) +
                                                  " input channels, got " + std::to_string(input.channels));
    }
    if (layer.weight.size() !=
            static_cast<std::size_t>(layer.out_channels) * layer.in_channels * layer.kernel * layer.kernel ||
        layer.bias.size() != static_cast<std::size_t>(layer.out_channels)) {
        throw Error(ErrorCode::ShapeMismatch, "conv weight/bias sizes do not match layer shape");
    }
}

// Eigen picks its vectorized summation order from the operand addresses, so every product runs on
// Eigen-owned (fully aligned) storage to keep results independent of where std::vector allocated.
RowMatrix aligned_copy(const double* data, Eigen::Index rows, Eigen::Index cols) {
    return Eigen::Map<const RowMatrix>(data, rows, cols);
}

// Rows are (channel, ky, kx), columns are output cells.
RowMatrix im2col(const FeatureMap& input, int kernel, int stride, int out_h, int out_w) {
    const int pad = kernel / 2;
    const std::size_t cells = static_cast<std::size_t>(out_h) * out_w;
    RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(input.channels) * kernel * kernel,
                                     static_cast<Eigen::Index>(cells));
    std::size_t row = 0;
    for (int c = 0; c < input.channels; ++c) {
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx, ++row) {
                double* dst = cols.data() + row * cells;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= input.height) continue;
                    const double* src = input.values.data() + (static_cast<std::size_t>(c) * input.height + iy) * input.width;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < input.width) dst[static_cast<std::size_t>(oy) * out_w + ox] = src[ix];
                    }
                }
            }
        }
    }
    return cols;
}

void col2im(const RowMatrix& cols, FeatureMap& grad_input, int kernel, int stride, int out_h, int out_w) {
    const int pad = kernel / 2;
    const std::size_t cells = static_cast<std::size_t>(out_h) * out_w;
    std::size_t row = 0;
    for (int c = 0; c < grad_input.channels; ++c) {
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx, ++row) {
                const double* src = cols.data() + row * cells;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= grad_input.height) continue;
                    double* dst = grad_input.values.data() +
                                  (static_cast<std::size_t>(c) * grad_input.height + iy) * grad_input.width;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < grad_input.width) dst[ix] += src[static_cast<std::size_t>(oy) * out_w + ox];
                    }
                }
            }
        }
    }
}

bool is_pointwise(const ConvLayer& layer) { return layer.kernel == 1 && layer.stride == 1; }

} // namespace

ConvLayer::ConvLayer(int in, int out, int k, int s)
    : in_channels(in), out_channels(out), kernel(k), stride(s),
      weight(static_cast<std::size_t>(out) * in * k * k, 0.0), bias(static_cast<std::size_t>(out), 0.0) {
    if (in < 1 || out < 1 || (k != 1 && k != 3) || s < 1) {
        throw Error(ErrorCode::InvalidArgument, "unsupported conv layer shape");
    }
}

DenseLayer::DenseLayer(int in, int out)
    : in_features(in), out_features(out), weight(static_cast<std::size_t>(in) * out, 0.0),
      bias(static_cast<std::size_t>(out), 0.0) {}

FeatureMap conv_forward(const FeatureMap& input, const ConvLayer& layer) {
    check_input(input, layer);
    const int out_h = output_extent(input.height, layer.kernel, layer.stride);
    const int out_w = output_extent(input.width, layer.kernel, layer.stride);
    const Eigen::Index cells = static_cast<Eigen::Index>(out_h) * out_w;
    const Eigen::Index depth = static_cast<Eigen::Index>(layer.in_channels) * layer.kernel * layer.kernel;

    const RowMatrix weight = aligned_copy(layer.weight.data(), layer.out_channels, depth);
    const RowMatrix cols = is_pointwise(layer) ? aligned_copy(input.values.data(), depth, cells)
                                               : im2col(input, layer.kernel, layer.stride, out_h, out_w);
    RowMatrix out(layer.out_channels, cells);
    out.noalias() = weight * cols;

    FeatureMap output(layer.out_channels, out_h, out_w);
    for (int o = 0; o < layer.out_channels; ++o) {
        double* dst = output.values.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(cells);
        for (Eigen::Index i = 0; i < cells; ++i) dst[i] = out(o, i) + layer.bias[static_cast<std::size_t>(o)];
    }
    return output;
}

ConvGrads conv_backward(const FeatureMap& grad_output, const FeatureMap& input, const ConvLayer& layer,
                        bool want_input) {
    check_input(input, layer);
    const int out_h = output_extent(input.height, layer.kernel, layer.stride);
    const int out_w = output_extent(input.width, layer.kernel, layer.stride);
    if (grad_output.channels != layer.out_channels || grad_output.height != out_h || grad_output.width != out_w) {
        throw Error(ErrorCode::ShapeMismatch, "conv_backward: gradient shape does not match forward output");
    }
    const Eigen::Index cells = static_cast<Eigen::Index>(out_h) * out_w;
    const Eigen::Index depth = static_cast<Eigen::Index>(layer.in_channels) * layer.kernel * layer.kernel;

    ConvGrads grads;
    grads.grad_bias.assign(layer.bias.size(), 0.0);
    for (int o = 0; o < layer.out_channels; ++o) {
        const double* src = grad_output.values.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(cells);
        double sum = 0.0;
        for (Eigen::Index i = 0; i < cells; ++i) sum += src[i];
        grads.grad_bias[static_cast<std::size_t>(o)] = sum;
    }

    const RowMatrix g = aligned_copy(grad_output.values.data(), layer.out_channels, cells);
    const RowMatrix cols = is_pointwise(layer) ? aligned_copy(input.values.data(), depth, cells)
                                               : im2col(input, layer.kernel, layer.stride, out_h, out_w);
    RowMatrix gw(layer.out_channels, depth);
    gw.noalias() = g * cols.transpose();
    grads.grad_weight.assign(gw.data(), gw.data() + gw.size());

    if (want_input) {
        const RowMatrix weight = aligned_copy(layer.weight.data(), layer.out_channels, depth);
        RowMatrix gc(depth, cells);
        gc.noalias() = weight.transpose() * g;
        grads.grad_input = FeatureMap(input.channels, input.height, input.width);
        if (is_pointwise(layer)) {
            std::copy(gc.data(), gc.data() + gc.size(), grads.grad_input.values.begin());
        } else {
            col2im(gc, grads.grad_input, layer.kernel, layer.stride, out_h, out_w);
        }
    }
    return grads;
}

void relu_inplace(FeatureMap& x) {
    for (auto& v : x.values) v = v > 0.0 ? v : 0.0;
}

void relu_backward_inplace(FeatureMap& grad, const FeatureMap& activated) {
    if (grad.values.size() != activated.values.size()) {
        throw Error(ErrorCode::ShapeMismatch, "relu_backward: shape mismatch");
    }
    for (std::size_t i = 0; i < grad.values.size(); ++i) {
        if (!(activated.values[i] > 0.0)) grad.values[i] = 0.0;
    }
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double sigmoid_derivative(double z) {
    const double s = sigmoid(z);
    return s * (1.0 - s);
}

} // namespace tpf::net
