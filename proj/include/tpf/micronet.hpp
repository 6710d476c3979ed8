#pragma once

#include "tpf/feature_map.hpp"
#include "tpf/image.hpp"
#include "tpf/labels.hpp"
#include "tpf/losses.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace tpf::net {

struct NetConfig {
    int fusion_channels = 32;  // C; the heads smooth C -> C -> C/2
    int embed_dim = 16;        // D; feature/filter channels
    std::uint64_t seed = 1;
    double lr0 = 1e-3;
    int max_iters = 2000;
    int batch = 1;
    double poly_power = 0.9;
    double init_std = 0.0;  // 0: He scaling, sqrt(2 / fan_in) per layer

    void validate() const;
    int encoder_channels() const;
};

// 2-D convolution with zero padding kernel/2. weight is [out][in][k][k].
struct ConvLayer {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;
    int stride = 1;
    std::vector<double> weight;
    std::vector<double> bias;

    ConvLayer() = default;
    ConvLayer(int in, int out, int k, int s);
};

// y = W x + b with W stored [out][in].
struct DenseLayer {
    int in_features = 0;
    int out_features = 0;
    std::vector<double> weight;
    std::vector<double> bias;

    DenseLayer() = default;
    DenseLayer(int in, int out);
};

struct HeadParams {
    ConvLayer smooth1;  // C -> C
    ConvLayer smooth2;  // C -> C/2
    ConvLayer output;
};

struct ModelParams {
    NetConfig config;
    ConvLayer enc1;    // stride 2
    ConvLayer enc2;    // stride 2
    ConvLayer fusion;  // -> C
    HeadParams center;   // 1x1 single-channel output, sigmoid
    HeadParams fpu;      // 3x3 single-channel output, sigmoid
    HeadParams feature;  // 3x3 D-channel output, linear
    HeadParams filter;   // 3x3 D-channel output, linear
    DenseLayer relation1;  // 3D -> D, ReLU
    DenseLayer relation2;  // D -> 1

    /// Architecture for the config with every weight and bias zero.
    static ModelParams zeros(const NetConfig& config);
    /// Seeded normal weights (std config.init_std, or He scaling when it is 0), zero biases.
    static ModelParams initialize(const NetConfig& config);

    /// Every parameter array in a fixed order (checkpoint order, optimizer order).
    std::vector<std::vector<double>*> arrays();
    std::vector<const std::vector<double>*> arrays() const;
    std::size_t parameter_count() const;
    bool all_finite() const;

    friend bool operator==(const ModelParams& a, const ModelParams& b);
};

FeatureMap conv_forward(const FeatureMap& input, const ConvLayer& layer);

struct ConvGrads {
    FeatureMap grad_input;
    std::vector<double> grad_weight;
    std::vector<double> grad_bias;
};

/// Gradients of a conv given d(loss)/d(output). grad_input is skipped when want_input is false.
ConvGrads conv_backward(const FeatureMap& grad_output, const FeatureMap& input, const ConvLayer& layer,
                        bool want_input = true);

void relu_inplace(FeatureMap& x);
/// Zeroes grad wherever the post-activation value is not positive.
void relu_backward_inplace(FeatureMap& grad, const FeatureMap& activated);
double sigmoid(double z);
double sigmoid_derivative(double z);

struct HeadOutputs {
    GridDims dims;
    std::vector<double> fpu_map;     // probabilities, dims.height x dims.width
    std::vector<double> center_map;  // probabilities
    FeatureMap feature_map;
    FeatureMap filter_map;
};

/// Image pixels enter the encoder as value - 0.5.
FeatureMap image_to_input(const Image& image);

HeadOutputs forward_heads(const Image& image, const ModelParams& params);

/// logits[r * n + c] scores whether point c belongs to the same text as reference point r.
std::vector<double> relation_logits(const SampledVectors& features, const ModelParams& params);

struct TrainingSample {
    Image image;
    std::vector<Polygon> polygons;
    LabelBundle labels;
};

TrainingSample make_training_sample(Image image, std::vector<Polygon> polygons, const LabelConfig& config);

struct LossEvaluation {
    LossBundle losses;
    ModelParams grads;  // d(total)/d(param), same layout as the model
    /// Fingerprint of every piecewise-linear branch taken (ReLU masks, |.| signs). Finite-difference
    /// checks compare it between the +h and -h evaluations.
    std::uint64_t branch_signature = 0;
};

/// Forward + backward of the weighted training objective on one sample.
LossEvaluation evaluate_loss(const TrainingSample& sample, const ModelParams& params, const LossWeights& weights,
                             bool want_grads = true);

/// lr0 * (1 - iter / max_iters)^power, clamped at zero.
double poly_learning_rate(const NetConfig& config, long iteration);

struct TrainOptions {
    /// Called after every iteration with the iteration index (1-based) and its losses.
    std::function<void(long, const LossBundle&)> on_iteration;
};

struct TrainResult {
    ModelParams params;
    std::vector<LossBundle> history;
};

/// Adam (beta1 0.9, beta2 0.999, eps 1e-8) with poly decay for config.max_iters iterations. Samples are
/// visited in seeded shuffled epochs; gradients are averaged over config.batch samples.
TrainResult train(const std::vector<TrainingSample>& corpus, const NetConfig& config, const LossWeights& weights,
                  const TrainOptions& options = {});

std::string format_loss_csv(const std::vector<LossBundle>& history);

// Checkpoint: "TPFMODEL" magic, u32 version, NetConfig fields, u32 array count, then per array a
// u32 rank, u32 dims and little-endian float32 values.
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);
/// Rounds every parameter through float32, matching what a checkpoint round trip yields.
void round_to_float32(ModelParams& params);

struct GradCheckEntry {
    std::string name;
    double max_relative_error = 0.0;
    int coordinates = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double worst_relative_error = 0.0;
    int cases = 0;
};

/// Central finite differences (h = 1e-4) against every analytic gradient: convolutions, activations,
/// focal, dice, the feature-filter composite, the relation head and the full objective.
GradCheckReport grad_check_suite(std::uint64_t seed, int cases = 50);

} // namespace tpf::net
