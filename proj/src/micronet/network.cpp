#include "tpf/micronet.hpp"

#include "tpf/error.hpp"
#include "tpf/sieve.hpp"

#include <Eigen/Core>

#include <cmath>
#include <random>

namespace tpf::net {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void hash_bits(std::uint64_t& h, const std::vector<double>& values) {
    for (double v : values) {
        h ^= static_cast<std::uint64_t>(v > 0.0);
        h *= kFnvPrime;
    }
}

struct HeadCache {
    FeatureMap h1;  // post-ReLU
    FeatureMap h2;  // post-ReLU
    FeatureMap out; // pre-activation output
};

struct ForwardCache {
    FeatureMap input;
    FeatureMap a1, a2, fused;  // post-ReLU
    HeadCache center, fpu, feature, filter;
};

HeadCache head_forward(const FeatureMap& fused, const HeadParams& head) {
    HeadCache c;
    c.h1 = conv_forward(fused, head.smooth1);
    relu_inplace(c.h1);
    c.h2 = conv_forward(c.h1, head.smooth2);
    relu_inplace(c.h2);
    c.out = conv_forward(c.h2, head.output);
    return c;
}

// Accumulates parameter gradients into grads and returns d(loss)/d(fused).
FeatureMap head_backward(const FeatureMap& grad_out, const FeatureMap& fused, const HeadCache& cache,
                         const HeadParams& head, HeadParams& grads) {
    ConvGrads g3 = conv_backward(grad_out, cache.h2, head.output);
    grads.output.weight = std::move(g3.grad_weight);
    grads.output.bias = std::move(g3.grad_bias);
    relu_backward_inplace(g3.grad_input, cache.h2);
    ConvGrads g2 = conv_backward(g3.grad_input, cache.h1, head.smooth2);
    grads.smooth2.weight = std::move(g2.grad_weight);
    grads.smooth2.bias = std::move(g2.grad_bias);
    relu_backward_inplace(g2.grad_input, cache.h1);
    ConvGrads g1 = conv_backward(g2.grad_input, fused, head.smooth1);
    grads.smooth1.weight = std::move(g1.grad_weight);
    grads.smooth1.bias = std::move(g1.grad_bias);
    return std::move(g1.grad_input);
}

ForwardCache run_forward(const Image& image, const ModelParams& params) {
    if (!params.all_finite()) throw Error(ErrorCode::NonFiniteParams, "model parameters contain NaN or Inf");
    ForwardCache c;
    c.input = image_to_input(image);
    c.a1 = conv_forward(c.input, params.enc1);
    relu_inplace(c.a1);
    c.a2 = conv_forward(c.a1, params.enc2);
    relu_inplace(c.a2);
    c.fused = conv_forward(c.a2, params.fusion);
    relu_inplace(c.fused);
    c.center = head_forward(c.fused, params.center);
    c.fpu = head_forward(c.fused, params.fpu);
    c.feature = head_forward(c.fused, params.feature);
    c.filter = head_forward(c.fused, params.filter);
    return c;
}

std::vector<double> sigmoid_of(const std::vector<double>& z) {
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = sigmoid(z[i]);
    return out;
}

struct RelationCache {
    int n = 0;
    int dim = 0;
    std::vector<double> pre;     // n*n*D first-layer pre-activations
    std::vector<double> logits;  // n*n
};

// First layer weight row j is [A_j | B_j | C_j] acting on (f_r, f_c, |f_r - f_c|).
// keep_pre = false skips the activation cache that only backprop reads.
RelationCache relation_forward(const SampledVectors& f, const ModelParams& params, bool keep_pre = true) {
    const int n = f.rows;
    const int d = params.config.embed_dim;
    if (f.dim != d) {
        throw Error(ErrorCode::ShapeMismatch, "relation head expects " + std::to_string(d) + "-dim features");
    }
    const DenseLayer& l1 = params.relation1;
    const DenseLayer& l2 = params.relation2;
    RelationCache cache;
    cache.n = n;
    cache.dim = d;
    if (keep_pre) cache.pre.assign(static_cast<std::size_t>(n) * n * d, 0.0);
    cache.logits.assign(static_cast<std::size_t>(n) * n, 0.0);

    // Per-point halves of the first layer, computed once.
    std::vector<double> ref(static_cast<std::size_t>(n) * d);
    std::vector<double> other(static_cast<std::size_t>(n) * d);
    for (int i = 0; i < n; ++i) {
        const double* fi = f.row(i);
        for (int j = 0; j < d; ++j) {
            const double* w = l1.weight.data() + static_cast<std::size_t>(j) * 3 * d;
            double a = l1.bias[static_cast<std::size_t>(j)];
            double b = 0.0;
            for (int k = 0; k < d; ++k) {
                a += w[k] * fi[k];
                b += w[d + k] * fi[k];
            }
            ref[static_cast<std::size_t>(i) * d + j] = a;
            other[static_cast<std::size_t>(i) * d + j] = b;
        }
    }
    // The |f_r - f_c| term for every pair as one GEMM on Eigen-owned (aligned) buffers.
    RowMatrix diff(static_cast<Eigen::Index>(n) * n, d);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const double* fr = f.row(r);
            const double* fc = f.row(c);
            for (int k = 0; k < d; ++k) diff(static_cast<Eigen::Index>(r) * n + c, k) = std::abs(fr[k] - fc[k]);
        }
    }
    RowMatrix weight_diff(d, d);
    for (int j = 0; j < d; ++j) {
        for (int k = 0; k < d; ++k) weight_diff(j, k) = l1.weight[static_cast<std::size_t>(j) * 3 * d + 2 * d + k];
    }
    const RowMatrix diff_term = diff * weight_diff.transpose();
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const Eigen::Index pair = static_cast<Eigen::Index>(r) * n + c;
            double* pre = keep_pre ? cache.pre.data() + static_cast<std::size_t>(pair) * d : nullptr;
            double logit = l2.bias[0];
            for (int j = 0; j < d; ++j) {
                const double z = ref[static_cast<std::size_t>(r) * d + j] + other[static_cast<std::size_t>(c) * d + j] +
                                 diff_term(pair, j);
                if (pre) pre[j] = z;
                if (z > 0.0) logit += l2.weight[static_cast<std::size_t>(j)] * z;
            }
            cache.logits[static_cast<std::size_t>(r) * n + c] = logit;
        }
    }
    return cache;
}

// Accumulates into grads.relation1/2 and returns d(loss)/d(features).
SampledVectors relation_backward(const std::vector<double>& grad_logits, const SampledVectors& f,
                                 const RelationCache& cache, const ModelParams& params, ModelParams& grads) {
    const int n = cache.n;
    const int d = cache.dim;
    const DenseLayer& l1 = params.relation1;
    const DenseLayer& l2 = params.relation2;
    DenseLayer& g1 = grads.relation1;
    DenseLayer& g2 = grads.relation2;
    SampledVectors gf(n, d);
    std::vector<double> dpre(static_cast<std::size_t>(d));
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const double gl = grad_logits[static_cast<std::size_t>(r) * n + c];
            if (gl == 0.0) continue;
            const double* pre = cache.pre.data() + (static_cast<std::size_t>(r) * n + c) * d;
            const double* fr = f.row(r);
            const double* fc = f.row(c);
            g2.bias[0] += gl;
            for (int j = 0; j < d; ++j) {
                const bool active = pre[j] > 0.0;
                if (active) g2.weight[static_cast<std::size_t>(j)] += gl * pre[j];
                dpre[static_cast<std::size_t>(j)] = active ? gl * l2.weight[static_cast<std::size_t>(j)] : 0.0;
            }
            double* gr = gf.row(r);
            double* gc = gf.row(c);
            for (int j = 0; j < d; ++j) {
                const double dz = dpre[static_cast<std::size_t>(j)];
                if (dz == 0.0) continue;
                g1.bias[static_cast<std::size_t>(j)] += dz;
                const double* w = l1.weight.data() + static_cast<std::size_t>(j) * 3 * d;
                double* gw = g1.weight.data() + static_cast<std::size_t>(j) * 3 * d;
                for (int k = 0; k < d; ++k) {
                    const double delta = fr[k] - fc[k];
                    const double s = static_cast<double>((delta > 0.0) - (delta < 0.0));
                    gw[k] += dz * fr[k];
                    gw[d + k] += dz * fc[k];
                    gw[2 * d + k] += dz * std::abs(delta);
                    gr[k] += dz * (w[k] + w[2 * d + k] * s);
                    gc[k] += dz * (w[d + k] - w[2 * d + k] * s);
                }
            }
        }
    }
    return gf;
}

void scatter_add(FeatureMap& map, std::span<const CellPoint> points, const SampledVectors& rows, double scale) {
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double* g = rows.row(static_cast<int>(i));
        for (int c = 0; c < map.channels; ++c) map.at(c, points[i].x, points[i].y) += scale * g[c];
    }
}

void add_into(std::vector<double>& dst, const std::vector<double>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void fill_normal(std::vector<double>& values, std::mt19937_64& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : values) v = dist(rng);
}

} // namespace

void NetConfig::validate() const {
    if (fusion_channels < 2 || fusion_channels % 2 != 0) {
        throw Error(ErrorCode::InvalidArgument, "fusion_channels must be even and >= 2");
    }
    if (embed_dim < 2) throw Error(ErrorCode::InvalidArgument, "embed_dim must be >= 2");
    if (max_iters < 1 || batch < 1) throw Error(ErrorCode::InvalidArgument, "max_iters and batch must be >= 1");
    if (!(lr0 > 0.0) || !(poly_power >= 0.0) || !(init_std >= 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "lr0 must be positive, poly_power and init_std non-negative");
    }
}

int NetConfig::encoder_channels() const { return std::max(4, fusion_channels / 4); }

ModelParams ModelParams::zeros(const NetConfig& config) {
    config.validate();
    const int c = config.fusion_channels;
    const int d = config.embed_dim;
    const int e = config.encoder_channels();
    ModelParams p;
    p.config = config;
    p.enc1 = ConvLayer(3, e, 3, 2);
    p.enc2 = ConvLayer(e, c / 2, 3, 2);
    p.fusion = ConvLayer(c / 2, c, 3, 1);
    const auto head = [&](int out_channels, int out_kernel) {
        return HeadParams{ConvLayer(c, c, 3, 1), ConvLayer(c, c / 2, 3, 1), ConvLayer(c / 2, out_channels, out_kernel, 1)};
    };
    p.center = head(1, 1);
    p.fpu = head(1, 3);
    p.feature = head(d, 3);
    p.filter = head(d, 3);
    p.relation1 = DenseLayer(3 * d, d);
    p.relation2 = DenseLayer(d, 1);
    return p;
}

ModelParams ModelParams::initialize(const NetConfig& config) {
    ModelParams p = zeros(config);
    std::mt19937_64 rng(config.seed);
    // Weights only; biases stay zero. arrays() alternates weight, bias, and a weight array holds
    // fan_in values per output.
    auto all = p.arrays();
    for (std::size_t i = 0; i < all.size(); i += 2) {
        const double fan_in = static_cast<double>(all[i]->size()) / static_cast<double>(all[i + 1]->size());
        fill_normal(*all[i], rng, config.init_std > 0.0 ? config.init_std : std::sqrt(2.0 / fan_in));
    }
    return p;
}

std::vector<std::vector<double>*> ModelParams::arrays() {
    std::vector<std::vector<double>*> out;
    for (ConvLayer* l : {&enc1, &enc2, &fusion}) {
        out.push_back(&l->weight);
        out.push_back(&l->bias);
    }
    for (HeadParams* h : {&center, &fpu, &feature, &filter}) {
        for (ConvLayer* l : {&h->smooth1, &h->smooth2, &h->output}) {
            out.push_back(&l->weight);
            out.push_back(&l->bias);
        }
    }
    for (DenseLayer* l : {&relation1, &relation2}) {
        out.push_back(&l->weight);
        out.push_back(&l->bias);
    }
    return out;
}

std::vector<const std::vector<double>*> ModelParams::arrays() const {
    auto mutable_arrays = const_cast<ModelParams*>(this)->arrays();
    return {mutable_arrays.begin(), mutable_arrays.end()};
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto* a : arrays()) n += a->size();
    return n;
}

bool ModelParams::all_finite() const {
    for (const auto* a : arrays()) {
        for (double v : *a) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
    const auto aa = a.arrays();
    const auto bb = b.arrays();
    if (aa.size() != bb.size()) return false;
    for (std::size_t i = 0; i < aa.size(); ++i) {
        if (*aa[i] != *bb[i]) return false;
    }
    return a.config.fusion_channels == b.config.fusion_channels && a.config.embed_dim == b.config.embed_dim;
}

FeatureMap image_to_input(const Image& image) {
    FeatureMap input(3, image.height, image.width);
    for (std::size_t i = 0; i < input.values.size(); ++i) input.values[i] = image.data[i] - 0.5;
    return input;
}

HeadOutputs forward_heads(const Image& image, const ModelParams& params) {
    ForwardCache c = run_forward(image, params);
    HeadOutputs out;
    out.dims = {c.fused.width, c.fused.height};
    out.center_map = sigmoid_of(c.center.out.values);
    out.fpu_map = sigmoid_of(c.fpu.out.values);
    out.feature_map = std::move(c.feature.out);
    out.filter_map = std::move(c.filter.out);
    return out;
}

std::vector<double> relation_logits(const SampledVectors& features, const ModelParams& params) {
    if (features.rows < 1) throw Error(ErrorCode::InvalidArgument, "relation_logits needs at least one point");
    return relation_forward(features, params, false).logits;
}

TrainingSample make_training_sample(Image image, std::vector<Polygon> polygons, const LabelConfig& config) {
    TrainingSample s;
    s.labels = build_label_bundle(polygons, image.width, image.height, config);
    s.image = std::move(image);
    s.polygons = std::move(polygons);
    return s;
}

LossEvaluation evaluate_loss(const TrainingSample& sample, const ModelParams& params, const LossWeights& weights,
                             bool want_grads) {
    const ForwardCache c = run_forward(sample.image, params);
    const LabelBundle& labels = sample.labels;
    if (c.fused.width != labels.dims.width || c.fused.height != labels.dims.height) {
        throw Error(ErrorCode::ShapeMismatch, "labels do not match the network's output grid");
    }

    const std::vector<double> fpu_prob = sigmoid_of(c.fpu.out.values);
    const std::vector<double> center_prob = sigmoid_of(c.center.out.values);
    const LossAndGrad l_fpu = dice_loss(fpu_prob, labels.foreground.bits());
    const LossAndGrad l_cpt = focal_loss(center_prob, labels.center_mask.bits());

    const std::vector<CellPoint> points = labels.points.cells();
    std::vector<int> assignment;
    assignment.reserve(points.size());
    for (const auto& p : labels.points.points) assignment.push_back(p.instance_id);

    const SampledVectors features = sample_vectors(c.feature.out, points);
    const SampledVectors filters = sample_vectors(c.filter.out, points);
    const RelationCache rel = relation_forward(features, params);
    const std::vector<double> rel_prob = sigmoid_of(rel.logits);
    const LossAndGrad l_reu = focal_loss(rel_prob, labels.matrix.bits);
    const FfpLoss l_ffp = ffp_loss(c.feature.out, filters, labels.stack, assignment);

    LossEvaluation eval;
    eval.losses = total_loss(l_fpu.loss, l_cpt.loss, l_ffp.loss, l_reu.loss, weights);
    if (!want_grads) {
        std::uint64_t h = kFnvOffset;
        for (const FeatureMap* m : {&c.a1, &c.a2, &c.fused}) hash_bits(h, m->values);
        for (const HeadCache* hc : {&c.center, &c.fpu, &c.feature, &c.filter}) {
            hash_bits(h, hc->h1.values);
            hash_bits(h, hc->h2.values);
        }
        hash_bits(h, rel.pre);
        for (int r = 0; r < features.rows; ++r) {
            for (int q = 0; q < features.rows; ++q) {
                for (int k = 0; k < features.dim; ++k) {
                    const double delta = features.row(r)[k] - features.row(q)[k];
                    h ^= static_cast<std::uint64_t>((delta > 0.0) - (delta < 0.0) + 1);
                    h *= kFnvPrime;
                }
            }
        }
        eval.branch_signature = h;
        return eval;
    }

    ModelParams& g = eval.grads;
    g = ModelParams::zeros(params.config);

    // Output-layer gradients with respect to pre-activation maps.
    FeatureMap g_fpu(1, c.fpu.out.height, c.fpu.out.width);
    FeatureMap g_center(1, c.center.out.height, c.center.out.width);
    for (std::size_t i = 0; i < fpu_prob.size(); ++i) {
        g_fpu.values[i] = weights.alpha * l_fpu.grad[i] * fpu_prob[i] * (1.0 - fpu_prob[i]);
        g_center.values[i] = weights.beta * l_cpt.grad[i] * center_prob[i] * (1.0 - center_prob[i]);
    }

    std::vector<double> g_logits(rel.logits.size());
    for (std::size_t i = 0; i < g_logits.size(); ++i) {
        g_logits[i] = weights.lambda * l_reu.grad[i] * rel_prob[i] * (1.0 - rel_prob[i]);
    }
    const SampledVectors g_features = relation_backward(g_logits, features, rel, params, g);

    FeatureMap g_feature_map = l_ffp.grad_feature;
    for (auto& v : g_feature_map.values) v *= weights.mu;
    scatter_add(g_feature_map, points, g_features, 1.0);
    FeatureMap g_filter_map(c.filter.out.channels, c.filter.out.height, c.filter.out.width);
    scatter_add(g_filter_map, points, l_ffp.grad_filters, weights.mu);

    FeatureMap g_fused = head_backward(g_center, c.fused, c.center, params.center, g.center);
    add_into(g_fused.values, head_backward(g_fpu, c.fused, c.fpu, params.fpu, g.fpu).values);
    add_into(g_fused.values, head_backward(g_feature_map, c.fused, c.feature, params.feature, g.feature).values);
    add_into(g_fused.values, head_backward(g_filter_map, c.fused, c.filter, params.filter, g.filter).values);

    relu_backward_inplace(g_fused, c.fused);
    ConvGrads gf = conv_backward(g_fused, c.a2, params.fusion);
    g.fusion.weight = std::move(gf.grad_weight);
    g.fusion.bias = std::move(gf.grad_bias);
    relu_backward_inplace(gf.grad_input, c.a2);
    ConvGrads ge2 = conv_backward(gf.grad_input, c.a1, params.enc2);
    g.enc2.weight = std::move(ge2.grad_weight);
    g.enc2.bias = std::move(ge2.grad_bias);
    relu_backward_inplace(ge2.grad_input, c.a1);
    ConvGrads ge1 = conv_backward(ge2.grad_input, c.input, params.enc1, false);
    g.enc1.weight = std::move(ge1.grad_weight);
    g.enc1.bias = std::move(ge1.grad_bias);
    return eval;
}

} // namespace tpf::net
