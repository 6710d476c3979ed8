#include "tpf/micronet.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>

namespace tpf::net {

namespace {

constexpr double kStep = 1e-4;
// Gradients below this magnitude are compared absolutely; FD noise dominates there.
constexpr double kRelativeFloor = 1e-6;

double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kRelativeFloor});
}

class Tracker {
public:
    void record(const std::string& name, double analytic, double numeric) {
        auto& e = entries_[name];
        e.name = name;
        e.max_relative_error = std::max(e.max_relative_error, relative_error(analytic, numeric));
        ++e.coordinates;
    }
    GradCheckReport report(int cases) const {
        GradCheckReport r;
        r.cases = cases;
        for (const auto& [name, e] : entries_) {
            r.entries.push_back(e);
            r.worst_relative_error = std::max(r.worst_relative_error, e.max_relative_error);
        }
        return r;
    }

private:
    std::map<std::string, GradCheckEntry> entries_;
};

void fill_uniform(std::vector<double>& v, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    for (auto& x : v) x = d(rng);
}

// Central difference of f with respect to *value.
double central(double& value, const std::function<double()>& f) {
    const double saved = value;
    value = saved + kStep;
    const double up = f();
    value = saved - kStep;
    const double down = f();
    value = saved;
    return (up - down) / (2 * kStep);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void check_conv(std::mt19937_64& rng, Tracker& t) {
    std::uniform_int_distribution<int> ch(1, 4), size(3, 7), pick(0, 1);
    const int k = pick(rng) ? 3 : 1;
    const int s = pick(rng) ? 2 : 1;
    ConvLayer layer(ch(rng), ch(rng), k, s);
    fill_uniform(layer.weight, rng, -1, 1);
    fill_uniform(layer.bias, rng, -1, 1);
    FeatureMap x(layer.in_channels, size(rng), size(rng));
    fill_uniform(x.values, rng, -1, 1);
    const FeatureMap y0 = conv_forward(x, layer);
    FeatureMap r(y0.channels, y0.height, y0.width);
    fill_uniform(r.values, rng, -1, 1);
    const auto f = [&] { return dot(conv_forward(x, layer).values, r.values); };
    const ConvGrads g = conv_backward(r, x, layer);
    for (std::size_t i = 0; i < x.values.size(); ++i) t.record("conv.input", g.grad_input.values[i], central(x.values[i], f));
    for (std::size_t i = 0; i < layer.weight.size(); ++i) t.record("conv.weight", g.grad_weight[i], central(layer.weight[i], f));
    for (std::size_t i = 0; i < layer.bias.size(); ++i) t.record("conv.bias", g.grad_bias[i], central(layer.bias[i], f));
}

void check_activations(std::mt19937_64& rng, Tracker& t) {
    std::uniform_real_distribution<double> z(-6, 6);
    for (int i = 0; i < 16; ++i) {
        double v = z(rng);
        t.record("sigmoid", sigmoid_derivative(v), central(v, [&] { return sigmoid(v); }));
    }
    FeatureMap x(2, 3, 3);
    fill_uniform(x.values, rng, -1, 1);
    // Keep inputs off the kink.
    for (auto& v : x.values) v = v < 0 ? v - 0.01 : v + 0.01;
    std::vector<double> r(x.values.size());
    fill_uniform(r, rng, -1, 1);
    FeatureMap act = x;
    relu_inplace(act);
    FeatureMap grad(2, 3, 3);
    grad.values = r;
    relu_backward_inplace(grad, act);
    const auto f = [&] {
        FeatureMap a = x;
        relu_inplace(a);
        return dot(a.values, r);
    };
    for (std::size_t i = 0; i < x.values.size(); ++i) t.record("relu", grad.values[i], central(x.values[i], f));
}

void check_losses(std::mt19937_64& rng, Tracker& t) {
    std::uniform_int_distribution<int> size(4, 36), bit(0, 1);
    std::uniform_real_distribution<double> gamma(0.0, 3.0), eps(0.1, 2.0);
    const std::size_t n = static_cast<std::size_t>(size(rng));
    std::vector<double> p(n);
    fill_uniform(p, rng, 0.02, 0.98);
    std::vector<std::uint8_t> y(n);
    for (auto& v : y) v = static_cast<std::uint8_t>(bit(rng));

    const FocalParams fp{gamma(rng)};
    const LossAndGrad focal = focal_loss(p, y, fp);
    for (std::size_t i = 0; i < n; ++i) {
        t.record("focal", focal.grad[i], central(p[i], [&] { return focal_loss(p, y, fp).loss; }));
    }
    const DiceParams dp{eps(rng)};
    const LossAndGrad dice = dice_loss(p, y, dp);
    for (std::size_t i = 0; i < n; ++i) {
        t.record("dice", dice.grad[i], central(p[i], [&] { return dice_loss(p, y, dp).loss; }));
    }
}

void check_ffp(std::mt19937_64& rng, Tracker& t) {
    std::uniform_int_distribution<int> size(3, 6), dim(2, 4), inst(1, 3), rows(1, 5);
    const int w = size(rng), h = size(rng), d = dim(rng);
    FeatureMap feature(d, h, w);
    fill_uniform(feature.values, rng, -1, 1);
    InstanceMaskStack stack;
    const int m = inst(rng);
    std::uniform_int_distribution<int> bit(0, 2);
    for (int i = 0; i < m; ++i) {
        BinaryMask mask(w, h);
        for (auto& b : mask.bits()) b = bit(rng) == 0 ? 1 : 0;
        stack.masks.push_back(mask);
        stack.source_index.push_back(i);
    }
    SampledVectors filters(rows(rng), d);
    fill_uniform(filters.data, rng, -1, 1);
    std::vector<int> assignment(static_cast<std::size_t>(filters.rows));
    std::uniform_int_distribution<int> who(0, m - 1);
    for (auto& a : assignment) a = who(rng);

    const FfpLoss g = ffp_loss(feature, filters, stack, assignment);
    const auto f = [&] { return ffp_loss(feature, filters, stack, assignment).loss; };
    for (std::size_t i = 0; i < feature.values.size(); ++i) {
        t.record("ffp.feature", g.grad_feature.values[i], central(feature.values[i], f));
    }
    for (std::size_t i = 0; i < filters.data.size(); ++i) {
        t.record("ffp.filter", g.grad_filters.data[i], central(filters.data[i], f));
    }
}

// Whole objective on a tiny scene; `name` selects which loss terms are switched on.
void check_objective(std::mt19937_64& rng, Tracker& t, const std::string& name, const LossWeights& weights) {
    NetConfig cfg;
    cfg.fusion_channels = 4;
    cfg.embed_dim = 3;
    cfg.seed = rng();
    cfg.init_std = 0.4;
    ModelParams params = ModelParams::initialize(cfg);
    for (auto* a : params.arrays()) {
        if (a->size() <= 16) fill_uniform(*a, rng, -0.2, 0.2);  // biases
    }

    constexpr int kSize = 24;
    Image image(kSize, kSize);
    fill_uniform(image.data, rng, 0, 1);
    std::uniform_real_distribution<double> jitter(0, 2);
    std::vector<Polygon> polys;
    for (int i = 0; i < 2; ++i) {
        const double x0 = 1 + 4 * jitter(rng), y0 = 2 + 12 * i + jitter(rng);
        Polygon p;
        p.vertices = {{x0, y0}, {x0 + 12, y0}, {x0 + 12, y0 + 5}, {x0, y0 + 5}};
        polys.push_back(p);
    }
    const TrainingSample sample = make_training_sample(image, polys, LabelConfig{});

    const LossEvaluation eval = evaluate_loss(sample, params, weights, true);
    const auto arrays = params.arrays();
    const auto grads = eval.grads.arrays();
    for (std::size_t a = 0; a < arrays.size(); ++a) {
        auto& values = *arrays[a];
        std::uniform_int_distribution<std::size_t> idx(0, values.size() - 1);
        const int probes = std::min<int>(static_cast<int>(values.size()), 4);
        for (int p = 0; p < probes; ++p) {
            const std::size_t i = idx(rng);
            const double saved = values[i];
            values[i] = saved + kStep;
            const LossEvaluation up = evaluate_loss(sample, params, weights, false);
            values[i] = saved - kStep;
            const LossEvaluation down = evaluate_loss(sample, params, weights, false);
            values[i] = saved;
            // A ReLU or |.| switching inside the stencil makes the difference quotient meaningless.
            if (up.branch_signature != down.branch_signature) continue;
            t.record(name, (*grads[a])[i], (up.losses.total - down.losses.total) / (2 * kStep));
        }
    }
}

} // namespace

GradCheckReport grad_check_suite(std::uint64_t seed, int cases) {
    std::mt19937_64 rng(seed);
    Tracker t;
    for (int c = 0; c < cases; ++c) {
        switch (c % 8) {
        case 0: check_conv(rng, t); break;
        case 1: check_activations(rng, t); break;
        case 2: check_losses(rng, t); break;
        case 3: check_ffp(rng, t); break;
        case 4: check_objective(rng, t, "objective.fpu+cpt", {1.0, 1.0, 0.0, 0.0}); break;
        case 5: check_objective(rng, t, "objective.ffp", {0.0, 0.0, 1.0, 0.0}); break;
        case 6: check_objective(rng, t, "objective.relation", {0.0, 0.0, 0.0, 1.0}); break;
        default: check_objective(rng, t, "objective.total", {}); break;
        }
    }
    return t.report(cases);
}

} // namespace tpf::net
