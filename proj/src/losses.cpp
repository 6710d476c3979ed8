#include "tpf/losses.hpp"

#include "tpf/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace tpf {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_same_size(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": prediction has " + std::to_string(a) +
                                                  " cells, target has " + std::to_string(b));
    }
}

} // namespace

void LossWeights::validate() const {
    for (double w : {alpha, beta, mu, lambda}) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorCode::InvalidArgument, "loss weights must be >= 0");
    }
}

LossAndGrad focal_loss(std::span<const double> prob, std::span<const std::uint8_t> target,
                       const FocalParams& params) {
    check_same_size(prob.size(), target.size(), "focal_loss");
    LossAndGrad out;
    out.grad.assign(prob.size(), 0.0);
    if (prob.empty()) return out;

    const double g = params.gamma;
    const double inv_n = 1.0 / static_cast<double>(prob.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const double p = std::clamp(prob[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
        if (target[i]) {
            const double w = std::pow(1.0 - p, g);
            sum += -w * std::log(p);
            const double dw = g == 0.0 ? 0.0 : g * std::pow(1.0 - p, g - 1.0);
            out.grad[i] = (dw * std::log(p) - w / p) * inv_n;
        } else {
            const double w = std::pow(p, g);
            sum += -w * std::log(1.0 - p);
            const double dw = g == 0.0 ? 0.0 : g * std::pow(p, g - 1.0);
            out.grad[i] = (-dw * std::log(1.0 - p) + w / (1.0 - p)) * inv_n;
        }
    }
    out.loss = sum * inv_n;
    return out;
}

LossAndGrad dice_loss(std::span<const double> pred, std::span<const std::uint8_t> target,
                      const DiceParams& params) {
    check_same_size(pred.size(), target.size(), "dice_loss");
    double inter = 0.0;
    double sum_p = 0.0;
    double sum_t = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double t = target[i] ? 1.0 : 0.0;
        inter += pred[i] * t;
        sum_p += pred[i];
        sum_t += t;
    }
    const double eps = params.epsilon;
    const double num = 2.0 * inter + eps;
    const double den = sum_p + sum_t + eps;

    LossAndGrad out;
    out.loss = 1.0 - num / den;
    out.grad.resize(pred.size());
    const double inv_den2 = 1.0 / (den * den);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double t = target[i] ? 1.0 : 0.0;
        out.grad[i] = -(2.0 * t * den - num) * inv_den2;
    }
    return out;
}

LossBundle total_loss(double l_fpu, double l_cpt, double l_ffp, double l_reu, const LossWeights& weights) {
    for (double v : {l_fpu, l_cpt, l_ffp, l_reu}) {
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteLoss, "loss component is not finite");
    }
    LossBundle b{l_fpu, l_cpt, l_ffp, l_reu, 0.0};
    b.total = weights.alpha * l_fpu + weights.beta * l_cpt + weights.mu * l_ffp + weights.lambda * l_reu;
    return b;
}

FfpLoss ffp_loss(const FeatureMap& feature, const SampledVectors& filters, const InstanceMaskStack& stack,
                 std::span<const int> assignment, const DiceParams& params) {
    if (filters.dim != feature.channels) {
        throw Error(ErrorCode::ShapeMismatch, "filter dimension does not match feature channels");
    }
    if (assignment.size() != static_cast<std::size_t>(filters.rows)) {
        throw Error(ErrorCode::InvalidAssignment, "assignment length does not match filter count");
    }
    for (int a : assignment) {
        if (a < 0 || a >= stack.count()) {
            throw Error(ErrorCode::InvalidAssignment, "assignment " + std::to_string(a) + " outside instance stack");
        }
    }
    const std::size_t plane = feature.plane();
    for (const auto& m : stack.masks) {
        if (m.width() != feature.width || m.height() != feature.height) {
            throw Error(ErrorCode::ShapeMismatch, "instance mask does not match feature map grid");
        }
    }

    FfpLoss out;
    out.grad_feature = FeatureMap(feature.channels, feature.height, feature.width);
    out.grad_filters = SampledVectors(filters.rows, filters.dim);
    if (filters.rows == 0) return out;

    const double inv_n = 1.0 / filters.rows;
    std::vector<double> logits(plane);
    std::vector<double> soft(plane);
    for (int k = 0; k < filters.rows; ++k) {
        const double* f = filters.row(k);
        std::fill(logits.begin(), logits.end(), 0.0);
        for (int d = 0; d < feature.channels; ++d) {
            const double* src = feature.values.data() + d * plane;
            const double w = f[d];
            for (std::size_t i = 0; i < plane; ++i) logits[i] += w * src[i];
        }
        for (std::size_t i = 0; i < plane; ++i) soft[i] = sigmoid(logits[i]);

        const auto& target = stack.masks[static_cast<std::size_t>(assignment[static_cast<std::size_t>(k)])];
        LossAndGrad dice = dice_loss(soft, target.bits(), params);
        out.loss += dice.loss * inv_n;

        // Reuse dice.grad as d(loss)/d(logit).
        for (std::size_t i = 0; i < plane; ++i) dice.grad[i] *= soft[i] * (1.0 - soft[i]) * inv_n;
        double* gf = out.grad_filters.row(k);
        for (int d = 0; d < feature.channels; ++d) {
            const double* src = feature.values.data() + d * plane;
            double* dst = out.grad_feature.values.data() + d * plane;
            const double w = f[d];
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
                acc += dice.grad[i] * src[i];
                dst[i] += w * dice.grad[i];
            }
            gf[d] = acc;
        }
    }
    return out;
}

std::string loss_csv_header() { return "iter,l_fpu,l_cpt,l_ffp,l_reu,total"; }

std::string loss_csv_row(long iteration, const LossBundle& b) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%ld,%.9g,%.9g,%.9g,%.9g,%.9g", iteration, b.l_fpu, b.l_cpt, b.l_ffp, b.l_reu,
                  b.total);
    return buf;
}

} // namespace tpf
