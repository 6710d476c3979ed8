#pragma once

#include "tpf/feature_map.hpp"
#include "tpf/labels.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tpf {

struct LossWeights {
    double alpha = 0.7;   // foreground prior branch
    double beta = 1.0;    // center points
    double mu = 1.0;      // feature-filter pairs
    double lambda = 1.0;  // relation matrix

    void validate() const;
};

struct FocalParams {
    double gamma = 2.0;
};

struct DiceParams {
    double epsilon = 1.0;
};

inline constexpr double kProbabilityClamp = 1e-7;

struct LossAndGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

/// Mean over cells of -(1 - p_t)^gamma * log(p_t). The gradient is d(loss)/d(p), evaluated at the
/// clamped probability and passed straight through the clamp.
LossAndGrad focal_loss(std::span<const double> prob, std::span<const std::uint8_t> target,
                       const FocalParams& params = {});

/// 1 - (2 * sum(p * t) + eps) / (sum(p) + sum(t) + eps), soft intersection.
LossAndGrad dice_loss(std::span<const double> pred, std::span<const std::uint8_t> target,
                      const DiceParams& params = {});

struct LossBundle {
    double l_fpu = 0.0;
    double l_cpt = 0.0;
    double l_ffp = 0.0;
    double l_reu = 0.0;
    double total = 0.0;
};

LossBundle total_loss(double l_fpu, double l_cpt, double l_ffp, double l_reu, const LossWeights& weights);

struct FfpLoss {
    double loss = 0.0;
    FeatureMap grad_feature;
    SampledVectors grad_filters;
};

/// Mean dice loss of each sampled filter's soft mask sigmoid(<filter, feature>) against the instance
/// mask it was sampled from. assignment[k] indexes stack.masks for filter row k.
FfpLoss ffp_loss(const FeatureMap& feature, const SampledVectors& filters, const InstanceMaskStack& stack,
                 std::span<const int> assignment, const DiceParams& params = {});

/// "iter,l_fpu,l_cpt,l_ffp,l_reu,total" rows.
std::string loss_csv_header();
std::string loss_csv_row(long iteration, const LossBundle& bundle);

} // namespace tpf
