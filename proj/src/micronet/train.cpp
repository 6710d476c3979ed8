#include "tpf/micronet.hpp"

#include "tpf/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace tpf::net {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

// Seeded epoch-wise shuffled visiting order over the corpus.
class SampleOrder {
public:
    SampleOrder(std::size_t size, std::uint64_t seed) : order_(size), rng_(seed ^ 0x9e3779b97f4a7c15ULL) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        reshuffle();
    }

    std::size_t next() {
        if (pos_ == order_.size()) reshuffle();
        return order_[pos_++];
    }

private:
    void reshuffle() {
        // Fisher-Yates with explicit modulo draws so the order only depends on mt19937_64.
        for (std::size_t i = order_.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng_() % i);
            std::swap(order_[i - 1], order_[j]);
        }
        pos_ = 0;
    }

    std::vector<std::size_t> order_;
    std::mt19937_64 rng_;
    std::size_t pos_ = 0;
};

} // namespace

double poly_learning_rate(const NetConfig& config, long iteration) {
    const double progress = static_cast<double>(iteration) / static_cast<double>(config.max_iters);
    const double base = std::max(0.0, 1.0 - progress);
    return config.lr0 * std::pow(base, config.poly_power);
}

TrainResult train(const std::vector<TrainingSample>& corpus, const NetConfig& config, const LossWeights& weights,
                  const TrainOptions& options) {
    config.validate();
    weights.validate();
    if (corpus.empty()) throw Error(ErrorCode::InvalidArgument, "training corpus is empty");

    TrainResult result;
    result.params = ModelParams::initialize(config);
    result.history.reserve(static_cast<std::size_t>(config.max_iters));

    auto params = result.params.arrays();
    ModelParams first_moment = ModelParams::zeros(config);
    ModelParams second_moment = ModelParams::zeros(config);
    auto m_arrays = first_moment.arrays();
    auto v_arrays = second_moment.arrays();

    SampleOrder order(corpus.size(), config.seed);
    const double inv_batch = 1.0 / config.batch;

    for (long iter = 0; iter < config.max_iters; ++iter) {
        LossBundle mean_losses;
        ModelParams grads = ModelParams::zeros(config);
        auto g_arrays = grads.arrays();
        for (int b = 0; b < config.batch; ++b) {
            const TrainingSample& sample = corpus[order.next()];
            LossEvaluation eval;
            try {
                eval = evaluate_loss(sample, result.params, weights);
            } catch (const Error& e) {
                if (e.code() == ErrorCode::NonFiniteLoss || e.code() == ErrorCode::NonFiniteParams) {
                    throw NonFiniteLossError(iter + 1, e.what());
                }
                throw;
            }
            mean_losses.l_fpu += eval.losses.l_fpu * inv_batch;
            mean_losses.l_cpt += eval.losses.l_cpt * inv_batch;
            mean_losses.l_ffp += eval.losses.l_ffp * inv_batch;
            mean_losses.l_reu += eval.losses.l_reu * inv_batch;
            mean_losses.total += eval.losses.total * inv_batch;
            const auto e_arrays = eval.grads.arrays();
            for (std::size_t a = 0; a < g_arrays.size(); ++a) {
                auto& dst = *g_arrays[a];
                const auto& src = *e_arrays[a];
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i] * inv_batch;
            }
        }

        const double lr = poly_learning_rate(config, iter);
        const double t = static_cast<double>(iter + 1);
        const double correction1 = 1.0 - std::pow(kBeta1, t);
        const double correction2 = 1.0 - std::pow(kBeta2, t);
        for (std::size_t a = 0; a < params.size(); ++a) {
            auto& p = *params[a];
            auto& m = *m_arrays[a];
            auto& v = *v_arrays[a];
            const auto& g = *g_arrays[a];
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
                v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
                const double m_hat = m[i] / correction1;
                const double v_hat = v[i] / correction2;
                p[i] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEps);
            }
        }
        if (!result.params.all_finite()) {
            throw NonFiniteLossError(iter + 1, "parameters became non-finite");
        }

        result.history.push_back(mean_losses);
        if (options.on_iteration) options.on_iteration(iter + 1, mean_losses);
    }
    return result;
}

std::string format_loss_csv(const std::vector<LossBundle>& history) {
    std::string out = loss_csv_header() + "\n";
    for (std::size_t i = 0; i < history.size(); ++i) {
        out += loss_csv_row(static_cast<long>(i + 1), history[i]);
        out += '\n';
    }
    return out;
}

} // namespace tpf::net
