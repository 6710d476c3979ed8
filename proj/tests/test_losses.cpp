#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tpf/error.hpp"
#include "tpf/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

using namespace tpf;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected tpf::Error");
    return ErrorCode::InvalidArgument;
}

double rel_err(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}); }

// Independent per-cell focal term.
double focal_term(double p, int y, double gamma) {
    const double pt = y ? p : 1 - p;
    return -std::pow(1 - pt, gamma) * std::log(pt);
}

double dice_oracle(const std::vector<double>& p, const std::vector<std::uint8_t>& t, double eps) {
    double inter = 0, sp = 0, st = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        inter += p[i] * t[i];
        sp += p[i];
        st += t[i];
    }
    return 1 - (2 * inter + eps) / (sp + st + eps);
}

} // namespace

TEST_CASE("focal loss worked values") {
    const std::vector<std::uint8_t> one{1};
    CHECK(focal_loss(std::vector<double>{0.5}, one, FocalParams{0.0}).loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(focal_loss(std::vector<double>{0.9}, one, FocalParams{2.0}).loss ==
          doctest::Approx(0.01 * -std::log(0.9)).epsilon(1e-12));
    CHECK(focal_loss(std::vector<double>{0.9}, one, FocalParams{2.0}).loss == doctest::Approx(1.0536e-3).epsilon(1e-4));

    const std::vector<double> perfect{1 - 1e-7, 1e-7, 1 - 1e-7};
    CHECK(focal_loss(perfect, std::vector<std::uint8_t>{1, 0, 1}).loss < 1e-12);

    CHECK(code_of([] { focal_loss(std::vector<double>{0.5, 0.5}, std::vector<std::uint8_t>{1}); }) ==
          ErrorCode::ShapeMismatch);
}

TEST_CASE("focal loss against per-cell oracle and finite differences") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> prob(0.02, 0.98), gam(0.0, 3.0);
    for (int t = 0; t < 50; ++t) {
        const int n = 1 + static_cast<int>(rng() % 20);
        std::vector<double> p(static_cast<std::size_t>(n));
        std::vector<std::uint8_t> y(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            p[static_cast<std::size_t>(i)] = prob(rng);
            y[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(rng() % 2);
        }
        const double gamma = gam(rng);
        double expected = 0;
        for (int i = 0; i < n; ++i) expected += focal_term(p[static_cast<std::size_t>(i)], y[static_cast<std::size_t>(i)], gamma);
        expected /= n;
        const auto r = focal_loss(p, y, FocalParams{gamma});
        CHECK(r.loss == doctest::Approx(expected).epsilon(1e-12));
        for (int i = 0; i < n; ++i) {
            const double h = 1e-6;
            auto up = p, down = p;
            up[static_cast<std::size_t>(i)] += h;
            down[static_cast<std::size_t>(i)] -= h;
            const double fd = (focal_loss(up, y, FocalParams{gamma}).loss - focal_loss(down, y, FocalParams{gamma}).loss) / (2 * h);
            CHECK(rel_err(r.grad[static_cast<std::size_t>(i)], fd) <= 1e-4);
        }
    }
}

TEST_CASE("focal loss properties") {
    for (double gamma : {0.0, 1.0, 2.0, 5.0}) {
        double prev = std::numeric_limits<double>::infinity();
        for (double pt = 0.01; pt < 1.0; pt += 0.01) {
            const double l = focal_loss(std::vector<double>{pt}, std::vector<std::uint8_t>{1}, FocalParams{gamma}).loss;
            CHECK(l >= 0.0);
            CHECK(l < prev);
            prev = l;
            const double neg = focal_loss(std::vector<double>{1 - pt}, std::vector<std::uint8_t>{0}, FocalParams{gamma}).loss;
            CHECK(neg == doctest::Approx(l).epsilon(1e-9));
        }
    }
    // gamma 0 is binary cross-entropy.
    for (double p = 0.05; p < 1.0; p += 0.05) {
        CHECK(focal_loss(std::vector<double>{p}, std::vector<std::uint8_t>{0}, FocalParams{0.0}).loss ==
              doctest::Approx(-std::log(1 - p)).epsilon(1e-12));
    }
}

TEST_CASE("dice loss worked values") {
    const std::vector<std::uint8_t> target{1, 1, 0, 1, 1, 0};
    const std::vector<double> same{1, 1, 0, 1, 1, 0};
    CHECK(dice_loss(same, target, DiceParams{1.0}).loss == doctest::Approx(0.0));

    const std::vector<double> ones(4, 1.0);
    CHECK(dice_loss(ones, std::vector<std::uint8_t>(4, 0), DiceParams{1.0}).loss == doctest::Approx(0.8));

    CHECK(code_of([] { dice_loss(std::vector<double>{0.5}, std::vector<std::uint8_t>{1, 0}); }) ==
          ErrorCode::ShapeMismatch);
}

TEST_CASE("dice loss against oracle and finite differences") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0), e(0.1, 2.0);
    for (int t = 0; t < 50; ++t) {
        const int n = 1 + static_cast<int>(rng() % 30);
        std::vector<double> p(static_cast<std::size_t>(n));
        std::vector<std::uint8_t> y(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            p[static_cast<std::size_t>(i)] = u(rng);
            y[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(rng() % 2);
        }
        const double eps = e(rng);
        const auto r = dice_loss(p, y, DiceParams{eps});
        CHECK(r.loss == doctest::Approx(dice_oracle(p, y, eps)).epsilon(1e-12));
        CHECK(r.loss >= 0.0);
        CHECK(r.loss < 1.0);
        for (int i = 0; i < n; ++i) {
            const double h = 1e-6;
            auto up = p, down = p;
            up[static_cast<std::size_t>(i)] += h;
            down[static_cast<std::size_t>(i)] -= h;
            const double fd = (dice_oracle(up, y, eps) - dice_oracle(down, y, eps)) / (2 * h);
            CHECK(rel_err(r.grad[static_cast<std::size_t>(i)], fd) <= 1e-4);
        }
    }
}

TEST_CASE("total loss") {
    const LossWeights w;
    CHECK(total_loss(1, 1, 1, 1, w).total == doctest::Approx(3.7));
    CHECK(total_loss(0, 0, 0, 0, w).total == 0.0);
    for (double a : {0.1, 2.0, 7.5}) CHECK(total_loss(a, 0, 0, 0, w).total == doctest::Approx(w.alpha * a));
    const auto b = total_loss(0.2, 0.3, 0.4, 0.5, LossWeights{1, 2, 3, 4});
    CHECK(b.l_fpu == 0.2);
    CHECK(b.l_reu == 0.5);
    CHECK(b.total == doctest::Approx(0.2 + 0.6 + 1.2 + 2.0));
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK(code_of([&] { total_loss(nan, 0, 0, 0, w); }) == ErrorCode::NonFiniteLoss);
    CHECK(code_of([&] { total_loss(0, 0, 0, std::numeric_limits<double>::infinity(), w); }) == ErrorCode::NonFiniteLoss);
    CHECK(code_of([] { LossWeights{-1, 1, 1, 1}.validate(); }) == ErrorCode::InvalidArgument);
}

namespace {

InstanceMaskStack toy_stack() {
    InstanceMaskStack stack;
    BinaryMask a(6, 6), b(6, 6);
    for (int x = 0; x < 6; ++x) {
        a.set(x, 1);
        a.set(x, 2);
        b.set(x, 4);
    }
    stack.masks = {a, b};
    stack.source_index = {0, 1};
    return stack;
}

double ffp_oracle(const FeatureMap& f, const SampledVectors& filters, const InstanceMaskStack& stack,
                  const std::vector<int>& assignment) {
    double sum = 0;
    for (int k = 0; k < filters.rows; ++k) {
        std::vector<double> p;
        std::vector<std::uint8_t> t;
        const BinaryMask& m = stack.masks[static_cast<std::size_t>(assignment[static_cast<std::size_t>(k)])];
        for (int y = 0; y < f.height; ++y) {
            for (int x = 0; x < f.width; ++x) {
                double z = 0;
                for (int c = 0; c < f.channels; ++c) z += filters.row(k)[c] * f.at(c, x, y);
                p.push_back(1 / (1 + std::exp(-z)));
                t.push_back(m.at(x, y) ? 1 : 0);
            }
        }
        sum += dice_oracle(p, t, 1.0);
    }
    return sum / filters.rows;
}

} // namespace

TEST_CASE("ffp loss worked values") {
    const auto stack = toy_stack();
    FeatureMap f(3, 6, 6);
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 6; ++x) f.at(0, x, y) = stack.masks[0].at(x, y) ? 10.0 : -10.0;
    }
    SampledVectors e1(1, 3);
    e1.row(0)[0] = 1.0;
    const std::vector<int> first{0};
    CHECK(ffp_loss(f, e1, stack, first).loss == doctest::Approx(0.0).epsilon(1e-3));
    CHECK(ffp_loss(f, e1, stack, first).loss < 1e-3);

    const SampledVectors zero(1, 3);
    const auto r = ffp_loss(f, zero, stack, first);
    // Soft mask 0.5 on 36 cells against 12 targets: 1 - (12 + 1) / (18 + 12 + 1).
    CHECK(r.loss == doctest::Approx(1.0 - 13.0 / 31.0));
    double norm = 0;
    for (double g : r.grad_filters.data) norm += g * g;
    CHECK(norm > 0.0);

    const std::vector<int> bad{2};
    CHECK(code_of([&] { ffp_loss(f, e1, stack, bad); }) == ErrorCode::InvalidAssignment);
    const std::vector<int> too_many{0, 1};
    CHECK(code_of([&] { ffp_loss(f, e1, stack, too_many); }) == ErrorCode::InvalidAssignment);
    CHECK(code_of([&] { ffp_loss(f, SampledVectors(1, 2), stack, first); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("ffp loss against oracle and finite differences on a 6x6 toy") {
    const auto stack = toy_stack();
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 0.7);
    for (int t = 0; t < 10; ++t) {
        FeatureMap f(3, 6, 6);
        for (double& v : f.values) v = g(rng);
        SampledVectors filters(3, 3);
        for (double& v : filters.data) v = g(rng);
        const std::vector<int> assignment{0, 1, static_cast<int>(rng() % 2)};
        const auto r = ffp_loss(f, filters, stack, assignment);
        CHECK(r.loss == doctest::Approx(ffp_oracle(f, filters, stack, assignment)).epsilon(1e-12));
        const double h = 1e-5;
        for (std::size_t i = 0; i < f.values.size(); i += 5) {
            auto up = f, down = f;
            up.values[i] += h;
            down.values[i] -= h;
            const double fd = (ffp_oracle(up, filters, stack, assignment) - ffp_oracle(down, filters, stack, assignment)) / (2 * h);
            CHECK(rel_err(r.grad_feature.values[i], fd) <= 1e-4);
        }
        for (std::size_t i = 0; i < filters.data.size(); ++i) {
            auto up = filters, down = filters;
            up.data[i] += h;
            down.data[i] -= h;
            const double fd = (ffp_oracle(f, up, stack, assignment) - ffp_oracle(f, down, stack, assignment)) / (2 * h);
            CHECK(rel_err(r.grad_filters.data[i], fd) <= 1e-4);
        }
    }
}

TEST_CASE("loss csv") {
    CHECK(loss_csv_header() == "iter,l_fpu,l_cpt,l_ffp,l_reu,total");
    const std::string row = loss_csv_row(7, total_loss(0.5, 0.25, 0.125, 1, LossWeights{}));
    CHECK(row.rfind("7,", 0) == 0);
    CHECK(std::count(row.begin(), row.end(), ',') == 5);
}
