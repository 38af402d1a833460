#pragma once

// Self-checks exposed by the CLI: finite-difference gradient suites and the
// small/large residual asymptotes of the T-Loss.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tlosslab/baseline_losses.hpp"
#include "tlosslab/model.hpp"
#include "tlosslab/tloss.hpp"
#include "tlosslab/trainer.hpp"

namespace tlosslab {

struct GradCheckOptions {
    std::uint64_t seed = 20240501;
    /// Negate every analytic gradient before comparison. Used to prove the
    /// harness can fail.
    bool flip_sign = false;
};

struct SuiteReport {
    std::string name;
    std::size_t configs = 0;
    std::size_t entries = 0;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    std::vector<std::string> failures;  ///< first few offending configurations

    bool passed() const { return failures.empty(); }
};

struct GradCheckReport {
    std::vector<SuiteReport> suites;

    bool passed() const {
        return std::all_of(suites.begin(), suites.end(), [](const auto& s) { return s.passed(); });
    }
};

namespace detail {

inline constexpr std::size_t kMaxListedFailures = 5;

/// Relative error with an absolute floor: it is <= tol exactly when
/// |a - n| <= max(tol * max(|a|, |n|), abs_floor).
inline double rel_err(double analytic, double numeric, double tol, double abs_floor) {
    const double diff = std::fabs(analytic - numeric);
    const double scale = std::max({std::fabs(analytic), std::fabs(numeric), abs_floor / tol});
    return diff / scale;
}

class SuiteAccumulator {
public:
    SuiteAccumulator(std::string name, double tol, double abs_floor, bool flip)
        : tol_(tol), floor_(abs_floor), sign_(flip ? -1.0 : 1.0) {
        report_.name = std::move(name);
        report_.tolerance = tol;
    }

    void next_config() { ++report_.configs; }

    void compare(double analytic, double numeric, const std::string& where) {
        analytic *= sign_;
        const double e = rel_err(analytic, numeric, tol_, floor_);
        ++report_.entries;
        if (!(e <= report_.max_rel_err)) report_.max_rel_err = e;
        if (!(e <= tol_) && report_.failures.size() < kMaxListedFailures) {
            std::ostringstream msg;
            msg.precision(10);
            msg << where << ": analytic " << analytic << " vs numeric " << numeric << " (rel err " << e << ")";
            report_.failures.push_back(msg.str());
        }
    }

    SuiteReport take() { return std::move(report_); }

private:
    SuiteReport report_;
    double tol_, floor_, sign_;
};

}  // namespace detail

/// 100 random (nu_tilde in [-3, 3], D in {1, 4, 64}, residual ~ N(0, 1))
/// configurations; central differences with step 1e-6 in long double.
inline SuiteReport check_tloss_gradients(const GradCheckOptions& opt = {}) {
    detail::SuiteAccumulator acc("tloss", 1e-6, 1e-8, opt.flip_sign);
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> unt(-3.0, 3.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t dims[] = {1, 4, 64};
    const long double h = 1e-6L;

    for (int c = 0; c < 100; ++c) {
        acc.next_config();
        const std::size_t dim = dims[c % 3];
        const double nu_tilde = unt(rng);
        std::vector<double> r(dim);
        for (auto& v : r) v = normal(rng);

        const TLossState s{nu_tilde, kDefaultEpsilon, dim};
        const TLossGrad g = tloss_grad(s, Residual(r));

        const BasicTLossState<long double> sl{nu_tilde, kDefaultEpsilon, dim};
        std::vector<long double> rl(r.begin(), r.end());
        auto value_at = [&](const BasicTLossState<long double>& st, const std::vector<long double>& res) {
            return tloss_value(st, BasicResidual<long double>(res));
        };
        const std::string tag = "config " + std::to_string(c) + " (D=" + std::to_string(dim) +
                                ", nu_tilde=" + std::to_string(nu_tilde) + ")";
        for (std::size_t j = 0; j < dim; ++j) {
            // The prediction is f = y - r, so dL/df = -dL/dr.
            auto up = rl, down = rl;
            up[j] -= h;
            down[j] += h;
            const long double fd = (value_at(sl, up) - value_at(sl, down)) / (2 * h);
            acc.compare(g.d_prediction[j], double(fd), tag + " d_prediction[" + std::to_string(j) + "]");
        }
        auto sp = sl, sm = sl;
        sp.nu_tilde += h;
        sm.nu_tilde -= h;
        const long double fd_nu = (value_at(sp, rl) - value_at(sm, rl)) / (2 * h);
        acc.compare(g.d_nu_tilde, double(fd_nu), tag + " d_nu_tilde");
    }
    return acc.take();
}

/// 1000 random (spec, p, y) draws over every pixel-wise loss with random
/// hyperparameters; step 1e-7.
inline SuiteReport check_baseline_gradients(const GradCheckOptions& opt = {}) {
    detail::SuiteAccumulator acc("baseline_losses", 1e-6, 1e-8, opt.flip_sign);
    std::mt19937_64 rng(opt.seed + 1);
    std::uniform_real_distribution<double> up(0.01, 0.99);
    std::uniform_real_distribution<double> uq(0.05, 1.0);
    std::uniform_real_distribution<double> uw(0.0, 2.0);
    std::vector<LossKind> kinds;
    for (LossKind k : kAllLossKinds)
        if (k != LossKind::TLOSS) kinds.push_back(k);
    std::uniform_int_distribution<std::size_t> uk(0, kinds.size() - 1);
    const long double h = 1e-7L;

    for (int c = 0; c < 1000; ++c) {
        acc.next_config();
        LossSpec s;
        s.kind = kinds[uk(rng)];
        s.q = uq(rng);
        s.sce_alpha = uw(rng);
        s.sce_beta = uw(rng);
        s.apl_active_w = uw(rng);
        s.apl_passive_w = uw(rng);
        const double p = up(rng);
        const auto y = std::uint8_t(c % 2);
        const long double fd = (pixel_loss(s, BasicPixelPrediction<long double>{p + h, y}) -
                                pixel_loss(s, BasicPixelPrediction<long double>{p - h, y})) /
                               (2 * h);
        std::ostringstream tag;
        tag << "config " << c << " (" << to_string(s.kind) << ", p=" << p << ", y=" << int(y) << ")";
        acc.compare(pixel_loss_grad(s, PixelPrediction{p, y}), double(fd), tag.str());
    }
    return acc.take();
}

/// 20 random (model, image, mask, nu_tilde) configurations of the composite
/// T-Loss of the model output. Every weight and nu_tilde is perturbed with
/// step 1e-5 * max(1, |theta|); the reference is evaluated in long double.
inline SuiteReport check_model_gradients(const GradCheckOptions& opt = {}) {
    detail::SuiteAccumulator acc("model_trainer", 1e-4, 1e-8, opt.flip_sign);
    std::mt19937_64 rng(opt.seed + 2);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> unt(-3.0, 3.0);
    std::uniform_int_distribution<std::size_t> hid(2, 8);
    std::normal_distribution<double> normal(0.0, 1.0);
    LossSpec tl;
    tl.kind = LossKind::TLOSS;

    for (int c = 0; c < 20; ++c) {
        acc.next_config();
        const std::size_t side = 6 + std::size_t(c % 3);
        Grid<double> image(side, side);
        Mask labels(side, side);
        for (std::size_t i = 0; i < image.size(); ++i) {
            image.data[i] = unit(rng);
            labels.data[i] = unit(rng) < 0.4 ? 1 : 0;
        }
        MlpModel model(hid(rng));
        for (auto& w : model.theta) w = normal(rng);
        const double nu_tilde = unt(rng);

        const FeatureMap feats = compute_features<double>(image);
        const TLossState state{nu_tilde, kDefaultEpsilon, image.size()};
        BasicForwardCache<double> cache;
        forward(model, feats, cache);
        std::vector<double> d_prob(image.size());
        const ImageLoss il = image_loss<double>(tl, state, cache.prob, labels, d_prob);
        MlpGrad grad(model.hidden_dim);
        backward_accumulate<double>(model, feats, cache, d_prob, grad);

        const auto feats_l = compute_features<long double>(image);
        BasicMlp<long double> model_l(model.hidden_dim);
        std::copy(model.theta.begin(), model.theta.end(), model_l.theta.begin());
        const std::string tag = "config " + std::to_string(c) + " (H=" + std::to_string(model.hidden_dim) + ")";
        for (std::size_t k = 0; k < model.theta.size(); ++k) {
            const long double h = 1e-5L * std::max(1.0L, std::fabs(model_l.theta[k]));
            auto mp = model_l, mm = model_l;
            mp.theta[k] += h;
            mm.theta[k] -= h;
            // image_loss reports a double; recompute the value in long double instead.
            auto value = [&](const BasicMlp<long double>& m) {
                const BasicTLossState<long double> st{nu_tilde, kDefaultEpsilon, image.size()};
                const Grid<long double> prob = forward(m, feats_l);
                auto res = BasicResidual<long double>::between(std::span<const std::uint8_t>(labels.data),
                                                               std::span<const long double>(prob.data));
                return tloss_value(st, res);
            };
            const long double fd = (value(mp) - value(mm)) / (2 * h);
            acc.compare(grad.theta[k], double(fd), tag + " theta[" + std::to_string(k) + "]");
        }
        {
            const long double h = 1e-5L * std::max(1.0L, std::fabs((long double)nu_tilde));
            auto value = [&](long double nt) {
                const BasicTLossState<long double> st{nt, kDefaultEpsilon, image.size()};
                const Grid<long double> prob = forward(model_l, feats_l);
                auto res = BasicResidual<long double>::between(std::span<const std::uint8_t>(labels.data),
                                                               std::span<const long double>(prob.data));
                return tloss_value(st, res);
            };
            const long double fd = (value(nu_tilde + h) - value(nu_tilde - h)) / (2 * h);
            acc.compare(il.d_nu_tilde, double(fd), tag + " d_nu_tilde");
        }
    }
    return acc.take();
}

inline GradCheckReport run_grad_check(const GradCheckOptions& opt = {}) {
    GradCheckReport r;
    r.suites.push_back(check_tloss_gradients(opt));
    r.suites.push_back(check_baseline_gradients(opt));
    r.suites.push_back(check_model_gradients(opt));
    return r;
}

inline nlohmann::ordered_json to_json(const GradCheckReport& r) {
    nlohmann::ordered_json j;
    j["passed"] = r.passed();
    j["suites"] = nlohmann::ordered_json::array();
    for (const auto& s : r.suites) {
        nlohmann::ordered_json js;
        js["name"] = s.name;
        js["configs"] = s.configs;
        js["entries"] = s.entries;
        js["max_rel_err"] = s.max_rel_err;
        js["tolerance"] = s.tolerance;
        js["passed"] = s.passed();
        js["failures"] = s.failures;
        j["suites"].push_back(std::move(js));
    }
    return j;
}

// ---------------------------------------------------------------- limits

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

/// Ordinary least squares, accumulated in long double.
inline LinearFit fit_line(std::span<const long double> x, std::span<const long double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line: need >= 2 paired points");
    const long double n = (long double)x.size();
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    long double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    LinearFit f;
    f.slope = double(sxy / sxx);
    f.intercept = double(my - sxy / sxx * mx);
    f.r2 = syy > 0 ? double(sxy * sxy / (sxx * syy)) : 1.0;
    return f;
}

struct LimitsCase {
    double nu = 0.0;
    std::size_t dim = 0;
    LinearFit small;  ///< loss against delta^2 for delta in [1e-4, 1e-3]
    LinearFit large;  ///< loss against ln(delta) for delta in [1e3, 1e4]
    double small_theory = 0.0;
    double large_theory = 0.0;

    double small_rel_err() const { return std::fabs(small.slope - small_theory) / small_theory; }
    double large_rel_err() const { return std::fabs(large.slope - large_theory) / large_theory; }
    bool passed(double rel_tol = 0.01, double min_r2 = 0.9999) const {
        return small_rel_err() <= rel_tol && large_rel_err() <= rel_tol && small.r2 >= min_r2 && large.r2 >= min_r2;
    }
};

inline constexpr std::size_t kLimitsGridPoints = 10;

/// Fits both asymptotes for one (nu, D). The residual puts all of delta on
/// one pixel; only delta^2 matters.
inline LimitsCase check_limits(double nu, std::size_t dim) {
    if (!(nu > kDefaultEpsilon) || dim < 1) throw std::invalid_argument("check_limits: need nu > epsilon and D >= 1");
    const BasicTLossState<long double> st{std::log((long double)nu - (long double)kDefaultEpsilon), kDefaultEpsilon, dim};
    auto loss = [&](long double delta) {
        BasicResidual<long double> r;
        r.per_pixel.assign(dim, 0.0L);
        r.per_pixel[0] = delta;
        r.delta_sq = delta * delta;
        return tloss_value(st, r);
    };

    LimitsCase c;
    c.nu = nu;
    c.dim = dim;
    const long double nu_l = st.nu();
    c.small_theory = double((nu_l + dim) / (2 * nu_l));
    c.large_theory = double(nu_l + dim);

    std::vector<long double> x, y;
    for (std::size_t i = 0; i < kLimitsGridPoints; ++i) {
        const long double delta = 1e-4L + (1e-3L - 1e-4L) * i / (kLimitsGridPoints - 1);
        x.push_back(delta * delta);
        y.push_back(loss(delta));
    }
    c.small = fit_line(x, y);

    x.clear();
    y.clear();
    for (std::size_t i = 0; i < kLimitsGridPoints; ++i) {
        const long double log_delta = std::log(1e3L) + (std::log(1e4L) - std::log(1e3L)) * i / (kLimitsGridPoints - 1);
        x.push_back(log_delta);
        y.push_back(loss(std::exp(log_delta)));
    }
    c.large = fit_line(x, y);
    return c;
}

struct LimitsReport {
    std::vector<LimitsCase> cases;
    bool passed() const {
        return std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.passed(); });
    }
};

inline LimitsReport run_limits_check() {
    LimitsReport r;
    for (auto [nu, dim] : {std::pair{1.0, std::size_t(1)}, std::pair{2.0, std::size_t(1)}, std::pair{5.0, std::size_t(64)}})
        r.cases.push_back(check_limits(nu, dim));
    return r;
}

inline nlohmann::ordered_json to_json(const LimitsReport& r) {
    nlohmann::ordered_json j;
    j["passed"] = r.passed();
    j["cases"] = nlohmann::ordered_json::array();
    for (const auto& c : r.cases) {
        nlohmann::ordered_json jc;
        jc["nu"] = c.nu;
        jc["D"] = c.dim;
        jc["small_delta"] = {{"slope", c.small.slope}, {"theory", c.small_theory}, {"rel_err", c.small_rel_err()}, {"r2", c.small.r2}};
        jc["large_delta"] = {{"slope", c.large.slope}, {"theory", c.large_theory}, {"rel_err", c.large_rel_err()}, {"r2", c.large.r2}};
        jc["passed"] = c.passed();
        j["cases"].push_back(std::move(jc));
    }
    return j;
}

}  // namespace tlosslab
