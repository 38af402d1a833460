#pragma once

// Pixel-wise two-class baseline losses used as comparisons for the T-Loss.
// Every loss here is a function of p_y, the probability the model assigns to
// the labelled class, so the derivative with respect to the foreground
// probability p is dloss/dp_y * (y == 1 ? +1 : -1).

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "tlosslab/grid.hpp"

namespace tlosslab {

enum class LossKind { MSE, MAE, CE, RCE, GCE, NCE, NGCE, SCE, NCE_RCE, NGCE_MAE, NGCE_RCE, TLOSS };

inline constexpr std::array<LossKind, 12> kAllLossKinds{
    LossKind::MSE, LossKind::MAE,     LossKind::CE,       LossKind::RCE,      LossKind::GCE,  LossKind::NCE,
    LossKind::NGCE, LossKind::SCE, LossKind::NCE_RCE, LossKind::NGCE_MAE, LossKind::NGCE_RCE, LossKind::TLOSS};

inline constexpr std::string_view to_string(LossKind k) {
    switch (k) {
        case LossKind::MSE: return "MSE";
        case LossKind::MAE: return "MAE";
        case LossKind::CE: return "CE";
        case LossKind::RCE: return "RCE";
        case LossKind::GCE: return "GCE";
        case LossKind::NCE: return "NCE";
        case LossKind::NGCE: return "NGCE";
        case LossKind::SCE: return "SCE";
        case LossKind::NCE_RCE: return "NCE_RCE";
        case LossKind::NGCE_MAE: return "NGCE_MAE";
        case LossKind::NGCE_RCE: return "NGCE_RCE";
        case LossKind::TLOSS: return "TLOSS";
    }
    return "?";
}

inline std::optional<LossKind> parse_loss_kind(std::string_view s) {
    for (auto k : kAllLossKinds)
        if (to_string(k) == s) return k;
    if (s == "NCE+RCE") return LossKind::NCE_RCE;
    if (s == "NGCE+MAE") return LossKind::NGCE_MAE;
    if (s == "NGCE+RCE") return LossKind::NGCE_RCE;
    if (s == "T-Loss" || s == "TLoss") return LossKind::TLOSS;
    return std::nullopt;
}

struct LossSpec {
    LossKind kind = LossKind::MSE;
    double q = 0.7;           ///< GCE / NGCE exponent
    double clampA = -4.0;     ///< RCE stand-in for log 0
    double sce_alpha = 0.1;
    double sce_beta = 1.0;
    double apl_active_w = 1.0;
    double apl_passive_w = 1.0;

    void validate() const {
        if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("LossSpec: q must lie in (0, 1]");
        if (!(clampA < 0.0) || !std::isfinite(clampA)) throw std::invalid_argument("LossSpec: clampA must be < 0");
        for (double w : {sce_alpha, sce_beta, apl_active_w, apl_passive_w})
            if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("LossSpec: weights must be finite and >= 0");
    }
};

inline constexpr double kProbClip = 1e-7;

template <std::floating_point T>
struct BasicPixelPrediction {
    T p;           ///< foreground probability
    std::uint8_t y;  ///< label in {0, 1}
};

using PixelPrediction = BasicPixelPrediction<double>;

namespace detail {

template <std::floating_point T>
T clip_prob(T p) {
    return std::clamp(p, T(kProbClip), T(1) - T(kProbClip));
}

template <std::floating_point T>
void check_pixel(const BasicPixelPrediction<T>& pred) {
    if (!std::isfinite(pred.p) || pred.p < T(0) || pred.p > T(1))
        throw std::invalid_argument("pixel loss: probability must lie in [0, 1]");
    if (pred.y > 1) throw std::invalid_argument("pixel loss: label must be 0 or 1");
}

// Value and dloss/dp_y of the elementary losses, as functions of p_y.
template <std::floating_point T>
struct Elementary {
    T value;
    T slope;
};

template <std::floating_point T>
Elementary<T> ce(T py) { return {-std::log(py), -T(1) / py}; }

template <std::floating_point T>
Elementary<T> mae(T py) { return {T(2) * (T(1) - py), T(-2)}; }

template <std::floating_point T>
Elementary<T> mse(T py) {
    const T r = T(1) - py;
    return {T(2) * r * r, T(-4) * r};
}

// -sum_k p_k log y_k with log 0 := A: only the non-labelled class contributes.
template <std::floating_point T>
Elementary<T> rce(T py, T clampA) { return {-clampA * (T(1) - py), clampA}; }

template <std::floating_point T>
Elementary<T> gce(T py, T q) { return {(T(1) - std::pow(py, q)) / q, -std::pow(py, q - T(1))}; }

template <std::floating_point T>
Elementary<T> nce(T py) {
    const T lp = std::log(py);
    const T lo = std::log(T(1) - py);
    const T den = lp + lo;
    const T dden = T(1) / py - T(1) / (T(1) - py);
    return {lp / den, ((T(1) / py) * den - lp * dden) / (den * den)};
}

template <std::floating_point T>
Elementary<T> ngce(T py, T q) {
    const T po = T(1) - py;
    const T num = T(1) - std::pow(py, q);
    const T den = T(2) - std::pow(py, q) - std::pow(po, q);
    const T dnum = -q * std::pow(py, q - T(1));
    const T dden = -q * std::pow(py, q - T(1)) + q * std::pow(po, q - T(1));
    return {num / den, (dnum * den - num * dden) / (den * den)};
}

template <std::floating_point T>
Elementary<T> combine(T wa, Elementary<T> a, T wb, Elementary<T> b) {
    return {wa * a.value + wb * b.value, wa * a.slope + wb * b.slope};
}

template <std::floating_point T>
Elementary<T> evaluate(const LossSpec& spec, T py) {
    const T q = T(spec.q);
    const T A = T(spec.clampA);
    const T wa = T(spec.apl_active_w);
    const T wp = T(spec.apl_passive_w);
    switch (spec.kind) {
        case LossKind::MSE: return mse(py);
        case LossKind::MAE: return mae(py);
        case LossKind::CE: return ce(py);
        case LossKind::RCE: return rce(py, A);
        case LossKind::GCE: return gce(py, q);
        case LossKind::NCE: return nce(py);
        case LossKind::NGCE: return ngce(py, q);
        case LossKind::SCE: return combine(T(spec.sce_alpha), ce(py), T(spec.sce_beta), rce(py, A));
        case LossKind::NCE_RCE: return combine(wa, nce(py), wp, rce(py, A));
        case LossKind::NGCE_MAE: return combine(wa, ngce(py, q), wp, mae(py));
        case LossKind::NGCE_RCE: return combine(wa, ngce(py, q), wp, rce(py, A));
        case LossKind::TLOSS: break;
    }
    throw std::invalid_argument("pixel loss: TLOSS is an image-level loss, use tloss_value");
}

}  // namespace detail

/// Loss of one pixel. Probabilities are clipped to [1e-7, 1 - 1e-7] first.
template <std::floating_point T>
T pixel_loss(const LossSpec& spec, const BasicPixelPrediction<T>& pred) {
    detail::check_pixel(pred);
    const T p = detail::clip_prob(pred.p);
    const T py = pred.y ? p : T(1) - p;
    return detail::evaluate(spec, py).value;
}

/// d pixel_loss / d p (foreground probability), evaluated at the clipped p.
template <std::floating_point T>
T pixel_loss_grad(const LossSpec& spec, const BasicPixelPrediction<T>& pred) {
    detail::check_pixel(pred);
    const T p = detail::clip_prob(pred.p);
    const T py = pred.y ? p : T(1) - p;
    const T slope = detail::evaluate(spec, py).slope;
    return pred.y ? slope : -slope;
}

/// Mean pixel loss over a probability grid.
template <std::floating_point T>
T mask_loss(const LossSpec& spec, const Grid<T>& predictions, const Mask& labels) {
    require_same_shape(predictions, labels, "mask_loss");
    if (predictions.empty()) throw std::invalid_argument("mask_loss: empty grid");
    T sum = T(0);
    for (std::size_t i = 0; i < predictions.size(); ++i)
        sum += pixel_loss(spec, BasicPixelPrediction<T>{predictions.data[i], labels.data[i]});
    return sum / T(predictions.size());
}

}  // namespace tlosslab
