#pragma once

// T-Loss: negative log-likelihood of a D-dimensional Student-t with identity
// scale, evaluated once per image mask,
//
//   L = -lnG((nu+D)/2) + lnG(nu/2) + (D/2) ln(pi nu) + ((nu+D)/2) ln(1 + delta^2/nu),
//
// with delta^2 = sum_j (y_j - f_j)^2 and nu = exp(nu_tilde) + epsilon. The
// additive constants are kept: they drive the nu_tilde gradient.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "tlosslab/special_fn.hpp"

namespace tlosslab {

/// exp(nu_tilde) saturates here instead of overflowing.
inline constexpr double kNuMax = 1e12;
inline constexpr double kDefaultEpsilon = 1e-8;

template <std::floating_point T>
struct BasicTLossState {
    T nu_tilde = T(0);
    T epsilon = T(kDefaultEpsilon);
    std::size_t dim = 1;

    /// exp(nu_tilde), clamped to kNuMax.
    T exp_nu_tilde() const { return std::min(std::exp(nu_tilde), T(kNuMax)); }
    T nu() const { return exp_nu_tilde() + epsilon; }

    void validate() const {
        if (!std::isfinite(nu_tilde)) throw std::invalid_argument("TLossState: nu_tilde must be finite");
        if (!std::isfinite(epsilon) || !(epsilon > T(0)))
            throw std::invalid_argument("TLossState: epsilon must be finite and > 0");
        if (dim < 1) throw std::invalid_argument("TLossState: dim must be >= 1");
    }
};

using TLossState = BasicTLossState<double>;

/// Per-pixel residual y - f for one image, with its squared norm cached.
template <std::floating_point T>
struct BasicResidual {
    std::vector<T> per_pixel;
    T delta_sq = T(0);

    BasicResidual() = default;
    explicit BasicResidual(std::vector<T> r) : per_pixel(std::move(r)) {
        for (T v : per_pixel) delta_sq += v * v;
    }

    /// labels - predictions, componentwise.
    template <typename L, typename P>
    static BasicResidual between(std::span<const L> labels, std::span<const P> predictions) {
        if (labels.size() != predictions.size()) throw std::invalid_argument("Residual: label/prediction size mismatch");
        std::vector<T> r(labels.size());
        for (std::size_t i = 0; i < r.size(); ++i) r[i] = T(labels[i]) - T(predictions[i]);
        return BasicResidual(std::move(r));
    }

    std::size_t size() const { return per_pixel.size(); }
};

using Residual = BasicResidual<double>;

template <std::floating_point T>
struct BasicTLossGrad {
    std::vector<T> d_prediction;  ///< dL/df per pixel
    T d_nu_tilde = T(0);
};

using TLossGrad = BasicTLossGrad<double>;

namespace detail {

template <std::floating_point T>
void check_tloss_inputs(const BasicTLossState<T>& state, const BasicResidual<T>& residual) {
    state.validate();
    if (residual.per_pixel.size() != state.dim)
        throw std::invalid_argument("tloss: residual has " + std::to_string(residual.per_pixel.size()) +
                                    " entries, state.dim is " + std::to_string(state.dim));
    if (!std::isfinite(residual.delta_sq) || residual.delta_sq < T(0))
        throw std::invalid_argument("tloss: residual is not finite");
}

// The gamma terms are evaluated in long double: at large nu the two
// log-gamma values are ~nu/2 ln(nu/2) and their difference is what matters.
template <std::floating_point T>
using Wide = std::conditional_t<(sizeof(T) > sizeof(long double)), T, long double>;

}  // namespace detail

/// T-Loss for a single image given its residual vector.
template <std::floating_point T>
T tloss_value(const BasicTLossState<T>& state, const BasicResidual<T>& residual) {
    detail::check_tloss_inputs(state, residual);
    using W = detail::Wide<T>;
    const W nu = W(state.nu());
    const W d = W(state.dim);
    const W gamma_part = -log_gamma<W>((nu + d) / W(2)) + log_gamma<W>(nu / W(2));
    const W norm_part = d / W(2) * std::log(std::numbers::pi_v<W> * nu);
    const W tail_part = (nu + d) / W(2) * std::log1p(W(residual.delta_sq) / nu);
    return T(gamma_part + norm_part + tail_part);
}

/// Analytic gradient with respect to the predictions and to nu_tilde.
template <std::floating_point T>
BasicTLossGrad<T> tloss_grad(const BasicTLossState<T>& state, const BasicResidual<T>& residual) {
    detail::check_tloss_inputs(state, residual);
    using W = detail::Wide<T>;
    const W e = W(state.exp_nu_tilde());
    const W nu = e + W(state.epsilon);
    const W d = W(state.dim);
    const W dsq = W(residual.delta_sq);

    BasicTLossGrad<T> g;
    g.d_prediction.resize(residual.per_pixel.size());
    const W scale = -(nu + d) / (nu + dsq);
    for (std::size_t j = 0; j < g.d_prediction.size(); ++j) g.d_prediction[j] = T(scale * W(residual.per_pixel[j]));

    const W d_nu = -digamma<W>((nu + d) / W(2)) / W(2) + digamma<W>(nu / W(2)) / W(2) + d / (W(2) * nu) +
                   std::log1p(dsq / nu) / W(2) - (nu + d) * dsq / (W(2) * nu * (nu + dsq));
    // Past saturation the clamp has zero slope; pass the gradient straight
    // through so an optimizer can still walk nu_tilde back.
    g.d_nu_tilde = T(d_nu * e);
    return g;
}

/// Mean of tloss_value over a dataset of per-image residuals.
template <std::floating_point T>
T tloss_dataset(const BasicTLossState<T>& state, std::span<const BasicResidual<T>> residuals) {
    if (residuals.empty()) throw std::invalid_argument("tloss_dataset: empty residual list");
    T sum = T(0);
    for (const auto& r : residuals) sum += tloss_value(state, r);
    return sum / T(residuals.size());
}

template <std::floating_point T>
T tloss_dataset(const BasicTLossState<T>& state, const std::vector<BasicResidual<T>>& residuals) {
    return tloss_dataset(state, std::span<const BasicResidual<T>>(residuals));
}

}  // namespace tlosslab
