#pragma once

// Per-pixel two-layer perceptron f_w: five handcrafted features per pixel,
// a tanh hidden layer and a sigmoid output, with hand-written reverse mode.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tlosslab/grid.hpp"

namespace tlosslab {

inline constexpr std::size_t kNumFeatures = 5;

/// The first layer sees x - kInputCenter. All features lie in [0, 1];
/// centring them keeps the background majority from dragging every
/// first-layer weight the same way at initialisation.
inline constexpr double kInputCenter = 0.5;

/// [intensity, 3x3 mean, 7x7 mean, x / width, y / height] for every pixel,
/// stored pixel-major. Local means use zero padding at the borders.
template <std::floating_point T>
struct BasicFeatureMap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<T> values;

    std::size_t pixels() const { return width * height; }
    const T* pixel(std::size_t i) const { return values.data() + i * kNumFeatures; }
};

using FeatureMap = BasicFeatureMap<double>;

namespace detail {

// Zero-padded box mean of half-width r using an integral image.
inline std::vector<double> box_mean(const Grid<double>& img, int r) {
    const std::size_t w = img.width, h = img.height;
    std::vector<double> integral((w + 1) * (h + 1), 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        double row = 0.0;
        for (std::size_t x = 0; x < w; ++x) {
            row += img(x, y);
            integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
        }
    }
    const double norm = double((2 * r + 1) * (2 * r + 1));
    std::vector<double> out(w * h);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t x0 = std::size_t(std::max<long>(0, long(x) - r));
            const std::size_t y0 = std::size_t(std::max<long>(0, long(y) - r));
            const std::size_t x1 = std::min(w, x + std::size_t(r) + 1);
            const std::size_t y1 = std::min(h, y + std::size_t(r) + 1);
            const double s = integral[y1 * (w + 1) + x1] - integral[y0 * (w + 1) + x1] - integral[y1 * (w + 1) + x0] +
                             integral[y0 * (w + 1) + x0];
            out[y * w + x] = s / norm;
        }
    }
    return out;
}

}  // namespace detail

template <std::floating_point T = double>
BasicFeatureMap<T> compute_features(const Grid<double>& image) {
    BasicFeatureMap<T> f;
    f.width = image.width;
    f.height = image.height;
    f.values.resize(image.size() * kNumFeatures);
    const auto m3 = detail::box_mean(image, 1);
    const auto m7 = detail::box_mean(image, 3);
    for (std::size_t y = 0; y < image.height; ++y) {
        for (std::size_t x = 0; x < image.width; ++x) {
            const std::size_t i = y * image.width + x;
            T* v = f.values.data() + i * kNumFeatures;
            v[0] = T(image.data[i]);
            v[1] = T(m3[i]);
            v[2] = T(m7[i]);
            v[3] = T(double(x) / double(image.width));
            v[4] = T(double(y) / double(image.height));
        }
    }
    return f;
}

/// Parameters live in one flat vector laid out as [W1 | b1 | W2 | b2], W1
/// row-major hidden_dim x 5. The same type doubles as a gradient container.
template <std::floating_point T>
struct BasicMlp {
    std::size_t hidden_dim = 16;
    std::vector<T> theta;

    BasicMlp() : BasicMlp(16) {}
    explicit BasicMlp(std::size_t hidden) : hidden_dim(hidden), theta(param_count(hidden), T(0)) {
        if (hidden < 1) throw std::invalid_argument("MlpModel: hidden_dim must be >= 1");
    }

    static constexpr std::size_t param_count(std::size_t hidden) { return hidden * (kNumFeatures + 2) + 1; }

    std::span<T> w1() { return {theta.data(), hidden_dim * kNumFeatures}; }
    std::span<T> b1() { return {theta.data() + hidden_dim * kNumFeatures, hidden_dim}; }
    std::span<T> w2() { return {theta.data() + hidden_dim * (kNumFeatures + 1), hidden_dim}; }
    T& b2() { return theta.back(); }
    std::span<const T> w1() const { return {theta.data(), hidden_dim * kNumFeatures}; }
    std::span<const T> b1() const { return {theta.data() + hidden_dim * kNumFeatures, hidden_dim}; }
    std::span<const T> w2() const { return {theta.data() + hidden_dim * (kNumFeatures + 1), hidden_dim}; }
    T b2() const { return theta.back(); }

    bool all_finite() const {
        for (T v : theta)
            if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const BasicMlp&, const BasicMlp&) = default;
};

using MlpModel = BasicMlp<double>;
using MlpGrad = BasicMlp<double>;

/// Uniform(+-1/sqrt(fan_in)) weights, zero biases.
template <std::floating_point T, typename Rng>
BasicMlp<T> init_mlp(std::size_t hidden, Rng& rng) {
    BasicMlp<T> m(hidden);
    std::uniform_real_distribution<double> u1(-1.0 / std::sqrt(double(kNumFeatures)), 1.0 / std::sqrt(double(kNumFeatures)));
    std::uniform_real_distribution<double> u2(-1.0 / std::sqrt(double(hidden)), 1.0 / std::sqrt(double(hidden)));
    for (T& w : m.w1()) w = T(u1(rng));
    for (T& w : m.w2()) w = T(u2(rng));
    return m;
}

/// Forward activations kept for the backward pass.
template <std::floating_point T>
struct BasicForwardCache {
    Grid<T> prob;
    Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic> hidden;  ///< tanh activations, hidden_dim x pixels
};

namespace detail {

template <std::floating_point T>
void check_model(const BasicMlp<T>& model) {
    if (model.theta.size() != BasicMlp<T>::param_count(model.hidden_dim))
        throw std::invalid_argument("MlpModel: parameter vector has the wrong size");
}

template <std::floating_point T>
using ColMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <std::floating_point T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <std::floating_point T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <std::floating_point T>
auto feature_matrix(const BasicFeatureMap<T>& feats) {
    return Eigen::Map<const ColMat<T>>(feats.values.data(), Eigen::Index(kNumFeatures), Eigen::Index(feats.pixels()));
}

}  // namespace detail

template <std::floating_point T>
void forward(const BasicMlp<T>& model, const BasicFeatureMap<T>& feats, BasicForwardCache<T>& cache) {
    detail::check_model(model);
    const auto H = Eigen::Index(model.hidden_dim);
    const auto X = detail::feature_matrix(feats);
    const Eigen::Map<const detail::RowMat<T>> W1(model.w1().data(), H, Eigen::Index(kNumFeatures));
    const Eigen::Map<const detail::Vec<T>> b1(model.b1().data(), H);
    const Eigen::Map<const detail::Vec<T>> w2(model.w2().data(), H);

    const detail::Vec<T> bias = b1 - W1.rowwise().sum() * T(kInputCenter);
    cache.hidden = ((W1 * X).colwise() + bias).array();
    // tanh(a) = 1 - 2 / (exp(2a) + 1); Eigen vectorizes exp but not tanh.
    cache.hidden = T(1) - T(2) / ((T(2) * cache.hidden).exp() + T(1));

    Eigen::Array<T, 1, Eigen::Dynamic> z = (w2.transpose() * cache.hidden.matrix()).array() + model.b2();
    const Eigen::Array<T, 1, Eigen::Dynamic> e = (-z.abs()).exp();
    cache.prob = Grid<T>(feats.width, feats.height);
    Eigen::Map<Eigen::Array<T, 1, Eigen::Dynamic>> p(cache.prob.data.data(), Eigen::Index(feats.pixels()));
    p = (z >= T(0)).select(T(1) / (T(1) + e), e / (T(1) + e));
}

/// Per-pixel foreground probability.
template <std::floating_point T>
Grid<T> forward(const BasicMlp<T>& model, const BasicFeatureMap<T>& feats) {
    BasicForwardCache<T> cache;
    forward(model, feats, cache);
    return std::move(cache.prob);
}

/// Accumulates d(upstream)/d(theta) into `grad` given dL/dp per pixel.
template <std::floating_point T>
void backward_accumulate(const BasicMlp<T>& model, const BasicFeatureMap<T>& feats, const BasicForwardCache<T>& cache,
                         std::span<const T> d_prob, BasicMlp<T>& grad) {
    const auto H = Eigen::Index(model.hidden_dim);
    const auto n = Eigen::Index(feats.pixels());
    if (Eigen::Index(d_prob.size()) != n || Eigen::Index(cache.prob.size()) != n || cache.hidden.cols() != n)
        throw std::invalid_argument("backward: gradient grid does not match the feature map");
    if (grad.hidden_dim != model.hidden_dim || grad.theta.size() != model.theta.size())
        throw std::invalid_argument("backward: gradient container does not match the model");

    const auto X = detail::feature_matrix(feats);
    const Eigen::Map<const detail::Vec<T>> w2(model.w2().data(), H);
    const Eigen::Map<const Eigen::Array<T, 1, Eigen::Dynamic>> p(cache.prob.data.data(), n);
    const Eigen::Map<const Eigen::Array<T, 1, Eigen::Dynamic>> dp(d_prob.data(), n);

    Eigen::Map<detail::RowMat<T>> gW1(grad.w1().data(), H, Eigen::Index(kNumFeatures));
    Eigen::Map<detail::Vec<T>> gb1(grad.b1().data(), H);
    Eigen::Map<detail::Vec<T>> gw2(grad.w2().data(), H);

    const Eigen::Array<T, 1, Eigen::Dynamic> dz = dp * p * (T(1) - p);
    gw2.noalias() += cache.hidden.matrix() * dz.matrix().transpose();
    grad.b2() += dz.sum();
    const Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic> da =
        (w2 * dz.matrix()).array() * (T(1) - cache.hidden.square());
    const detail::Vec<T> da_sum = da.rowwise().sum().matrix();
    gW1.noalias() += da.matrix() * X.transpose();
    gW1.colwise() -= da_sum * T(kInputCenter);
    gb1 += da_sum;
}

/// Weight gradients of (upstream o forward) for one image.
template <std::floating_point T>
BasicMlp<T> backward(const BasicMlp<T>& model, const BasicFeatureMap<T>& feats, std::span<const T> d_prob) {
    BasicForwardCache<T> cache;
    forward(model, feats, cache);
    BasicMlp<T> grad(model.hidden_dim);
    backward_accumulate(model, feats, cache, d_prob, grad);
    return grad;
}

inline nlohmann::ordered_json model_to_json(const MlpModel& m) {
    nlohmann::ordered_json j;
    j["hidden_dim"] = m.hidden_dim;
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < m.hidden_dim; ++k)
        rows.push_back(std::vector<double>(m.w1().begin() + long(k * kNumFeatures),
                                           m.w1().begin() + long((k + 1) * kNumFeatures)));
    j["W1"] = rows;
    j["b1"] = std::vector<double>(m.b1().begin(), m.b1().end());
    j["W2"] = std::vector<double>(m.w2().begin(), m.w2().end());
    j["b2"] = m.b2();
    return j;
}

inline MlpModel model_from_json(const nlohmann::json& j) {
    MlpModel m(j.at("hidden_dim").get<std::size_t>());
    const auto& rows = j.at("W1");
    if (rows.size() != m.hidden_dim) throw std::invalid_argument("checkpoint: W1 must have hidden_dim rows");
    for (std::size_t k = 0; k < m.hidden_dim; ++k) {
        const auto row = rows.at(k).get<std::vector<double>>();
        if (row.size() != kNumFeatures) throw std::invalid_argument("checkpoint: W1 rows must have 5 entries");
        std::copy(row.begin(), row.end(), m.w1().begin() + long(k * kNumFeatures));
    }
    const auto b1 = j.at("b1").get<std::vector<double>>();
    const auto w2 = j.at("W2").get<std::vector<double>>();
    if (b1.size() != m.hidden_dim || w2.size() != m.hidden_dim)
        throw std::invalid_argument("checkpoint: b1 and W2 must have hidden_dim entries");
    std::copy(b1.begin(), b1.end(), m.b1().begin());
    std::copy(w2.begin(), w2.end(), m.w2().begin());
    m.b2() = j.at("b2").get<double>();
    return m;
}

}  // namespace tlosslab
