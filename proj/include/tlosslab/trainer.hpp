#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tlosslab/baseline_losses.hpp"
#include "tlosslab/datagen.hpp"
#include "tlosslab/metrics.hpp"
#include "tlosslab/model.hpp"
#include "tlosslab/tloss.hpp"

namespace tlosslab {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;

    AdamMoments() = default;
    explicit AdamMoments(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update; `t` is the 1-based step count.
inline void adam_step(std::span<double> params, std::span<const double> grad, AdamMoments& moments, std::size_t t,
                      const AdamConfig& cfg) {
    if (t < 1) throw std::invalid_argument("adam_step: t must be >= 1");
    if (grad.size() != params.size() || moments.m.size() != params.size() || moments.v.size() != params.size())
        throw std::invalid_argument("adam_step: size mismatch");
    const double c1 = 1.0 - std::pow(cfg.beta1, double(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, double(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        moments.m[i] = cfg.beta1 * moments.m[i] + (1.0 - cfg.beta1) * g;
        moments.v[i] = cfg.beta2 * moments.v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = moments.m[i] / c1;
        const double v_hat = moments.v[i] / c2;
        params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    LossSpec loss;
    double nu_tilde_init = 0.0;
    double tloss_epsilon = kDefaultEpsilon;
    std::size_t hidden_dim = 16;
    std::uint64_t seed = 0;

    AdamConfig adam() const { return {lr, adam_beta1, adam_beta2, adam_eps}; }

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("TrainConfig: lr must be >= 0");
        if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw std::invalid_argument("TrainConfig: adam_beta1 must lie in [0, 1)");
        if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw std::invalid_argument("TrainConfig: adam_beta2 must lie in [0, 1)");
        if (!(adam_eps > 0.0)) throw std::invalid_argument("TrainConfig: adam_eps must be > 0");
        if (!std::isfinite(nu_tilde_init)) throw std::invalid_argument("TrainConfig: nu_tilde_init must be finite");
        if (!(tloss_epsilon > 0.0)) throw std::invalid_argument("TrainConfig: tloss_epsilon must be > 0");
        if (hidden_dim < 1) throw std::invalid_argument("TrainConfig: hidden_dim must be >= 1");
        loss.validate();
    }
};

struct ImageLoss {
    double value = 0.0;
    double d_nu_tilde = 0.0;
};

/// Loss of one image's prediction and, when `d_prob` is non-empty, dL/dp per
/// pixel written into it. Baselines average over pixels; the T-Loss treats
/// the image as one D-dimensional observation.
template <std::floating_point T>
ImageLoss image_loss(const LossSpec& spec, const BasicTLossState<T>& tstate, const Grid<T>& prob, const Mask& labels,
                     std::span<T> d_prob = {}) {
    require_same_shape(prob, labels, "image_loss");
    const bool want_grad = !d_prob.empty();
    if (want_grad && d_prob.size() != prob.size()) throw std::invalid_argument("image_loss: gradient buffer size mismatch");

    ImageLoss out;
    if (spec.kind == LossKind::TLOSS) {
        auto residual = BasicResidual<T>::between(std::span<const std::uint8_t>(labels.data), std::span<const T>(prob.data));
        out.value = double(tloss_value(tstate, residual));
        if (want_grad) {
            auto g = tloss_grad(tstate, residual);
            std::copy(g.d_prediction.begin(), g.d_prediction.end(), d_prob.begin());
            out.d_nu_tilde = double(g.d_nu_tilde);
        }
        return out;
    }

    const T inv_n = T(1) / T(prob.size());
    T sum = T(0);
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const BasicPixelPrediction<T> px{prob.data[i], labels.data[i]};
        sum += pixel_loss(spec, px);
        if (want_grad) d_prob[i] = pixel_loss_grad(spec, px) * inv_n;
    }
    out.value = double(sum * inv_n);
    return out;
}

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainResult {
    MlpModel model;
    TLossState tloss;
    TrainTrace trace;
};

struct EvalScores {
    double dice_vs_clean = 0.0;
    double dice_vs_train = 0.0;
};

/// Mean per-image dice of thresholded predictions.
inline EvalScores evaluate(const MlpModel& model, std::span<const FeatureMap> feats, std::span<const ImageSample> samples) {
    EvalScores s;
    BasicForwardCache<double> cache;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        forward(model, feats[i], cache);
        const Mask pred = binarize(cache.prob);
        s.dice_vs_clean += dice(pred, samples[i].clean_mask);
        s.dice_vs_train += dice(pred, samples[i].train_mask);
    }
    s.dice_vs_clean /= double(samples.size());
    s.dice_vs_train /= double(samples.size());
    return s;
}

inline double l2_norm(std::span<const double> v) {
    return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

struct BatchGradient {
    double loss = 0.0;        ///< mean image loss over the batch
    double d_nu_tilde = 0.0;  ///< mean dL/d(nu_tilde); zero for non-T losses
    MlpGrad grad;             ///< mean weight gradient

    explicit BatchGradient(std::size_t hidden = 16) : grad(hidden) {}
};

/// Scratch buffers reused across batches.
struct BatchWorkspace {
    BasicForwardCache<double> cache;
    std::vector<double> d_prob;
    MlpGrad sample_grad;
};

/// Mean loss and gradients over the samples `batch` indexes. Each sample's
/// gradient is formed in its own buffer and then added in batch order, so
/// the reduction order is fixed.
inline void batch_gradient(const MlpModel& model, const TLossState& tstate, const LossSpec& spec,
                           std::span<const FeatureMap> feats, std::span<const ImageSample> samples,
                           std::span<const std::size_t> batch, BatchWorkspace& ws, BatchGradient& out) {
    if (batch.empty()) throw std::invalid_argument("batch_gradient: empty batch");
    if (out.grad.hidden_dim != model.hidden_dim) out.grad = MlpGrad(model.hidden_dim);
    std::fill(out.grad.theta.begin(), out.grad.theta.end(), 0.0);
    out.loss = 0.0;
    out.d_nu_tilde = 0.0;
    if (ws.sample_grad.hidden_dim != model.hidden_dim) ws.sample_grad = MlpGrad(model.hidden_dim);
    for (std::size_t idx : batch) {
        const FeatureMap& f = feats[idx];
        ws.d_prob.resize(f.pixels());
        forward(model, f, ws.cache);
        // Diverged weights give NaN probabilities; report a NaN loss and let
        // the caller raise its diagnostic instead of a range error.
        if (!std::all_of(ws.cache.prob.data.begin(), ws.cache.prob.data.end(), [](double p) { return std::isfinite(p); })) {
            out.loss = std::numeric_limits<double>::quiet_NaN();
            return;
        }
        const ImageLoss l = image_loss<double>(spec, tstate, ws.cache.prob, samples[idx].train_mask, ws.d_prob);
        std::fill(ws.sample_grad.theta.begin(), ws.sample_grad.theta.end(), 0.0);
        backward_accumulate<double>(model, f, ws.cache, ws.d_prob, ws.sample_grad);
        for (std::size_t k = 0; k < out.grad.theta.size(); ++k) out.grad.theta[k] += ws.sample_grad.theta[k];
        out.loss += l.value;
        out.d_nu_tilde += l.d_nu_tilde;
    }
    const double inv_b = 1.0 / double(batch.size());
    out.loss *= inv_b;
    out.d_nu_tilde *= inv_b;
    for (double& g : out.grad.theta) g *= inv_b;
}

/// Mini-batch Adam on the model weights and, for the T-Loss, on nu_tilde.
/// Deterministic given cfg.seed: the run RNG initialises the weights and
/// then drives a Fisher-Yates reshuffle every epoch.
inline TrainResult train(std::span<const ImageSample> train_data, std::span<const ImageSample> test_data,
                         const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    cfg.validate();
    if (train_data.empty() || test_data.empty()) throw std::invalid_argument("train: datasets must be non-empty");
    const Mask& first = train_data.front().clean_mask;
    auto check_sample = [&](const ImageSample& s) {
        if (!s.features.same_shape(first) || !s.clean_mask.same_shape(first) || !s.train_mask.same_shape(first))
            throw std::invalid_argument("train: all samples must share one image size");
    };
    for (const auto& s : train_data) check_sample(s);
    for (const auto& s : test_data) check_sample(s);

    std::vector<FeatureMap> train_feats, test_feats;
    train_feats.reserve(train_data.size());
    test_feats.reserve(test_data.size());
    for (const auto& s : train_data) train_feats.push_back(compute_features<double>(s.features));
    for (const auto& s : test_data) test_feats.push_back(compute_features<double>(s.features));

    std::mt19937_64 rng(cfg.seed);
    TrainResult result;
    result.model = init_mlp<double>(cfg.hidden_dim, rng);
    result.tloss = TLossState{cfg.nu_tilde_init, cfg.tloss_epsilon, first.size()};
    const bool learn_nu = cfg.loss.kind == LossKind::TLOSS;
    const AdamConfig adam = cfg.adam();

    MlpModel& model = result.model;
    AdamMoments weight_moments(model.theta.size());
    AdamMoments nu_moments(1);
    BatchWorkspace ws;
    BatchGradient bg(cfg.hidden_dim);

    std::vector<std::size_t> order(train_data.size());
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::size_t step = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i - 1);
            std::swap(order[i - 1], order[pick(rng)]);
        }

        double epoch_loss = 0.0;
        for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch_size, ++batch) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> members(order.data() + start, end - start);
            batch_gradient(model, result.tloss, cfg.loss, train_feats, train_data, members, ws, bg);

            if (!std::isfinite(bg.loss) || !bg.grad.all_finite() || !std::isfinite(bg.d_nu_tilde)) {
                std::ostringstream msg;
                msg << "non-finite loss or gradient at epoch " << epoch << ", batch " << batch << " (loss=" << bg.loss
                    << ", |theta|=" << l2_norm(model.theta) << ", |grad|=" << l2_norm(bg.grad.theta)
                    << ", nu_tilde=" << result.tloss.nu_tilde << ")";
                throw TrainingDiverged(msg.str());
            }
            epoch_loss += bg.loss * double(end - start);

            ++step;
            adam_step(model.theta, bg.grad.theta, weight_moments, step, adam);
            if (learn_nu) {
                std::span<double> nu_param(&result.tloss.nu_tilde, 1);
                adam_step(nu_param, std::span<const double>(&bg.d_nu_tilde, 1), nu_moments, step, adam);
            }
        }

        const EvalScores tr = evaluate(model, train_feats, train_data);
        const EvalScores te = evaluate(model, test_feats, test_data);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / double(order.size());
        rec.dice_vs_clean = tr.dice_vs_clean;
        rec.dice_vs_noisy = tr.dice_vs_train;
        rec.test_dice = te.dice_vs_clean;
        rec.nu_tilde = result.tloss.nu_tilde;
        result.trace.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return result;
}

}  // namespace tlosslab
