#pragma once

// Synthetic segmentation data: one filled ellipse per image on a flat
// background, plus clipped Gaussian pixel noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "tlosslab/grid.hpp"

namespace tlosslab {

struct ImageSample {
    Grid<double> features;  ///< intensity image in [0, 1]
    Mask clean_mask;
    Mask train_mask;  ///< what the model is trained on; equals clean_mask until noise is injected

    friend bool operator==(const ImageSample&, const ImageSample&) = default;
};

struct DatasetConfig {
    std::size_t n_train = 200;
    std::size_t n_test = 100;
    std::size_t side = 64;
    double contrast = 0.5;
    double pixel_noise_sigma = 0.15;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_train < 1 || n_test < 1) throw std::invalid_argument("DatasetConfig: n_train and n_test must be >= 1");
        if (side < 16) throw std::invalid_argument("DatasetConfig: side must be >= 16");
        if (!(contrast > 0.0) || !std::isfinite(contrast)) throw std::invalid_argument("DatasetConfig: contrast must be > 0");
        if (!(pixel_noise_sigma >= 0.0) || !std::isfinite(pixel_noise_sigma))
            throw std::invalid_argument("DatasetConfig: pixel_noise_sigma must be >= 0");
    }

    /// Intensity levels sit symmetrically about 0.5: at the default contrast
    /// the background is 0.25, and contrast 1 gives a 0/1 image.
    double background_level() const { return 0.5 - 0.5 * contrast; }
};

struct Dataset {
    std::vector<ImageSample> train;
    std::vector<ImageSample> test;
};

struct Ellipse {
    double cx, cy, a, b, theta;

    bool contains(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double c = std::cos(theta), s = std::sin(theta);
        const double u = (dx * c + dy * s) / a;
        const double v = (-dx * s + dy * c) / b;
        return u * u + v * v <= 1.0;
    }
};

inline Mask rasterize(const Ellipse& e, std::size_t side) {
    Mask m(side, side);
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) m(x, y) = e.contains(double(x), double(y)) ? 1 : 0;
    return m;
}

inline ImageSample generate_sample(const DatasetConfig& cfg, std::mt19937_64& rng) {
    const double side = double(cfg.side);
    std::uniform_real_distribution<double> center(0.2 * side, 0.8 * side);
    std::uniform_real_distribution<double> axis(side / 8.0, side / 3.0);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::normal_distribution<double> noise(0.0, 1.0);

    Ellipse e{};
    e.cx = center(rng);
    e.cy = center(rng);
    e.a = axis(rng);
    e.b = axis(rng);
    e.theta = angle(rng);

    ImageSample s;
    s.clean_mask = rasterize(e, cfg.side);
    s.train_mask = s.clean_mask;
    s.features = Grid<double>(cfg.side, cfg.side);
    const double bg = cfg.background_level();
    for (std::size_t i = 0; i < s.features.size(); ++i) {
        double v = bg + cfg.contrast * double(s.clean_mask.data[i]);
        if (cfg.pixel_noise_sigma > 0.0) v += cfg.pixel_noise_sigma * noise(rng);
        s.features.data[i] = std::clamp(v, 0.0, 1.0);
    }
    return s;
}

/// Train and test sets come from independent RNG streams derived from the
/// seed, so the size of one split never changes the content of the other.
inline Dataset generate(const DatasetConfig& cfg) {
    cfg.validate();
    Dataset ds;
    std::seed_seq train_seq{std::uint32_t(cfg.seed), std::uint32_t(cfg.seed >> 32), 0u};
    std::seed_seq test_seq{std::uint32_t(cfg.seed), std::uint32_t(cfg.seed >> 32), 1u};
    std::mt19937_64 train_rng(train_seq), test_rng(test_seq);
    ds.train.reserve(cfg.n_train);
    ds.test.reserve(cfg.n_test);
    for (std::size_t i = 0; i < cfg.n_train; ++i) ds.train.push_back(generate_sample(cfg, train_rng));
    for (std::size_t i = 0; i < cfg.n_test; ++i) ds.test.push_back(generate_sample(cfg, test_rng));
    return ds;
}

}  // namespace tlosslab
