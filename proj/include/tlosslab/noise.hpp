#pragma once

// Simulated annotation noise: a fraction alpha of masks is corrupted by one
// of erosion, dilation or an affine displacement whose strength scales with
// beta and with the size of the annotated object.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tlosslab/grid.hpp"
#include "tlosslab/metrics.hpp"

namespace tlosslab {

namespace detail {

// Sliding-window count of foreground along one line; out-of-frame samples are
// background. `erode` keeps a pixel only if the full window is foreground.
inline void window_pass(const Mask& in, Mask& out, int radius, bool horizontal, bool erode) {
    const int w = int(in.width), h = int(in.height);
    const int lines = horizontal ? h : w;
    const int len = horizontal ? w : h;
    const int full = 2 * radius + 1;
    std::vector<int> prefix(std::size_t(len) + 1);
    for (int l = 0; l < lines; ++l) {
        auto at = [&](int i) -> std::size_t {
            return horizontal ? std::size_t(l) * std::size_t(w) + std::size_t(i)
                              : std::size_t(i) * std::size_t(w) + std::size_t(l);
        };
        prefix[0] = 0;
        for (int i = 0; i < len; ++i) prefix[std::size_t(i) + 1] = prefix[std::size_t(i)] + in.data[at(i)];
        for (int i = 0; i < len; ++i) {
            const int lo = std::max(0, i - radius);
            const int hi = std::min(len, i + radius + 1);
            const int count = prefix[std::size_t(hi)] - prefix[std::size_t(lo)];
            out.data[at(i)] = erode ? (count == full ? 1 : 0) : (count > 0 ? 1 : 0);
        }
    }
}

inline Mask square_morphology(const Mask& mask, int radius, bool erode) {
    validate_mask(mask);
    if (radius < 1) throw std::invalid_argument("morphology radius must be >= 1");
    Mask tmp(mask.width, mask.height), out(mask.width, mask.height);
    window_pass(mask, tmp, radius, true, erode);
    window_pass(tmp, out, radius, false, erode);
    return out;
}

}  // namespace detail

/// A pixel stays foreground iff every pixel within Chebyshev distance
/// `radius` is foreground. Pixels outside the frame count as background.
inline Mask erode(const Mask& mask, int radius) { return detail::square_morphology(mask, radius, true); }

/// A pixel becomes foreground iff any pixel within Chebyshev distance
/// `radius` is foreground.
inline Mask dilate(const Mask& mask, int radius) { return detail::square_morphology(mask, radius, false); }

/// Scale and rotate about the foreground centroid, then translate by
/// (dx * width, dy * height). Nearest-neighbour inverse mapping; anything
/// mapped from outside the frame is background.
inline Mask affine_displace(const Mask& mask, double dx, double dy, double angle_deg, double scale) {
    validate_mask(mask);
    if (!(scale > 0.0) || !std::isfinite(scale)) throw std::invalid_argument("affine_displace: scale must be > 0");

    double cx = 0.0, cy = 0.0;
    const std::size_t n = area(mask);
    if (n == 0) return mask;
    for (std::size_t y = 0; y < mask.height; ++y)
        for (std::size_t x = 0; x < mask.width; ++x)
            if (mask(x, y)) {
                cx += double(x);
                cy += double(y);
            }
    cx /= double(n);
    cy /= double(n);

    const double theta = angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    const double tx = dx * double(mask.width), ty = dy * double(mask.height);

    Mask out(mask.width, mask.height);
    for (std::size_t y = 0; y < mask.height; ++y) {
        for (std::size_t x = 0; x < mask.width; ++x) {
            const double ux = double(x) - tx - cx;
            const double uy = double(y) - ty - cy;
            // Inverse rotation then inverse scale.
            const double sx = cx + (c * ux + s * uy) / scale;
            const double sy = cy + (-s * ux + c * uy) / scale;
            const double rx = std::floor(sx + 0.5), ry = std::floor(sy + 0.5);
            if (rx < 0.0 || ry < 0.0 || rx >= double(mask.width) || ry >= double(mask.height)) continue;
            out(x, y) = mask(std::size_t(rx), std::size_t(ry));
        }
    }
    return out;
}

struct NoiseConfig {
    double alpha = 0.0;  ///< probability that a mask is corrupted
    double beta = 0.5;   ///< corruption strength
    std::uint64_t seed = 0;

    void validate() const {
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("NoiseConfig: alpha must lie in [0, 1]");
        if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("NoiseConfig: beta must lie in [0, 1]");
    }
};

enum class Transform { None, Erode, Dilate, Affine };

inline constexpr std::string_view to_string(Transform t) {
    switch (t) {
        case Transform::None: return "none";
        case Transform::Erode: return "erode";
        case Transform::Dilate: return "dilate";
        case Transform::Affine: return "affine";
    }
    return "?";
}

struct TransformParams {
    int radius = 0;
    double dx = 0.0, dy = 0.0, angle_deg = 0.0, scale = 1.0;
};

struct ManifestEntry {
    std::size_t index = 0;
    bool selected = false;
    Transform transform = Transform::None;
    TransformParams params;
    double dice_vs_original = 1.0;
    int attempts = 0;  ///< draws used; > 1 when an empty result was redrawn
};

inline nlohmann::ordered_json to_json(const ManifestEntry& e) {
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    if (e.transform == Transform::Erode || e.transform == Transform::Dilate) {
        params["radius"] = e.params.radius;
    } else if (e.transform == Transform::Affine) {
        params["dx"] = e.params.dx;
        params["dy"] = e.params.dy;
        params["angle_deg"] = e.params.angle_deg;
        params["scale"] = e.params.scale;
    }
    nlohmann::ordered_json j;
    j["index"] = e.index;
    j["selected"] = e.selected;
    j["transform"] = std::string(to_string(e.transform));
    j["params"] = params;
    j["dice_vs_original"] = e.dice_vs_original;
    return j;
}

/// One JSON object per line.
inline std::string manifest_jsonl(std::span<const ManifestEntry> manifest) {
    std::string out;
    for (const auto& e : manifest) {
        out += to_json(e).dump();
        out += '\n';
    }
    return out;
}

struct CorruptionResult {
    std::vector<Mask> masks;
    std::vector<ManifestEntry> manifest;

    std::size_t selected_count() const {
        return std::size_t(std::count_if(manifest.begin(), manifest.end(), [](const auto& e) { return e.selected; }));
    }
};

/// Erosion/dilation radius for a given object area and noise level.
inline int morphology_radius(std::size_t foreground_area, double beta) {
    return std::max(1, int(std::lround(beta * 0.15 * std::sqrt(double(foreground_area)))));
}

inline constexpr int kMaxCorruptionAttempts = 6;  // first draw plus 5 redraws

/// Corrupt each mask independently with probability alpha. Deterministic in
/// cfg.seed. Transform draws are scaled by beta rather than drawn from
/// beta-dependent ranges, so runs differing only in beta corrupt the same
/// masks with the same transforms.
inline CorruptionResult corrupt_dataset(std::span<const Mask> masks, const NoiseConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> sym(-1.0, 1.0);
    std::uniform_int_distribution<int> pick(0, 2);

    CorruptionResult result;
    result.masks.reserve(masks.size());
    result.manifest.reserve(masks.size());
    for (std::size_t i = 0; i < masks.size(); ++i) {
        const Mask& original = masks[i];
        validate_mask(original);
        ManifestEntry entry;
        entry.index = i;
        entry.selected = unit(rng) < cfg.alpha;
        if (!entry.selected) {
            result.masks.push_back(original);
            result.manifest.push_back(entry);
            continue;
        }

        const std::size_t a0 = area(original);
        Mask corrupted;
        for (int attempt = 1; attempt <= kMaxCorruptionAttempts; ++attempt) {
            entry.attempts = attempt;
            entry.params = TransformParams{};
            switch (pick(rng)) {
                case 0:
                    entry.transform = Transform::Erode;
                    entry.params.radius = morphology_radius(a0, cfg.beta);
                    corrupted = erode(original, entry.params.radius);
                    break;
                case 1:
                    entry.transform = Transform::Dilate;
                    entry.params.radius = morphology_radius(a0, cfg.beta);
                    corrupted = dilate(original, entry.params.radius);
                    break;
                default:
                    entry.transform = Transform::Affine;
                    entry.params.dx = 0.15 * cfg.beta * sym(rng);
                    entry.params.dy = 0.15 * cfg.beta * sym(rng);
                    entry.params.angle_deg = 30.0 * cfg.beta * sym(rng);
                    entry.params.scale = 1.0 + 0.25 * cfg.beta * sym(rng);
                    corrupted = affine_displace(original, entry.params.dx, entry.params.dy, entry.params.angle_deg,
                                                entry.params.scale);
                    break;
            }
            if (a0 == 0 || area(corrupted) > 0) break;
        }
        entry.dice_vs_original = dice(corrupted, original);
        result.masks.push_back(std::move(corrupted));
        result.manifest.push_back(entry);
    }
    return result;
}

}  // namespace tlosslab
