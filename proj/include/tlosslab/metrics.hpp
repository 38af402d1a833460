#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tlosslab/grid.hpp"

namespace tlosslab {

/// 2|A n B| / (|A| + |B|). Two empty masks agree perfectly and score 1.
inline double dice(const Mask& pred, const Mask& truth) {
    require_same_shape(pred, truth, "dice");
    std::size_t inter = 0, a = 0, b = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        a += pred.data[i];
        b += truth.data[i];
        inter += pred.data[i] & truth.data[i];
    }
    if (a + b == 0) return 1.0;
    return 2.0 * double(inter) / double(a + b);
}

inline Mask binarize(const ProbGrid& probabilities, double threshold = 0.5) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("binarize: threshold must lie in (0, 1)");
    Mask out(probabilities.width, probabilities.height);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = probabilities.data[i] > threshold ? 1 : 0;
    return out;
}

struct EpochRecord {
    std::size_t epoch = 0;  ///< 1-based
    double train_loss = 0.0;
    double dice_vs_clean = 0.0;  ///< training predictions against clean masks
    double dice_vs_noisy = 0.0;  ///< training predictions against the masks trained on
    double test_dice = 0.0;
    double nu_tilde = 0.0;

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

using TrainTrace = std::vector<EpochRecord>;

struct SummaryStat {
    double mean = 0.0;
    double std = 0.0;  ///< sample standard deviation, 0 when n == 1
    std::size_t n = 0;
};

/// Mean and sample (n - 1) standard deviation. Values are summed in sorted
/// order so the result does not depend on input order.
inline SummaryStat summarize_values(std::span<const double> input) {
    if (input.empty()) throw std::invalid_argument("summarize: no values");
    std::vector<double> values(input.begin(), input.end());
    std::sort(values.begin(), values.end());
    SummaryStat s;
    s.n = values.size();
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / double(s.n);
    if (s.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / double(s.n - 1));
    }
    return s;
}

/// Mean test dice over the final `last_k` epochs of one run.
inline double last_k_mean(const TrainTrace& trace, std::size_t last_k) {
    if (last_k == 0) throw std::invalid_argument("last_k_mean: last_k must be >= 1");
    if (trace.size() < last_k)
        throw std::invalid_argument("last_k_mean: trace has " + std::to_string(trace.size()) + " epochs, need " +
                                    std::to_string(last_k));
    double sum = 0.0;
    for (std::size_t i = trace.size() - last_k; i < trace.size(); ++i) sum += trace[i].test_dice;
    return sum / double(last_k);
}

/// Per-seed last-k mean, then mean +- sample std across seeds.
inline SummaryStat summarize(std::span<const TrainTrace> seeds, std::size_t last_k = 10) {
    if (seeds.empty()) throw std::invalid_argument("summarize: no seed traces");
    std::vector<double> per_seed;
    per_seed.reserve(seeds.size());
    for (const auto& t : seeds) per_seed.push_back(last_k_mean(t, last_k));
    return summarize_values(per_seed);
}

}  // namespace tlosslab
