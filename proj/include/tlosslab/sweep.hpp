#pragma once

// Losses x noise conditions x seeds. Each cell trains one model on the
// shared synthetic dataset with its own corrupted train masks.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "tlosslab/config.hpp"
#include "tlosslab/datagen.hpp"
#include "tlosslab/io.hpp"
#include "tlosslab/metrics.hpp"
#include "tlosslab/noise.hpp"
#include "tlosslab/trainer.hpp"

namespace tlosslab {

struct SweepCell {
    NamedLoss loss;
    double alpha = 0.0;
    double beta = 0.0;  ///< 0 when alpha == 0
    std::uint64_t seed = 0;
};

/// Loss-major order. A noise-free condition (alpha == 0) appears once per
/// loss regardless of the beta list.
inline std::vector<SweepCell> enumerate_cells(const SweepConfig& cfg) {
    std::vector<SweepCell> cells;
    for (const auto& loss : cfg.losses) {
        for (double alpha : cfg.alphas) {
            std::vector<double> betas = alpha == 0.0 ? std::vector<double>{0.0} : cfg.betas;
            for (double beta : betas)
                for (auto seed : cfg.seeds) cells.push_back({loss, alpha, beta, seed});
        }
    }
    return cells;
}

/// SplitMix64 finalizer, used to derive independent streams from one seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Noise stream for a run seed. Independent of the loss, so every loss sees
/// the same corrupted masks for a given (alpha, beta, seed).
inline std::uint64_t noise_seed_for(std::uint64_t run_seed) { return mix_seed(run_seed ^ 0x6E6F697365ull); }

/// Train masks for one noise condition, always derived from the clean masks.
inline std::vector<ImageSample> noisy_train_set(std::span<const ImageSample> clean, double alpha, double beta,
                                                std::uint64_t run_seed) {
    std::vector<ImageSample> out(clean.begin(), clean.end());
    for (auto& s : out) s.train_mask = s.clean_mask;
    if (alpha == 0.0) return out;
    std::vector<Mask> masks;
    masks.reserve(clean.size());
    for (const auto& s : clean) masks.push_back(s.clean_mask);
    auto cr = corrupt_dataset(masks, NoiseConfig{alpha, beta, noise_seed_for(run_seed)});
    for (std::size_t i = 0; i < out.size(); ++i) out[i].train_mask = std::move(cr.masks[i]);
    return out;
}

struct CellResult {
    SweepCell cell;
    bool ok = false;
    std::string error;
    TrainTrace trace;
    double last10_test_dice = 0.0;
    double final_nu_tilde = 0.0;
    std::string trace_file;  ///< relative to the sweep output directory
};

inline std::string format_condition(double v) { return format_double(v); }

inline std::string trace_file_name(const SweepCell& c) {
    return "traces/" + c.loss.name + "_a" + format_condition(c.alpha) + "_b" + format_condition(c.beta) + "_s" +
           std::to_string(c.seed) + ".csv";
}

inline constexpr std::size_t kLastK = 10;

inline CellResult run_cell(const SweepCell& cell, const Dataset& ds, const TrainConfig& base,
                           const std::filesystem::path& out_dir = {}) {
    CellResult r;
    r.cell = cell;
    try {
        TrainConfig tc = base;
        tc.loss = cell.loss.spec;
        tc.seed = cell.seed;
        const auto train_set = noisy_train_set(ds.train, cell.alpha, cell.beta, cell.seed);
        TrainResult tr = train(train_set, ds.test, tc);
        r.trace = std::move(tr.trace);
        r.last10_test_dice = last_k_mean(r.trace, std::min(kLastK, r.trace.size()));
        r.final_nu_tilde = tr.tloss.nu_tilde;
        r.ok = true;
    } catch (const std::exception& e) {
        r.ok = false;
        r.error = e.what();
    }
    if (r.ok && !out_dir.empty()) {
        r.trace_file = trace_file_name(cell);
        write_csv(out_dir / r.trace_file, trace_to_csv(r.trace));
    }
    return r;
}

struct SweepOptions {
    std::size_t jobs = 1;
    std::function<void(const CellResult&, std::size_t done, std::size_t total)> on_cell;
};

/// Runs every cell, up to `jobs` at a time. Results come back in cell order
/// whatever the completion order.
inline std::vector<CellResult> run_sweep(const SweepConfig& cfg, const Dataset& ds, const std::filesystem::path& out_dir,
                                         const SweepOptions& opt = {}) {
    const auto cells = enumerate_cells(cfg);
    std::vector<CellResult> results(cells.size());
    std::atomic<std::size_t> next{0};
    std::size_t done = 0;
    std::mutex mu;
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            results[i] = run_cell(cells[i], ds, cfg.train, out_dir);
            std::lock_guard lock(mu);
            ++done;
            if (opt.on_cell) opt.on_cell(results[i], done, cells.size());
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(opt.jobs, cells.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return results;
}

inline const std::vector<std::string>& results_header() {
    static const std::vector<std::string> h{"loss",       "alpha",      "beta",         "seed", "status",
                                            "last10_test_dice", "final_nu_tilde", "trace_file", "error"};
    return h;
}

inline CsvTable results_table(std::span<const CellResult> results) {
    CsvTable t;
    t.header = results_header();
    for (const auto& r : results) {
        t.rows.push_back({r.cell.loss.name, format_double(r.cell.alpha), format_double(r.cell.beta),
                          std::to_string(r.cell.seed), r.ok ? "ok" : "failed",
                          r.ok ? format_double(r.last10_test_dice) : "", r.ok ? format_double(r.final_nu_tilde) : "",
                          r.trace_file, r.error});
    }
    return t;
}

struct SummaryRow {
    std::string loss;
    double alpha = 0.0;
    double beta = 0.0;
    SummaryStat stat;  ///< n counts successful seeds only; n == 0 when every seed failed
};

/// Aggregates results.csv rows per (loss, alpha, beta) in first-seen order.
/// Failed rows are excluded, which lowers n for that condition.
inline std::vector<SummaryRow> summarize_results(const CsvTable& results) {
    const std::size_t c_loss = results.column("loss"), c_alpha = results.column("alpha"),
                      c_beta = results.column("beta"), c_status = results.column("status"),
                      c_dice = results.column("last10_test_dice");
    std::vector<SummaryRow> rows;
    std::vector<std::vector<double>> values;
    std::map<std::tuple<std::string, std::string, std::string>, std::size_t> slot;
    for (const auto& r : results.rows) {
        const auto key = std::make_tuple(r[c_loss], r[c_alpha], r[c_beta]);
        auto it = slot.find(key);
        if (it == slot.end()) {
            it = slot.emplace(key, rows.size()).first;
            rows.push_back({r[c_loss], parse_double(r[c_alpha]), parse_double(r[c_beta]), {}});
            values.emplace_back();
        }
        if (r[c_status] == "ok") values[it->second].push_back(parse_double(r[c_dice]));
    }
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (!values[i].empty()) rows[i].stat = summarize_values(values[i]);
    return rows;
}

inline CsvTable summary_table(std::span<const SummaryRow> rows) {
    CsvTable t;
    t.header = {"loss", "alpha", "beta", "mean_dice", "std_dice", "n_seeds"};
    for (const auto& r : rows) {
        const bool any = r.stat.n > 0;
        t.rows.push_back({r.loss, format_double(r.alpha), format_double(r.beta), any ? format_double(r.stat.mean) : "nan",
                          any ? format_double(r.stat.std) : "nan", std::to_string(r.stat.n)});
    }
    return t;
}

/// Writes results.csv and summary.csv; the summary is computed from the
/// results table exactly as a reader of results.csv would.
inline void write_sweep_outputs(const std::filesystem::path& out_dir, std::span<const CellResult> results) {
    const CsvTable rt = results_table(results);
    write_csv(out_dir / "results.csv", rt);
    const auto summary = summarize_results(rt);
    write_csv(out_dir / "summary.csv", summary_table(summary));
}

/// The sweep's dataset: imported from cfg.dataset_dir when set, otherwise
/// generated from cfg.dataset.
inline Dataset sweep_dataset(const SweepConfig& cfg) {
    if (cfg.dataset_dir) return import_dataset(*cfg.dataset_dir);
    return generate(cfg.dataset);
}

}  // namespace tlosslab
