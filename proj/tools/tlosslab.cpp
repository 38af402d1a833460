// tlosslab command-line tool.
//
// Exit codes: 0 success, 1 check failure or runtime error, 2 configuration error.

#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tlosslab/checks.hpp"
#include "tlosslab/config.hpp"
#include "tlosslab/datagen.hpp"
#include "tlosslab/io.hpp"
#include "tlosslab/noise.hpp"
#include "tlosslab/sweep.hpp"

namespace fs = std::filesystem;
using namespace tlosslab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;

/// Reads --config (or an empty object when none was given).
nlohmann::json load_config(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    std::string text;
    try {
        text = read_file(path);
    } catch (const IoError& e) {
        throw ConfigError("", e.what());
    }
    return parse_json_text(text, path);
}

/// TLOSSLAB_SEED, when set, replaces every seed the config would supply.
std::optional<std::uint64_t> env_seed() {
    const char* s = std::getenv("TLOSSLAB_SEED");
    if (!s || !*s) return std::nullopt;
    std::uint64_t v = 0;
    const std::string_view sv(s);
    const auto res = std::from_chars(sv.data(), sv.data() + sv.size(), v);
    if (res.ec != std::errc{} || res.ptr != sv.data() + sv.size())
        throw ConfigError("", "TLOSSLAB_SEED must be a non-negative integer, got '" + std::string(sv) + "'");
    return v;
}

void require_out(const std::string& out, const char* cmd) {
    if (out.empty()) throw ConfigError("", std::string(cmd) + " requires --out <dir>");
}

int cmd_gen_data(const std::string& config_path, const std::string& out) {
    require_out(out, "gen-data");
    SweepConfig cfg = parse_sweep_config(load_config(config_path));
    if (auto s = env_seed()) cfg.dataset.seed = *s;
    const Dataset ds = generate(cfg.dataset);
    nlohmann::ordered_json meta;
    meta["n_train"] = cfg.dataset.n_train;
    meta["n_test"] = cfg.dataset.n_test;
    meta["side"] = cfg.dataset.side;
    meta["contrast"] = cfg.dataset.contrast;
    meta["pixel_noise_sigma"] = cfg.dataset.pixel_noise_sigma;
    meta["seed"] = cfg.dataset.seed;
    export_dataset(out, ds, meta);
    std::cout << "wrote " << ds.train.size() << " train and " << ds.test.size() << " test samples to " << out << "\n";
    return kExitOk;
}

int cmd_inject_noise(const std::string& config_path, const std::string& out) {
    require_out(out, "inject-noise");
    SweepConfig cfg = parse_sweep_config(load_config(config_path));
    if (auto s = env_seed()) cfg.noise.seed = *s;
    const Dataset ds = import_dataset(out);
    std::vector<Mask> clean;
    clean.reserve(ds.train.size());
    for (const auto& s : ds.train) clean.push_back(s.clean_mask);
    const CorruptionResult cr = corrupt_dataset(clean, cfg.noise);
    write_train_masks(out, cr.masks);
    write_file(fs::path(out) / "manifest.jsonl", manifest_jsonl(cr.manifest));
    std::cout << "corrupted " << cr.selected_count() << " of " << clean.size() << " train masks (alpha "
              << cfg.noise.alpha << ", beta " << cfg.noise.beta << ")\n";
    return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& out, std::size_t jobs) {
    require_out(out, "sweep");
    SweepConfig cfg = parse_sweep_config(load_config(config_path));
    if (auto s = env_seed()) cfg.seeds = {*s};
    const Dataset ds = sweep_dataset(cfg);
    fs::create_directories(out);

    const auto t0 = std::chrono::steady_clock::now();
    SweepOptions opt;
    opt.jobs = jobs;
    opt.on_cell = [&](const CellResult& r, std::size_t done, std::size_t total) {
        std::fprintf(stderr, "[%zu/%zu] %s alpha=%s beta=%s seed=%llu: %s\n", done, total, r.cell.loss.name.c_str(),
                     format_double(r.cell.alpha).c_str(), format_double(r.cell.beta).c_str(),
                     (unsigned long long)r.cell.seed,
                     r.ok ? ("last10 test dice " + format_double(r.last10_test_dice)).c_str() : ("FAILED: " + r.error).c_str());
    };
    const auto results = run_sweep(cfg, ds, out, opt);
    write_sweep_outputs(out, results);

    std::size_t failed = 0;
    for (const auto& r : results) failed += r.ok ? 0 : 1;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << results.size() << " runs (" << failed << " failed) in " << secs << " s; wrote "
              << (fs::path(out) / "results.csv").string() << " and " << (fs::path(out) / "summary.csv").string() << "\n";
    return kExitOk;
}

int cmd_grad_check(bool json, bool flip_sign) {
    GradCheckOptions opt;
    opt.flip_sign = flip_sign;
    const GradCheckReport r = run_grad_check(opt);
    if (json) {
        std::cout << to_json(r).dump(2) << "\n";
    } else {
        for (const auto& s : r.suites) {
            std::printf("%-16s %5zu configs %6zu entries  max rel err %.3e  (tol %.0e)  %s\n", s.name.c_str(), s.configs,
                        s.entries, s.max_rel_err, s.tolerance, s.passed() ? "PASS" : "FAIL");
            for (const auto& f : s.failures) std::printf("    %s\n", f.c_str());
        }
        std::printf("%s\n", r.passed() ? "all gradient suites passed" : "gradient check FAILED");
    }
    return r.passed() ? kExitOk : kExitCheckFailed;
}

int cmd_limits_check(bool json) {
    const LimitsReport r = run_limits_check();
    if (json) {
        std::cout << to_json(r).dump(2) << "\n";
    } else {
        for (const auto& c : r.cases) {
            std::printf("nu=%g D=%zu  small-delta slope %.6f (theory %.6f, rel err %.2e, R2 %.8f)  "
                        "large-delta slope %.6f (theory %.6f, rel err %.2e, R2 %.8f)  %s\n",
                        c.nu, c.dim, c.small.slope, c.small_theory, c.small_rel_err(), c.small.r2, c.large.slope,
                        c.large_theory, c.large_rel_err(), c.large.r2, c.passed() ? "PASS" : "FAIL");
        }
    }
    return r.passed() ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"T-Loss robust segmentation toolkit"};
    app.require_subcommand(1);

    std::string config_path, out;
    std::size_t jobs = 1;
    bool json = false, flip_sign = false;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset and export it as PGM files");
    gen->add_option("--config", config_path, "JSON config (uses its \"dataset\" section)");
    gen->add_option("--out", out, "Output dataset directory");

    auto* inject = app.add_subcommand("inject-noise", "Corrupt the train masks of an exported dataset in place");
    inject->add_option("--config", config_path, "JSON config (uses its \"noise\" section)");
    inject->add_option("--out", out, "Dataset directory to modify");

    auto* sweep = app.add_subcommand("sweep", "Train every loss x noise condition x seed cell");
    sweep->add_option("--config", config_path, "JSON sweep config");
    sweep->add_option("--out", out, "Output directory for results.csv, summary.csv and traces/");
    sweep->add_option("--jobs", jobs, "Cells trained in parallel")->check(CLI::PositiveNumber);

    auto* grad = app.add_subcommand("grad-check", "Compare analytic gradients with finite differences");
    grad->add_flag("--json", json, "Machine-readable report");
    grad->add_flag("--inject-sign-flip", flip_sign, "Negate analytic gradients (harness self-test)")->group("");

    auto* limits = app.add_subcommand("limits-check", "Fit the small- and large-residual slopes of the T-Loss");
    limits->add_flag("--json", json, "Machine-readable report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*gen) return cmd_gen_data(config_path, out);
        if (*inject) return cmd_inject_noise(config_path, out);
        if (*sweep) return cmd_sweep(config_path, out, jobs);
        if (*grad) return cmd_grad_check(json, flip_sign);
        if (*limits) return cmd_limits_check(json);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheckFailed;
    }
    return kExitOk;
}
