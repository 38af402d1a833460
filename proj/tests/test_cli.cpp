#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "tlosslab/io.hpp"
#include "tlosslab/sweep.hpp"

using namespace tlosslab;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("tlosslab_test_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// Runs the CLI with `args` (already shell-quoted) and an optional env prefix.
RunResult run_cli(const std::string& args, const std::string& env = "") {
    const fs::path dir = fs::temp_directory_path() / "tlosslab_test_cli_io";
    fs::create_directories(dir);
    const fs::path out = dir / "stdout", err = dir / "stderr";
    const std::string cmd = env + (env.empty() ? "" : " ") + "'" + std::string(TLOSSLAB_CLI_PATH) + "' " + args + " >'" +
                            out.string() + "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_file(out);
    r.err = read_file(err);
    return r;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const fs::path p = dir / "config.json";
    write_file(p, text);
    return p;
}

const char* kSmallData = R"("dataset": {"n_train": 6, "n_test": 3, "side": 16, "seed": 2})";

}  // namespace

TEST(Cli, UsageErrorsExitWithTwo) {
    EXPECT_EQ(run_cli("").code, 2);
    EXPECT_EQ(run_cli("no-such-command").code, 2);
    EXPECT_EQ(run_cli("sweep --jobs 0 --out x").code, 2);
    EXPECT_EQ(run_cli("--help").code, 0);
}

TEST(Cli, BadConfigFieldExitsTwoWithPointer) {
    const fs::path dir = scratch_dir("badcfg");
    const auto cfg = write_config(dir, R"({"train": {"epochs": "many"}})");
    const RunResult r = run_cli("sweep --config '" + cfg.string() + "' --out '" + (dir / "o").string() + "'");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("/train/epochs"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir / "o" / "results.csv"));
}

TEST(Cli, MissingConfigAndBadSeedExitTwo) {
    const fs::path dir = scratch_dir("missing");
    EXPECT_EQ(run_cli("gen-data --config '" + (dir / "nope.json").string() + "' --out '" + dir.string() + "'").code, 2);
    EXPECT_EQ(run_cli("gen-data --out '" + dir.string() + "'", "TLOSSLAB_SEED=abc").code, 2);
    EXPECT_EQ(run_cli("gen-data").code, 2);
}

TEST(Cli, GenDataIsIdempotentAndSeedable) {
    const fs::path dir = scratch_dir("gen");
    const auto cfg = write_config(dir, std::string("{") + kSmallData + "}");
    const std::string base = "gen-data --config '" + cfg.string() + "' --out ";
    ASSERT_EQ(run_cli(base + "'" + (dir / "a").string() + "'").code, 0);
    ASSERT_EQ(run_cli(base + "'" + (dir / "b").string() + "'").code, 0);
    ASSERT_EQ(run_cli(base + "'" + (dir / "c").string() + "'", "TLOSSLAB_SEED=99").code, 0);
    for (const char* f : {"index.json", "train/0003/image.pgm", "test/0002/mask.pgm"})
        EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
    EXPECT_NE(read_file(dir / "a/train/0000/image.pgm"), read_file(dir / "c/train/0000/image.pgm"));
    const auto index = nlohmann::json::parse(read_file(dir / "c/index.json"));
    EXPECT_EQ(index["meta"]["seed"], 99);
    EXPECT_EQ(import_dataset(dir / "a").train.size(), 6u);
}

TEST(Cli, InjectNoiseRewritesTrainMasks) {
    const fs::path dir = scratch_dir("inject");
    const auto cfg = write_config(dir, std::string("{") + kSmallData + R"(, "noise": {"alpha": 1, "beta": 0.7, "seed": 4}})");
    const fs::path data = dir / "data";
    ASSERT_EQ(run_cli("gen-data --config '" + cfg.string() + "' --out '" + data.string() + "'").code, 0);
    const RunResult r = run_cli("inject-noise --config '" + cfg.string() + "' --out '" + data.string() + "'");
    ASSERT_EQ(r.code, 0) << r.err;
    const Dataset ds = import_dataset(data);
    std::size_t changed = 0;
    for (const auto& s : ds.train) changed += s.train_mask == s.clean_mask ? 0 : 1;
    EXPECT_GT(changed, 0u);
    for (const auto& s : ds.test) EXPECT_EQ(s.train_mask, s.clean_mask);

    const std::string manifest = read_file(data / "manifest.jsonl");
    std::size_t lines = 0;
    for (char c : manifest) lines += c == '\n';
    EXPECT_EQ(lines, 6u);

    // Re-running from the same clean masks is deterministic.
    const std::string first = read_file(data / "train/0001/train_mask.pgm");
    ASSERT_EQ(run_cli("inject-noise --config '" + cfg.string() + "' --out '" + data.string() + "'").code, 0);
    EXPECT_EQ(read_file(data / "train/0001/train_mask.pgm"), first);
    EXPECT_EQ(read_file(data / "manifest.jsonl"), manifest);
}

TEST(Cli, OneCellSweepWritesConsistentFiles) {
    const fs::path dir = scratch_dir("sweep");
    const auto cfg = write_config(dir, std::string("{") + kSmallData + R"(,
        "train": {"epochs": 3, "batch_size": 2, "hidden_dim": 4},
        "losses": ["TLOSS"], "alphas": [0.5], "betas": [0.7], "seeds": [0]})");
    const fs::path out = dir / "out";
    const RunResult r = run_cli("sweep --config '" + cfg.string() + "' --out '" + out.string() + "'", "TLOSSLAB_SEED=7");
    ASSERT_EQ(r.code, 0) << r.err;
    const CsvTable rt = read_csv(out / "results.csv");
    ASSERT_EQ(rt.rows.size(), 1u);
    EXPECT_EQ(rt.rows[0][rt.column("seed")], "7");
    EXPECT_EQ(rt.rows[0][rt.column("status")], "ok");
    EXPECT_TRUE(fs::exists(out / rt.rows[0][rt.column("trace_file")]));
    EXPECT_EQ(read_csv(out / "summary.csv"), summary_table(summarize_results(rt)));
}

TEST(Cli, SweepCanReadExportedDataset) {
    const fs::path dir = scratch_dir("sweep_dir");
    const fs::path data = dir / "data";
    const auto gen_cfg = write_config(dir, std::string("{") + kSmallData + "}");
    ASSERT_EQ(run_cli("gen-data --config '" + gen_cfg.string() + "' --out '" + data.string() + "'").code, 0);
    const auto cfg = write_config(dir, R"({"dataset_dir": ")" + data.string() + R"(",
        "train": {"epochs": 2, "batch_size": 3, "hidden_dim": 3},
        "losses": ["MSE"], "alphas": [0], "seeds": [1]})");
    const RunResult r = run_cli("sweep --config '" + cfg.string() + "' --out '" + (dir / "out").string() + "'");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_csv(dir / "out/results.csv").rows.size(), 1u);
}

TEST(Cli, GradCheckPassesAndDetectsSignFlip) {
    const RunResult ok = run_cli("grad-check --json");
    ASSERT_EQ(ok.code, 0) << ok.err;
    const auto j = nlohmann::json::parse(ok.out);
    EXPECT_TRUE(j["passed"].get<bool>());
    EXPECT_EQ(j["suites"].size(), 3u);
    const RunResult bad = run_cli("grad-check --inject-sign-flip");
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
}

TEST(Cli, LimitsCheckPasses) {
    const RunResult r = run_cli("limits-check --json");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_TRUE(j["passed"].get<bool>());
    EXPECT_EQ(j["cases"].size(), 3u);
}
