#include "fcst/config.hpp"
#include "fcst/error.hpp"
#include "fcst/pipeline.hpp"
#include "fcst/synthetic.hpp"
#include "fcst/util.hpp"
#include "support/stub_provider.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

using namespace fcst;
using namespace fcst::app;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kKeyVar = "FCST_PIPELINE_TEST_KEY";

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("fcst_pipeline_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

/// A small sine-series run configuration written next to its CSV.
json base_config() {
    return {
        {"dataset", {{"csv_path", "series.csv"}, {"window_len", 20}, {"horizon", 1}}},
        {"train", {{"epochs", 1}, {"batch_size", 16}, {"seed", 5}}},
        {"lstm", {{"layers", 1}, {"hidden_units", 4}}},
        {"tcn", {{"channels", 4}}},
        {"bridge", {{"command", {FCST_BRIDGE_STUB_PATH}}, {"label", "bridge_stub"}}},
        {"provider", {{"api_key_env_var", kKeyVar}, {"backoff_base", 0.01}}},
        {"evaluation", {{"include_timing", false}}},
        {"run", {{"models", {"persistence"}}}},
    };
}

fs::path write_setup(const fs::path& dir, const json& config, std::size_t length = 400) {
    synth::SyntheticSpec spec;
    spec.length = length;
    spec.period = 30;
    spec.offset = 500;
    spec.amplitude = 20;
    spec.columns = 4;
    write_file(dir / "series.csv", synth::synthetic_csv(spec));
    write_file(dir / "config.json", config.dump(2));
    return dir / "config.json";
}

RunContext context(const fs::path& dir, const json& config) {
    CommandOptions o;
    o.config_path = write_setup(dir, config);
    o.out = dir / "run";
    return open_run(o, true);
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no fcst::Error thrown";
    return ErrorCode::UsageError;
}

int run_arena(const std::string& args) {
    const std::string cmd = std::string(FCST_ARENA_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::vector<double>> prediction_values(const fs::path& path) {
    std::vector<std::vector<double>> out;
    for (auto& [i, v] : read_predictions(path)) out.push_back(v);
    return out;
}

std::map<std::string, std::string> comparable_files(const fs::path& run) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(run)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), run).generic_string();
        if (rel.starts_with("manifests/") || rel.starts_with("transcript_")) continue;
        out[rel] = read_file(e.path());
    }
    return out;
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
    const auto c = parse_config(json::object(), "");
    EXPECT_EQ(c.dataset.spec.window_len, 720u);
    EXPECT_EQ(c.dataset.ingest.target_column, "LIT 301");
    EXPECT_EQ(c.train.epochs, 20u);
    EXPECT_EQ(c.provider.client.model_id, "o4-mini");
    EXPECT_EQ(c.provider.client.temperature, 0.0);
    EXPECT_EQ(c.provider.shots, 2u);
    EXPECT_EQ(c.evaluation.plot_points, 300u);
    EXPECT_EQ(model_label(c, ForecasterKind::llm_prompt), "llm_zero_shot");
    EXPECT_EQ(model_label(c, ForecasterKind::bridge), "bridge");

    const auto r = parse_config(base_config(), "/data/dir");
    EXPECT_EQ(r.dataset.ingest.csv_path, fs::path("/data/dir/series.csv"));
    EXPECT_EQ(r.provider.client.seed, 5u);
    EXPECT_EQ(config_hash(r), config_hash(parse_config(base_config(), "/data/dir")));
    auto other = base_config();
    other["train"]["seed"] = 6;
    EXPECT_NE(config_hash(r), config_hash(parse_config(other, "/data/dir")));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    auto c = base_config();
    c["train"]["epoch"] = 3;
    try {
        parse_config(c, "");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::BadConfig);
        EXPECT_NE(std::string(e.what()).find("train.epoch"), std::string::npos) << e.what();
    }
    c = base_config();
    c["extras"] = 1;
    EXPECT_EQ(code_of([&] { parse_config(c, ""); }), ErrorCode::BadConfig);
    c = base_config();
    c["provider"]["mode"] = "one_shot";
    EXPECT_EQ(code_of([&] { parse_config(c, ""); }), ErrorCode::BadConfig);
    c = base_config();
    c["train"]["epochs"] = "ten";
    EXPECT_EQ(code_of([&] { parse_config(c, ""); }), ErrorCode::BadConfig);
    c = base_config();
    c["run"]["models"] = {"arima"};
    EXPECT_EQ(code_of([&] { parse_config(c, ""); }), ErrorCode::BadConfig);
}

TEST(Predictions, CsvRoundTrip) {
    const std::vector<std::size_t> idx{0, 1, 3};
    const std::vector<std::vector<double>> p{{0.1}, {-2.5}, {1e-7}};
    const auto dir = fresh_dir("preds");
    write_file(dir / "p.csv", predictions_csv(idx, p));
    EXPECT_EQ(read_file(dir / "p.csv"), "index,pred\n0,0.1\n1,-2.5\n3,1e-07\n");
    const auto back = read_predictions(dir / "p.csv");
    ASSERT_EQ(back.size(), 3u);
    EXPECT_EQ(back[2].first, 3u);
    EXPECT_EQ(back[2].second, (std::vector<double>{1e-7}));
    EXPECT_EQ(predictions_csv({0}, {{1.0, 2.0}}), "index,pred_0,pred_1\n0,1,2\n");
    write_file(dir / "bad.csv", "index,pred\n0,abc\n");
    EXPECT_EQ(code_of([&] { read_predictions(dir / "bad.csv"); }), ErrorCode::BadArtifact);
}

TEST(Pipeline, PrepareIsDeterministic) {
    const auto a = context(fresh_dir("prep_a"), base_config());
    const auto b = context(fresh_dir("prep_b"), base_config());
    const auto art = cmd_prepare(a);
    cmd_prepare(b);
    for (const char* f : {"manifest.json", "train.csv", "val.csv", "test.csv"}) {
        EXPECT_EQ(read_file(a.run_dir / "dataset" / f), read_file(b.run_dir / "dataset" / f)) << f;
    }
    EXPECT_EQ(art.splits.total(), 400u - 20u);
    const auto m = json::parse(read_file(a.run_dir / "manifests" / "prepare-dataset.json"));
    EXPECT_EQ(m["status"], "complete");
    EXPECT_EQ(m["config_hash"], a.config_hash);
    EXPECT_FALSE(m["finished_at"].is_null());
    EXPECT_EQ(m["outputs"].size(), 4u);
}

TEST(Pipeline, LaterStagesReuseTheNewestRunDirectory) {
    const auto dir = fresh_dir("reuse");
    CommandOptions o;
    o.config_path = write_setup(dir, base_config());
    o.runs_root = dir / "runs";
    EXPECT_EQ(code_of([&] { open_run(o, false); }), ErrorCode::UsageError);
    const auto created = open_run(o, true);
    EXPECT_TRUE(created.run_dir.filename().string().ends_with("-" + created.config_hash.substr(0, 8)));
    cmd_prepare(created);
    EXPECT_EQ(open_run(o, false).run_dir, created.run_dir);
    o.seed = 77;
    EXPECT_EQ(code_of([&] { open_run(o, false); }), ErrorCode::UsageError);
}

TEST(Pipeline, MissingArtifactsAreReported) {
    const auto ctx = context(fresh_dir("missing"), base_config());
    EXPECT_EQ(code_of([&] { cmd_forecast(ctx, ForecasterKind::persistence); }), ErrorCode::IoError);
    cmd_prepare(ctx);
    EXPECT_EQ(code_of([&] { cmd_forecast(ctx, ForecasterKind::lstm); }), ErrorCode::IoError);
    EXPECT_EQ(code_of([&] { cmd_evaluate(ctx); }), ErrorCode::EmptyInput);
}

TEST(Pipeline, PromptBackendAgainstStubMatchesPersistence) {
    ::setenv(kKeyVar, "k", 1);
    fcst::testing::StubProvider stub;
    for (const char* mode : {"zero_shot", "few_shot"}) {
        auto cfg = base_config();
        cfg["provider"]["endpoint_url"] = stub.url();
        cfg["provider"]["mode"] = mode;
        const auto ctx = context(fresh_dir(std::string("llm_") + mode), cfg);
        const auto art = cmd_prepare(ctx);
        cmd_forecast(ctx, ForecasterKind::persistence);
        const auto label = cmd_forecast(ctx, ForecasterKind::llm_prompt);
        EXPECT_EQ(label, std::string("llm_") + mode);
        EXPECT_EQ(prediction_values(ctx.run_dir / ("predictions_" + label + ".csv")),
                  prediction_values(ctx.run_dir / "predictions_persistence.csv"));

        std::istringstream transcript(read_file(ctx.run_dir / ("transcript_" + label + ".jsonl")));
        std::size_t lines = 0;
        for (std::string l; std::getline(transcript, l);) ++lines;
        EXPECT_EQ(lines, art.splits.test.size());

        const auto m = json::parse(read_file(ctx.run_dir / "manifests" / ("forecast-" + label + ".json")));
        if (std::string(mode) == "few_shot") {
            const std::size_t n = art.splits.train.size();
            EXPECT_EQ(m["shot_origin_indices"], json({art.splits.train[n - 2].origin_index, art.splits.train[n - 1].origin_index}));
        }
        const auto reports = cmd_evaluate(ctx);
        ASSERT_EQ(reports.size(), 2u);
        EXPECT_EQ(reports[0].metrics.rmse, reports[1].metrics.rmse);
    }
}

TEST(Pipeline, SkippedWindowsFailEvaluation) {
    ::setenv(kKeyVar, "k", 1);
    fcst::testing::StubProvider stub;
    stub.script({{400, "rejected"}});
    auto cfg = base_config();
    cfg["provider"]["endpoint_url"] = stub.url();
    cfg["provider"]["failure_policy"] = "skip";
    const auto ctx = context(fresh_dir("skip"), cfg);
    const auto art = cmd_prepare(ctx);
    const auto label = cmd_forecast(ctx, ForecasterKind::llm_prompt);
    const auto rows = read_predictions(ctx.run_dir / ("predictions_" + label + ".csv"));
    EXPECT_EQ(rows.size(), art.splits.test.size() - 1);
    EXPECT_EQ(rows.front().first, 1u);
    const auto m = json::parse(read_file(ctx.run_dir / "manifests" / ("forecast-" + label + ".json")));
    EXPECT_EQ(m["failed_windows"], 1);
    EXPECT_EQ(code_of([&] { cmd_evaluate(ctx, label); }), ErrorCode::CountMismatch);
}

TEST(Pipeline, BridgeBackendMatchesPersistence) {
    const auto ctx = context(fresh_dir("bridge"), base_config());
    cmd_prepare(ctx);
    cmd_forecast(ctx, ForecasterKind::persistence);
    EXPECT_EQ(cmd_forecast(ctx, ForecasterKind::bridge), "bridge_stub");
    EXPECT_EQ(prediction_values(ctx.run_dir / "predictions_bridge_stub.csv"),
              prediction_values(ctx.run_dir / "predictions_persistence.csv"));
    const auto m = json::parse(read_file(ctx.run_dir / "manifests" / "forecast-bridge_stub.json"));
    EXPECT_EQ(m["bridge_exit"], "exited:0");
    EXPECT_EQ(m["bridge_model_name"], "persistence-stub");
}

TEST(Pipeline, FullRunReportAndByteIdenticalRerun) {
    auto cfg = base_config();
    cfg["run"]["models"] = {"persistence", "tcn", "lstm", "bridge"};
    const auto a = context(fresh_dir("rerun_a"), cfg);
    const auto b = context(fresh_dir("rerun_b"), cfg);
    const auto reports = cmd_run(a);
    cmd_run(b);

    ASSERT_EQ(reports.size(), 4u);
    for (std::size_t i = 1; i < reports.size(); ++i) EXPECT_LE(reports[i - 1].metrics.rmse, reports[i].metrics.rmse);
    std::istringstream md(read_file(a.run_dir / "report.md"));
    std::string line;
    std::getline(md, line);
    std::getline(md, line);
    for (const auto& r : reports) {
        ASSERT_TRUE(std::getline(md, line));
        EXPECT_TRUE(line.starts_with("| " + r.label + " |")) << line;
    }

    const auto fa = comparable_files(a.run_dir);
    const auto fb = comparable_files(b.run_dir);
    ASSERT_EQ(fa.size(), fb.size());
    for (const auto& [name, bytes] : fa) {
        ASSERT_TRUE(fb.contains(name)) << name;
        EXPECT_EQ(bytes, fb.at(name)) << name;
    }
    for (const char* f : {"checkpoint_tcn.json", "training_log_lstm.csv", "eval_bridge_stub.json", "plot_tcn.csv",
                          "report.csv", "timing_lstm.json"}) {
        EXPECT_TRUE(fa.contains(f)) << f;
    }
    for (const auto& e : fs::directory_iterator(a.run_dir / "manifests")) {
        EXPECT_EQ(json::parse(read_file(e.path()))["status"], "complete") << e.path();
    }
}

TEST(Cli, ExitCodesByFamily) {
    const auto dir = fresh_dir("cli");
    auto cfg = base_config();
    cfg["dataset"]["target_column"] = "NOPE";
    const auto config = write_setup(dir, cfg);
    EXPECT_EQ(run_arena("prepare --config " + config.string() + " --out " + (dir / "run").string()),
              exit_code_for(ErrorCode::MissingColumn));
    EXPECT_EQ(exit_code_for(ErrorCode::MissingColumn), 3);
    EXPECT_EQ(run_arena("bogus"), 2);
    EXPECT_EQ(run_arena("prepare --config " + (dir / "absent.json").string()), 2);
    EXPECT_EQ(run_arena("train --config " + config.string()), 2);

    write_file(dir / "unknown_key.json", R"({"trian": {}})");
    EXPECT_EQ(run_arena("prepare --config " + (dir / "unknown_key.json").string()), exit_code_for(ErrorCode::BadConfig));

    const auto good = write_setup(dir, base_config());
    EXPECT_EQ(run_arena("run --config " + good.string() + " --out " + (dir / "ok").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "ok" / "report.md"));
    EXPECT_EQ(run_arena("evaluate --config " + good.string() + " --out " + (dir / "ok").string() + " --model nope"),
              exit_code_for(ErrorCode::IoError));
}
