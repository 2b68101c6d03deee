#pragma once

#include "fcst/config.hpp"
#include "fcst/evaluation.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fcst::app {

struct CommandOptions {
    std::filesystem::path config_path;
    std::optional<std::filesystem::path> out;  // run directory; overrides the default layout
    std::optional<std::uint64_t> seed;         // overrides train.seed
    std::filesystem::path runs_root = "runs";
};

struct RunContext {
    RunConfig config;
    std::string config_hash;
    std::filesystem::path run_dir;
};

/// Loads the config and resolves the run directory. Without --out a new
/// stage-one command (`create`) gets runs/<UTC timestamp>-<hash8>; later
/// stages reuse the newest directory carrying the same hash prefix.
RunContext open_run(const CommandOptions& options, bool create);

/// ingest -> window -> split -> standardize; writes <run>/dataset.
data::DatasetArtifact cmd_prepare(const RunContext& ctx);

/// Writes checkpoint_<kind>.json, training_log_<kind>.csv, timing_<kind>.json.
models::TrainOutcome cmd_train(const RunContext& ctx, ForecasterKind kind);

/// Runs one backend over every test window; writes predictions_<label>.csv
/// and timing_<label>.json (plus transcript_<label>.jsonl for llm_prompt).
/// Returns the label.
std::string cmd_forecast(const RunContext& ctx, ForecasterKind kind);

/// Scores predictions_<label>.csv files (all of them, or just `label`),
/// writes eval_<label>.json and plot_<label>.csv, then the report.
std::vector<eval::EvalReport> cmd_evaluate(const RunContext& ctx, const std::optional<std::string>& label = {});

/// Tabulates every eval_<label>.json into report.md and report.csv.
std::vector<eval::EvalReport> cmd_report(const RunContext& ctx);

/// prepare, train/forecast each of run.models, evaluate.
std::vector<eval::EvalReport> cmd_run(const RunContext& ctx);

/// "index,pred" rows (columns pred_0..pred_{H-1} when H > 1).
std::string predictions_csv(const std::vector<std::size_t>& indices, const std::vector<std::vector<double>>& preds);
/// Returns (index, prediction) rows. Throws BadArtifact on malformed files.
std::vector<std::pair<std::size_t, std::vector<double>>> read_predictions(const std::filesystem::path& path);

}  // namespace fcst::app
