#include "fcst/pipeline.hpp"

#include "fcst/bridge.hpp"
#include "fcst/error.hpp"
#include "fcst/provider.hpp"
#include "fcst/util.hpp"

#include <algorithm>
#include <chrono>
#include <iostream>
#include <sstream>

namespace fcst::app {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string compact_timestamp() {
    std::string ts = utc_timestamp();  // 2025-01-31T12:00:00Z
    ts.erase(std::remove(ts.begin(), ts.end(), '-'), ts.end());
    ts.erase(std::remove(ts.begin(), ts.end(), ':'), ts.end());
    return ts;
}

json read_json(const fs::path& path) {
    const json doc = json::parse(read_file(path), nullptr, false);
    if (doc.is_discarded()) fail(ErrorCode::BadArtifact, path.string() + ": not valid JSON");
    return doc;
}

void write_json(const fs::path& path, const json& doc) { write_file(path, doc.dump(2) + "\n"); }

fs::path dataset_dir(const RunContext& ctx) { return ctx.run_dir / "dataset"; }

data::DatasetArtifact require_artifact(const RunContext& ctx) {
    if (!fs::exists(dataset_dir(ctx) / "manifest.json")) {
        fail(ErrorCode::IoError, "no dataset artifact in " + ctx.run_dir.string() + "; run `prepare` first");
    }
    return data::load_artifact(dataset_dir(ctx));
}

std::string artifact_fingerprint(const RunContext& ctx) {
    std::string bytes;
    for (const char* f : {"manifest.json", "train.csv", "val.csv", "test.csv"}) bytes += read_file(dataset_dir(ctx) / f);
    return sha256_hex(bytes);
}

/// Writes manifests/<stage>-<label>.json before the stage produces results,
/// then finalizes it once they exist.
class RunManifest {
public:
    RunManifest(const RunContext& ctx, const std::string& stage, const std::string& label)
        : path_(ctx.run_dir / "manifests" / (stage + "-" + label + ".json")) {
        doc_ = {
            {"tool_version", kToolVersion},
            {"stage", stage},
            {"label", label},
            {"config_hash", ctx.config_hash},
            {"config", to_json(ctx.config)},
            {"seed", ctx.config.train.seed},
            {"started_at", utc_timestamp()},
            {"finished_at", nullptr},
            {"status", "running"},
        };
        if (stage != "prepare" && fs::exists(dataset_dir(ctx) / "manifest.json")) {
            doc_["dataset_fingerprint"] = artifact_fingerprint(ctx);
        }
        write_json(path_, doc_);
    }

    json& doc() { return doc_; }
    std::string ref(const RunContext& ctx) const { return fs::relative(path_, ctx.run_dir).generic_string(); }

    void finish(const std::vector<std::string>& outputs) {
        doc_["outputs"] = outputs;
        doc_["finished_at"] = utc_timestamp();
        doc_["status"] = "complete";
        write_json(path_, doc_);
    }

private:
    fs::path path_;
    json doc_;
};

json forecaster_config(const RunContext& ctx, ForecasterKind kind) {
    const auto full = to_json(ctx.config);
    switch (kind) {
        case ForecasterKind::lstm: return {{"lstm", full["lstm"]}, {"train", full["train"]}};
        case ForecasterKind::tcn: return {{"tcn", full["tcn"]}, {"train", full["train"]}};
        case ForecasterKind::llm_prompt: return {{"provider", full["provider"]}};
        case ForecasterKind::bridge: return {{"bridge", full["bridge"]}};
        default: return json::object();
    }
}

std::vector<std::vector<double>> test_inputs(const data::DatasetArtifact& a) {
    std::vector<std::vector<double>> out;
    out.reserve(a.splits.test.size());
    for (const auto& s : a.splits.test) out.push_back(s.input);
    return out;
}

}  // namespace

// ---- run directory ----------------------------------------------------------

RunContext open_run(const CommandOptions& options, bool create) {
    RunContext ctx;
    ctx.config = load_config(options.config_path);
    if (options.seed) {
        ctx.config.train.seed = *options.seed;
        ctx.config.provider.client.seed = *options.seed;
    }
    ctx.config_hash = config_hash(ctx.config);
    const std::string suffix = "-" + ctx.config_hash.substr(0, 8);

    if (options.out) {
        ctx.run_dir = *options.out;
    } else if (create) {
        ctx.run_dir = options.runs_root / (compact_timestamp() + suffix);
    } else {
        std::optional<fs::path> latest;
        std::error_code ec;
        for (const auto& entry : fs::directory_iterator(options.runs_root, ec)) {
            const std::string name = entry.path().filename().string();
            if (!entry.is_directory() || !name.ends_with(suffix)) continue;
            if (!latest || name > latest->filename().string()) latest = entry.path();
        }
        if (!latest) {
            fail(ErrorCode::UsageError, "no run directory for this config under " + options.runs_root.string() +
                                            "; run `prepare` first or pass --out");
        }
        ctx.run_dir = *latest;
    }
    fs::create_directories(ctx.run_dir);
    return ctx;
}

// ---- prepare ----------------------------------------------------------------

data::DatasetArtifact cmd_prepare(const RunContext& ctx) {
    RunManifest manifest(ctx, "prepare", "dataset");
    const auto& ds = ctx.config.dataset;
    if (ds.ingest.csv_path.empty()) fail(ErrorCode::BadConfig, "dataset.csv_path is not set");
    const auto series = data::ingest_csv(ds.ingest);
    data::SourceInfo source{series.source_fingerprint, ds.ingest.csv_path.filename().string(),
                            ds.ingest.target_column, series.values.size(), series.dropped_count};
    auto artifact = data::build_artifact(series, ds.spec, ds.fractions, source);
    data::save_artifact(artifact, dataset_dir(ctx));
    manifest.doc()["dataset_fingerprint"] = artifact_fingerprint(ctx);
    manifest.doc()["source_sha256"] = series.source_fingerprint;
    manifest.finish({"dataset/manifest.json", "dataset/train.csv", "dataset/val.csv", "dataset/test.csv"});
    return artifact;
}

// ---- train ------------------------------------------------------------------

models::TrainOutcome cmd_train(const RunContext& ctx, ForecasterKind kind) {
    if (kind != ForecasterKind::lstm && kind != ForecasterKind::tcn) {
        fail(ErrorCode::UsageError, "train expects --model lstm or tcn, got " + std::string(to_string(kind)));
    }
    const auto artifact = require_artifact(ctx);
    const std::string label = model_label(ctx.config, kind);
    RunManifest manifest(ctx, "train", label);
    manifest.doc()["kind"] = to_string(kind);
    manifest.doc()["forecaster_config"] = forecaster_config(ctx, kind);

    const models::ModelConfigs configs{ctx.config.lstm, ctx.config.tcn};
    auto model = models::build_model(kind, configs, artifact.spec, ctx.config.train.seed);
    auto outcome = models::train(*model, artifact.splits, ctx.config.train);
    if (!ctx.config.evaluation.include_timing) {
        for (auto& e : outcome.log.epochs) e.seconds = 0.0;
        outcome.log.total_seconds = 0.0;
    }

    const std::string ckpt = "checkpoint_" + label + ".json";
    const std::string log = "training_log_" + label + ".csv";
    const std::string timing = "timing_train_" + label + ".json";
    models::save_checkpoint(ctx.run_dir / ckpt, *model, outcome.optimizer, ctx.config.train.seed);
    write_file(ctx.run_dir / log, outcome.log.to_csv());
    write_json(ctx.run_dir / timing, {{"training_seconds", outcome.log.total_seconds}});
    manifest.doc()["parameter_count"] = model->parameter_count();
    manifest.finish({ckpt, log, timing});
    return outcome;
}

// ---- forecast ---------------------------------------------------------------

std::string predictions_csv(const std::vector<std::size_t>& indices, const std::vector<std::vector<double>>& preds) {
    const std::size_t H = preds.empty() ? 1 : preds.front().size();
    std::string out = "index";
    if (H == 1) {
        out += ",pred";
    } else {
        for (std::size_t h = 0; h < H; ++h) out += ",pred_" + std::to_string(h);
    }
    out += '\n';
    for (std::size_t i = 0; i < preds.size(); ++i) {
        out += std::to_string(indices[i]);
        for (double v : preds[i]) out += ',' + format_double(v);
        out += '\n';
    }
    return out;
}

std::vector<std::pair<std::size_t, std::vector<double>>> read_predictions(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line) || !line.starts_with("index,")) {
        fail(ErrorCode::BadArtifact, path.string() + ": missing header");
    }
    const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    std::vector<std::pair<std::size_t, std::vector<double>>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (fields.size() != columns + 1) {
            fail(ErrorCode::BadArtifact, path.string() + ":" + std::to_string(line_no) + ": wrong column count");
        }
        std::vector<double> values;
        for (std::size_t i = 1; i < fields.size(); ++i) {
            const auto v = parse_double(fields[i]);
            if (!v) fail(ErrorCode::BadArtifact, path.string() + ":" + std::to_string(line_no) + ": bad number");
            values.push_back(*v);
        }
        const auto idx = parse_double(fields[0]);
        if (!idx || *idx < 0) fail(ErrorCode::BadArtifact, path.string() + ":" + std::to_string(line_no) + ": bad index");
        rows.emplace_back(static_cast<std::size_t>(*idx), std::move(values));
    }
    return rows;
}

std::string cmd_forecast(const RunContext& ctx, ForecasterKind kind) {
    const auto artifact = require_artifact(ctx);
    const std::string label = model_label(ctx.config, kind);
    const std::size_t H = artifact.spec.horizon;
    const auto windows = test_inputs(artifact);
    const std::string pred_file = "predictions_" + label + ".csv";
    const std::string timing_file = "timing_" + label + ".json";
    fs::remove(ctx.run_dir / pred_file);
    RunManifest manifest(ctx, "forecast", label);
    manifest.doc()["kind"] = to_string(kind);
    manifest.doc()["forecaster_config"] = forecaster_config(ctx, kind);

    std::vector<std::string> outputs;
    std::vector<std::vector<double>> preds;
    std::vector<std::size_t> indices;
    double training_seconds = 0.0;
    double inference_seconds = 0.0;

    switch (kind) {
        case ForecasterKind::persistence: {
            const auto t0 = Clock::now();
            PersistenceForecaster f;
            for (const auto& w : windows) preds.push_back(f.predict(w, H));
            inference_seconds = seconds_since(t0);
            break;
        }
        case ForecasterKind::lstm:
        case ForecasterKind::tcn: {
            const fs::path ckpt = ctx.run_dir / ("checkpoint_" + label + ".json");
            if (!fs::exists(ckpt)) fail(ErrorCode::IoError, "no checkpoint " + ckpt.string() + "; run `train` first");
            const auto loaded = models::load_checkpoint(ckpt);
            if (loaded.model->kind() != kind || loaded.model->spec().window_len != artifact.spec.window_len ||
                loaded.model->spec().horizon != H) {
                fail(ErrorCode::BadCheckpoint, ckpt.string() + " does not match the dataset or model kind");
            }
            const auto t0 = Clock::now();
            preds = loaded.model->predict_batch(windows);
            inference_seconds = seconds_since(t0);
            const fs::path train_timing = ctx.run_dir / ("timing_train_" + label + ".json");
            if (fs::exists(train_timing)) training_seconds = read_json(train_timing).value("training_seconds", 0.0);
            manifest.doc()["checkpoint"] = ckpt.filename().string();
            break;
        }
        case ForecasterKind::llm_prompt: {
            const auto& p = ctx.config.provider;
            std::vector<prompt::Shot> shots;
            if (p.mode == prompt::PromptMode::few_shot) {
                shots = prompt::select_shots(artifact.splits.train, p.shots);
                json origins = json::array();
                for (const auto& s : shots) origins.push_back(s.origin_index);
                manifest.doc()["shot_origin_indices"] = origins;
            }
            manifest.doc()["provider"] = {{"model_id", p.client.model_id}, {"temperature", p.client.temperature}};
            const std::string transcript = "transcript_" + label + ".jsonl";
            auto log = std::make_shared<prompt::TranscriptLog>(ctx.run_dir / transcript);
            const prompt::ProviderClient client(p.client, nullptr, nullptr, log);
            const auto batch = prompt::run_batch(client, p.mode, shots, windows, H, p.failure_policy);
            for (std::size_t i = 0; i < batch.entries.size(); ++i) {
                if (!batch.entries[i].prediction) continue;
                preds.push_back(batch.entries[i].prediction->values);
                indices.push_back(i);
            }
            inference_seconds = batch.total_latency;
            manifest.doc()["failed_windows"] = batch.failures;
            outputs.push_back(transcript);
            break;
        }
        case ForecasterKind::bridge: {
            const auto& b = ctx.config.bridge;
            if (b.command.empty()) fail(ErrorCode::BadConfig, "bridge.command is not set");
            auto session = std::shared_ptr<bridge::BridgeSession>(bridge::BridgeSession::spawn(
                {b.command, b.handshake_timeout, b.request_timeout, b.shutdown_timeout}));
            manifest.doc()["bridge_model_name"] = session->hello().model_name;
            for (std::size_t i = 0; i < windows.size(); ++i) {
                try {
                    preds.push_back(session->forecast(windows[i], H).pred);
                } catch (const Error& e) {
                    session->shutdown();
                    throw Error(e.code(), "window " + std::to_string(i) + ": " + e.detail());
                }
            }
            inference_seconds = session->total_wait();
            manifest.doc()["bridge_exit"] = session->shutdown().to_string();
            break;
        }
    }
    if (indices.empty()) {
        indices.resize(preds.size());
        for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    }
    if (!ctx.config.evaluation.include_timing) {
        training_seconds = 0.0;
        inference_seconds = 0.0;
    }

    write_file(ctx.run_dir / pred_file, predictions_csv(indices, preds));
    write_json(ctx.run_dir / timing_file, {{"training_seconds", training_seconds}, {"inference_seconds", inference_seconds}});
    outputs.insert(outputs.begin(), {pred_file, timing_file});
    manifest.finish(outputs);
    return label;
}

// ---- evaluate / report ------------------------------------------------------

std::vector<eval::EvalReport> cmd_report(const RunContext& ctx) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(ctx.run_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.starts_with("eval_") && name.ends_with(".json")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<eval::EvalReport> reports;
    for (const auto& f : files) reports.push_back(eval::report_from_json(read_json(f)));
    if (reports.empty()) fail(ErrorCode::EmptyInput, "no eval_*.json files in " + ctx.run_dir.string());
    write_file(ctx.run_dir / "report.md", eval::report_markdown(reports));
    write_file(ctx.run_dir / "report.csv", eval::report_csv(reports));
    return eval::sorted_reports(reports);
}

std::vector<eval::EvalReport> cmd_evaluate(const RunContext& ctx, const std::optional<std::string>& label) {
    const auto artifact = require_artifact(ctx);
    std::vector<std::string> labels;
    if (label) {
        labels.push_back(*label);
    } else {
        for (const auto& entry : fs::directory_iterator(ctx.run_dir)) {
            const std::string name = entry.path().filename().string();
            if (name.starts_with("predictions_") && name.ends_with(".csv")) {
                labels.push_back(name.substr(12, name.size() - 12 - 4));
            }
        }
        std::sort(labels.begin(), labels.end());
    }
    if (labels.empty()) fail(ErrorCode::EmptyInput, "no predictions_*.csv files in " + ctx.run_dir.string());

    std::vector<double> actual;
    for (const auto& s : artifact.splits.test) actual.push_back(s.target.front());

    for (const auto& l : labels) {
        const fs::path pred_path = ctx.run_dir / ("predictions_" + l + ".csv");
        if (!fs::exists(pred_path)) fail(ErrorCode::IoError, "no predictions file " + pred_path.string());
        const fs::path forecast_manifest = ctx.run_dir / "manifests" / ("forecast-" + l + ".json");
        if (!fs::exists(forecast_manifest)) fail(ErrorCode::BadArtifact, "no forecast manifest for " + l);
        const auto kind = parse_forecaster_kind(read_json(forecast_manifest).value("kind", ""));
        if (!kind) fail(ErrorCode::BadArtifact, forecast_manifest.string() + ": unknown kind");

        RunManifest manifest(ctx, "evaluate", l);
        const auto rows = read_predictions(pred_path);
        std::vector<std::vector<double>> preds;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].first != i) {
                fail(ErrorCode::CountMismatch, pred_path.string() + ": test window " + std::to_string(i) +
                                                   " has no prediction");
            }
            preds.push_back(rows[i].second);
        }
        eval::Timing timing;
        const fs::path timing_path = ctx.run_dir / ("timing_" + l + ".json");
        if (fs::exists(timing_path)) {
            const auto t = read_json(timing_path);
            timing = {t.value("training_seconds", 0.0), t.value("inference_seconds", 0.0)};
        }
        const std::string ref = fs::relative(forecast_manifest, ctx.run_dir).generic_string();
        const auto report = eval::evaluate_model(l, *kind, preds, artifact, timing, ref);

        std::vector<double> first;
        for (const auto& p : preds) first.push_back(p.front());
        const auto plot = eval::plot_data(actual, first, ctx.config.evaluation.plot_points);
        if (plot.warning) std::cerr << "warning: plot_" << l << ".csv: " << *plot.warning << "\n";

        const std::string eval_file = "eval_" + l + ".json";
        const std::string plot_file = "plot_" + l + ".csv";
        write_json(ctx.run_dir / eval_file, eval::to_json(report));
        write_file(ctx.run_dir / plot_file, eval::plot_csv(plot));
        manifest.doc()["kind"] = to_string(*kind);
        manifest.finish({eval_file, plot_file});
    }
    return cmd_report(ctx);
}

std::vector<eval::EvalReport> cmd_run(const RunContext& ctx) {
    cmd_prepare(ctx);
    for (auto kind : ctx.config.run.models) {
        if (kind == ForecasterKind::lstm || kind == ForecasterKind::tcn) cmd_train(ctx, kind);
        cmd_forecast(ctx, kind);
    }
    return cmd_evaluate(ctx);
}

}  // namespace fcst::app
