#include "fcst/evaluation.hpp"

#include "fcst/error.hpp"
#include "fcst/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace fcst::eval {

using nlohmann::json;

namespace {

void check_pair(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) {
        fail(ErrorCode::LengthMismatch, "prediction has " + std::to_string(pred.size()) + " values, target has " +
                                            std::to_string(target.size()));
    }
    if (pred.empty()) fail(ErrorCode::EmptyInput, "cannot score an empty series");
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> target) {
    check_pair(pred, target);
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(pred.size()));
}

double mae(std::span<const double> pred, std::span<const double> target) {
    check_pair(pred, target);
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - target[i]);
    return sum / static_cast<double>(pred.size());
}

Metrics compute_metrics(std::span<const double> pred, std::span<const double> target) {
    return Metrics{rmse(pred, target), mae(pred, target), pred.size()};
}

std::string_view to_string(TimeBasis basis) noexcept { return basis == TimeBasis::training ? "training" : "inference"; }

TimeBasis time_basis_for(ForecasterKind kind) noexcept {
    return kind == ForecasterKind::lstm || kind == ForecasterKind::tcn ? TimeBasis::training : TimeBasis::inference;
}

double EvalReport::time_seconds() const noexcept {
    return time_basis_for(kind) == TimeBasis::training ? timing.training_seconds : timing.inference_seconds;
}

EvalReport evaluate_model(const std::string& label, ForecasterKind kind,
                          std::span<const std::vector<double>> predictions, const data::DatasetArtifact& artifact,
                          const Timing& timing, const std::string& manifest_ref) {
    const auto& test = artifact.splits.test;
    if (test.empty() || predictions.size() != test.size()) {
        fail(ErrorCode::CountMismatch, label + ": " + std::to_string(predictions.size()) + " predictions for " +
                                           std::to_string(test.size()) + " test samples");
    }
    std::vector<double> pred;
    std::vector<double> target;
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (predictions[i].size() != test[i].target.size()) {
            fail(ErrorCode::LengthMismatch, label + ": prediction " + std::to_string(i) + " has " +
                                                std::to_string(predictions[i].size()) + " values, horizon is " +
                                                std::to_string(test[i].target.size()));
        }
        pred.insert(pred.end(), predictions[i].begin(), predictions[i].end());
        target.insert(target.end(), test[i].target.begin(), test[i].target.end());
    }
    EvalReport r;
    r.label = label;
    r.kind = kind;
    r.metrics = compute_metrics(pred, target);
    r.raw_metrics = compute_metrics(artifact.standardizer.inverse_transform(pred),
                                    artifact.standardizer.inverse_transform(target));
    r.timing = timing;
    r.manifest_ref = manifest_ref;
    return r;
}

json to_json(const EvalReport& r) {
    return {
        {"label", r.label},
        {"kind", to_string(r.kind)},
        {"n", r.metrics.n},
        {"rmse", r.metrics.rmse},
        {"mae", r.metrics.mae},
        {"rmse_raw", r.raw_metrics.rmse},
        {"mae_raw", r.raw_metrics.mae},
        {"training_seconds", r.timing.training_seconds},
        {"inference_seconds", r.timing.inference_seconds},
        {"time_basis", to_string(time_basis_for(r.kind))},
        {"manifest", r.manifest_ref},
    };
}

EvalReport report_from_json(const json& doc) {
    EvalReport r;
    try {
        r.label = doc.at("label").get<std::string>();
        const auto kind = parse_forecaster_kind(doc.at("kind").get<std::string>());
        if (!kind) fail(ErrorCode::BadArtifact, "unknown model kind in evaluation record");
        r.kind = *kind;
        r.metrics = {doc.at("rmse").get<double>(), doc.at("mae").get<double>(), doc.at("n").get<std::size_t>()};
        r.raw_metrics = {doc.at("rmse_raw").get<double>(), doc.at("mae_raw").get<double>(), r.metrics.n};
        r.timing = {doc.at("training_seconds").get<double>(), doc.at("inference_seconds").get<double>()};
        r.manifest_ref = doc.value("manifest", "");
    } catch (const json::exception& e) {
        fail(ErrorCode::BadArtifact, std::string("evaluation record: ") + e.what());
    }
    return r;
}

std::vector<EvalReport> sorted_reports(std::span<const EvalReport> reports) {
    if (reports.empty()) fail(ErrorCode::EmptyInput, "no evaluation reports to tabulate");
    std::set<std::string> labels;
    for (const auto& r : reports) {
        if (!labels.insert(r.label).second) fail(ErrorCode::CountMismatch, "duplicate model label " + r.label);
    }
    std::vector<EvalReport> out(reports.begin(), reports.end());
    std::stable_sort(out.begin(), out.end(), [](const EvalReport& a, const EvalReport& b) {
        if (a.metrics.rmse != b.metrics.rmse) return a.metrics.rmse < b.metrics.rmse;
        return a.label < b.label;
    });
    return out;
}

std::string report_markdown(std::span<const EvalReport> reports) {
    std::string out = "| Model | RMSE | MAE | Time s | Time basis | RMSE raw | MAE raw |\n";
    out += "|---|---:|---:|---:|---|---:|---:|\n";
    for (const auto& r : sorted_reports(reports)) {
        out += "| " + r.label + " | " + fixed(r.metrics.rmse, 4) + " | " + fixed(r.metrics.mae, 4) + " | " +
               fixed(r.time_seconds(), 2) + " | " + std::string(to_string(time_basis_for(r.kind))) + " | " +
               fixed(r.raw_metrics.rmse, 4) + " | " + fixed(r.raw_metrics.mae, 4) + " |\n";
    }
    return out;
}

std::string report_csv(std::span<const EvalReport> reports) {
    std::string out = "model,rmse,mae,time_s,time_basis,rmse_raw,mae_raw\n";
    for (const auto& r : sorted_reports(reports)) {
        out += r.label + ',' + format_double(r.metrics.rmse) + ',' + format_double(r.metrics.mae) + ',' +
               format_double(r.time_seconds()) + ',' + std::string(to_string(time_basis_for(r.kind))) + ',' +
               format_double(r.raw_metrics.rmse) + ',' + format_double(r.raw_metrics.mae) + '\n';
    }
    return out;
}

PlotSeries plot_data(std::span<const double> actual, std::span<const double> predicted, std::size_t first_n) {
    if (actual.size() != predicted.size()) {
        fail(ErrorCode::LengthMismatch, "plot: " + std::to_string(actual.size()) + " actual vs " +
                                            std::to_string(predicted.size()) + " predicted values");
    }
    PlotSeries s;
    const std::size_t n = std::min(first_n, actual.size());
    if (n < first_n) {
        s.warning = "only " + std::to_string(actual.size()) + " points available, fewer than the requested " +
                    std::to_string(first_n);
    }
    for (std::size_t i = 0; i < n; ++i) {
        s.index.push_back(i);
        s.actual.push_back(actual[i]);
        s.predicted.push_back(predicted[i]);
    }
    return s;
}

std::string plot_csv(const PlotSeries& s) {
    std::string out = "index,actual,predicted\n";
    for (std::size_t i = 0; i < s.index.size(); ++i) {
        out += std::to_string(s.index[i]) + ',' + format_double(s.actual[i]) + ',' + format_double(s.predicted[i]) + '\n';
    }
    return out;
}

}  // namespace fcst::eval
