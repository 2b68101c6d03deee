#pragma once

#include "fcst/dataset.hpp"
#include "fcst/forecaster.hpp"

#include <json.hpp>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fcst::eval {

struct Metrics {
    double rmse = 0.0;
    double mae = 0.0;
    std::size_t n = 0;
};

/// Throws LengthMismatch or EmptyInput.
double rmse(std::span<const double> pred, std::span<const double> target);
double mae(std::span<const double> pred, std::span<const double> target);
Metrics compute_metrics(std::span<const double> pred, std::span<const double> target);

enum class TimeBasis { training, inference };

std::string_view to_string(TimeBasis basis) noexcept;

/// Training time for lstm/tcn, inference time for every other backend.
TimeBasis time_basis_for(ForecasterKind kind) noexcept;

struct Timing {
    double training_seconds = 0.0;
    double inference_seconds = 0.0;
};

struct EvalReport {
    std::string label;
    ForecasterKind kind = ForecasterKind::persistence;
    Metrics metrics;      // normalized scale
    Metrics raw_metrics;  // after inverse standardization, supplementary
    Timing timing;
    std::string manifest_ref;

    double time_seconds() const noexcept;
};

/// One prediction vector per test sample, in test order. Metrics are taken
/// over every predicted value against its target.
/// Throws CountMismatch (wrong or zero count) or LengthMismatch.
EvalReport evaluate_model(const std::string& label, ForecasterKind kind,
                          std::span<const std::vector<double>> predictions, const data::DatasetArtifact& artifact,
                          const Timing& timing, const std::string& manifest_ref = "");

nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& doc);

/// Rows sorted by normalized RMSE ascending (ties by label). Throws
/// EmptyInput for an empty set and CountMismatch for duplicate labels.
std::vector<EvalReport> sorted_reports(std::span<const EvalReport> reports);

/// Model | RMSE | MAE | Time s | Time basis | RMSE raw | MAE raw.
std::string report_markdown(std::span<const EvalReport> reports);
/// Same columns; numbers as shortest round-trip decimals.
std::string report_csv(std::span<const EvalReport> reports);

struct PlotSeries {
    std::vector<std::size_t> index;
    std::vector<double> actual;
    std::vector<double> predicted;
    std::optional<std::string> warning;  // set when fewer than first_n points exist
};

/// Throws LengthMismatch when the inputs differ in length.
PlotSeries plot_data(std::span<const double> actual, std::span<const double> predicted, std::size_t first_n = 300);

/// "index,actual,predicted".
std::string plot_csv(const PlotSeries& series);

}  // namespace fcst::eval
