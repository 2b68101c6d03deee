#pragma once

#include "fcst/dataset.hpp"
#include "fcst/forecaster.hpp"
#include "fcst/models.hpp"
#include "fcst/prompt.hpp"
#include "fcst/provider.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace fcst::app {

struct DatasetSection {
    data::IngestConfig ingest;
    data::WindowSpec spec;
    data::SplitFractions fractions;
};

struct ProviderSection {
    prompt::ProviderConfig client;
    prompt::PromptMode mode = prompt::PromptMode::zero_shot;
    std::size_t shots = 2;
    prompt::FailurePolicy failure_policy = prompt::FailurePolicy::abort;
};

struct BridgeSection {
    std::vector<std::string> command;
    std::string label = "bridge";
    double handshake_timeout = 10.0;
    double request_timeout = 300.0;
    double shutdown_timeout = 5.0;
};

struct EvaluationSection {
    std::size_t plot_points = 300;
    bool include_timing = true;
};

struct RunSection {
    std::vector<ForecasterKind> models{ForecasterKind::persistence, ForecasterKind::lstm, ForecasterKind::tcn};
};

struct RunConfig {
    DatasetSection dataset;
    models::TrainConfig train;
    models::LstmConfig lstm;
    models::TcnConfig tcn;
    ProviderSection provider;
    BridgeSection bridge;
    EvaluationSection evaluation;
    RunSection run;
};

/// Reads a JSON config document. Every section and key is optional; unknown
/// keys are rejected with BadConfig. Relative paths resolve against
/// `base_dir`.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Every field with its effective value, keys sorted.
nlohmann::json to_json(const RunConfig& config);

/// SHA-256 of the canonical JSON dump.
std::string config_hash(const RunConfig& config);

/// Label under which a backend's outputs are filed.
std::string model_label(const RunConfig& config, ForecasterKind kind);

}  // namespace fcst::app
