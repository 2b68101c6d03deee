#include "fcst/config.hpp"

#include "fcst/error.hpp"
#include "fcst/util.hpp"

#include <set>

namespace fcst::app {

using nlohmann::json;

namespace {

/// Reads keys out of one JSON object and rejects anything left unread.
class Section {
public:
    Section(const json& doc, std::string name) : name_(std::move(name)) {
        if (!doc.is_object()) fail(ErrorCode::BadConfig, name_ + " must be an object");
        doc_ = &doc;
    }

    template <class T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        if (!doc_->contains(key)) return;
        try {
            out = (*doc_)[key].get<T>();
        } catch (const json::exception&) {
            fail(ErrorCode::BadConfig, path(key) + " has the wrong type");
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        return doc_->contains(key) ? &(*doc_)[key] : nullptr;
    }

    void finish() const {
        for (const auto& [key, value] : doc_->items()) {
            if (!seen_.contains(key)) fail(ErrorCode::BadConfig, "unknown config key " + path(key));
        }
    }

    std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

private:
    const json* doc_ = nullptr;
    std::string name_;
    std::set<std::string> seen_;
};

ForecasterKind kind_from(const std::string& name, const std::string& where) {
    const auto k = parse_forecaster_kind(name);
    if (!k) fail(ErrorCode::BadConfig, where + ": unknown model kind '" + name + "'");
    return *k;
}

}  // namespace

RunConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
    RunConfig c;
    Section root(doc, "");

    if (const json* d = root.child("dataset")) {
        Section s(*d, "dataset");
        std::string csv;
        std::string ts;
        std::string delim = ",";
        s.read("csv_path", csv);
        s.read("target_column", c.dataset.ingest.target_column);
        s.read("timestamp_column", ts);
        s.read("delimiter", delim);
        s.read("window_len", c.dataset.spec.window_len);
        s.read("horizon", c.dataset.spec.horizon);
        if (const json* f = s.child("split_fractions")) {
            if (!f->is_array() || f->size() != 3) fail(ErrorCode::BadConfig, "dataset.split_fractions must hold 3 numbers");
            try {
                c.dataset.fractions = {(*f)[0].get<double>(), (*f)[1].get<double>(), (*f)[2].get<double>()};
            } catch (const json::exception&) {
                fail(ErrorCode::BadConfig, "dataset.split_fractions must hold 3 numbers");
            }
        }
        s.finish();
        if (!csv.empty()) {
            std::filesystem::path p(csv);
            c.dataset.ingest.csv_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
        }
        if (!ts.empty()) c.dataset.ingest.timestamp_column = ts;
        if (delim.size() != 1) fail(ErrorCode::BadConfig, "dataset.delimiter must be a single character");
        c.dataset.ingest.delimiter = delim[0];
        if (c.dataset.spec.window_len < 1 || c.dataset.spec.horizon < 1) {
            fail(ErrorCode::BadConfig, "dataset.window_len and dataset.horizon must be >= 1");
        }
    }

    if (const json* t = root.child("train")) {
        Section s(*t, "train");
        s.read("epochs", c.train.epochs);
        s.read("batch_size", c.train.batch_size);
        s.read("learning_rate", c.train.learning_rate);
        s.read("seed", c.train.seed);
        s.read("shuffle_each_epoch", c.train.shuffle_each_epoch);
        s.finish();
    }
    models::validate(c.train);

    if (const json* l = root.child("lstm")) {
        Section s(*l, "lstm");
        s.read("layers", c.lstm.layers);
        s.read("hidden_units", c.lstm.hidden_units);
        s.finish();
    }
    models::validate(c.lstm);

    if (const json* t = root.child("tcn")) {
        Section s(*t, "tcn");
        s.read("layers", c.tcn.layers);
        s.read("channels", c.tcn.channels);
        s.read("dilations", c.tcn.dilations);
        s.read("kernel_size", c.tcn.kernel_size);
        s.read("dropout", c.tcn.dropout);
        s.read("residual", c.tcn.residual);
        s.finish();
    }
    models::validate(c.tcn);

    if (const json* p = root.child("provider")) {
        Section s(*p, "provider");
        auto& pc = c.provider.client;
        std::string mode = std::string(prompt::to_string(c.provider.mode));
        std::string policy = "abort";
        s.read("endpoint_url", pc.endpoint_url);
        s.read("model_id", pc.model_id);
        s.read("api_key_env_var", pc.api_key_env_var);
        s.read("temperature", pc.temperature);
        s.read("request_timeout", pc.request_timeout);
        s.read("max_retries", pc.max_retries);
        s.read("backoff_base", pc.backoff_base);
        s.read("backoff_jitter", pc.backoff_jitter);
        s.read("max_in_flight", pc.max_in_flight);
        s.read("token_warning", pc.token_warning);
        s.read("mode", mode);
        s.read("shots", c.provider.shots);
        s.read("failure_policy", policy);
        s.finish();
        const auto m = prompt::parse_prompt_mode(mode);
        if (!m) fail(ErrorCode::BadConfig, "provider.mode must be zero_shot or few_shot");
        c.provider.mode = *m;
        if (policy == "abort") {
            c.provider.failure_policy = prompt::FailurePolicy::abort;
        } else if (policy == "skip") {
            c.provider.failure_policy = prompt::FailurePolicy::skip;
        } else {
            fail(ErrorCode::BadConfig, "provider.failure_policy must be abort or skip");
        }
    }
    prompt::validate(c.provider.client);
    if (c.provider.mode == prompt::PromptMode::few_shot && c.provider.shots == 0) {
        fail(ErrorCode::BadConfig, "provider.shots must be >= 1 in few_shot mode");
    }

    if (const json* b = root.child("bridge")) {
        Section s(*b, "bridge");
        s.read("command", c.bridge.command);
        s.read("label", c.bridge.label);
        s.read("handshake_timeout", c.bridge.handshake_timeout);
        s.read("request_timeout", c.bridge.request_timeout);
        s.read("shutdown_timeout", c.bridge.shutdown_timeout);
        s.finish();
        if (c.bridge.label.empty()) fail(ErrorCode::BadConfig, "bridge.label is empty");
    }

    if (const json* e = root.child("evaluation")) {
        Section s(*e, "evaluation");
        s.read("plot_points", c.evaluation.plot_points);
        s.read("include_timing", c.evaluation.include_timing);
        s.finish();
    }

    if (const json* r = root.child("run")) {
        Section s(*r, "run");
        std::vector<std::string> names;
        s.read("models", names);
        s.finish();
        if (r->contains("models")) {
            c.run.models.clear();
            for (const auto& n : names) c.run.models.push_back(kind_from(n, "run.models"));
        }
    }

    root.finish();
    c.provider.client.seed = c.train.seed;
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    const json doc = json::parse(text, nullptr, false, true);
    if (doc.is_discarded()) fail(ErrorCode::BadConfig, path.string() + ": not valid JSON");
    try {
        return parse_config(doc, path.parent_path());
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.detail());
    }
}

json to_json(const RunConfig& c) {
    json models = json::array();
    for (auto k : c.run.models) models.push_back(to_string(k));
    const auto& pc = c.provider.client;
    return {
        {"dataset",
         {{"csv_path", c.dataset.ingest.csv_path.string()},
          {"target_column", c.dataset.ingest.target_column},
          {"timestamp_column", c.dataset.ingest.timestamp_column.value_or("")},
          {"delimiter", std::string(1, c.dataset.ingest.delimiter)},
          {"window_len", c.dataset.spec.window_len},
          {"horizon", c.dataset.spec.horizon},
          {"split_fractions", {c.dataset.fractions.train, c.dataset.fractions.val, c.dataset.fractions.test}}}},
        {"train",
         {{"epochs", c.train.epochs},
          {"batch_size", c.train.batch_size},
          {"learning_rate", c.train.learning_rate},
          {"seed", c.train.seed},
          {"shuffle_each_epoch", c.train.shuffle_each_epoch}}},
        {"lstm", {{"layers", c.lstm.layers}, {"hidden_units", c.lstm.hidden_units}}},
        {"tcn",
         {{"layers", c.tcn.layers},
          {"channels", c.tcn.channels},
          {"dilations", c.tcn.dilations},
          {"kernel_size", c.tcn.kernel_size},
          {"dropout", c.tcn.dropout},
          {"residual", c.tcn.residual}}},
        {"provider",
         {{"endpoint_url", pc.endpoint_url},
          {"model_id", pc.model_id},
          {"api_key_env_var", pc.api_key_env_var},
          {"temperature", pc.temperature},
          {"request_timeout", pc.request_timeout},
          {"max_retries", pc.max_retries},
          {"backoff_base", pc.backoff_base},
          {"backoff_jitter", pc.backoff_jitter},
          {"max_in_flight", pc.max_in_flight},
          {"token_warning", pc.token_warning},
          {"mode", prompt::to_string(c.provider.mode)},
          {"shots", c.provider.shots},
          {"failure_policy", c.provider.failure_policy == prompt::FailurePolicy::abort ? "abort" : "skip"}}},
        {"bridge",
         {{"command", c.bridge.command},
          {"label", c.bridge.label},
          {"handshake_timeout", c.bridge.handshake_timeout},
          {"request_timeout", c.bridge.request_timeout},
          {"shutdown_timeout", c.bridge.shutdown_timeout}}},
        {"evaluation", {{"plot_points", c.evaluation.plot_points}, {"include_timing", c.evaluation.include_timing}}},
        {"run", {{"models", models}}},
    };
}

std::string config_hash(const RunConfig& config) { return sha256_hex(to_json(config).dump()); }

std::string model_label(const RunConfig& config, ForecasterKind kind) {
    switch (kind) {
        case ForecasterKind::llm_prompt: return "llm_" + std::string(prompt::to_string(config.provider.mode));
        case ForecasterKind::bridge: return config.bridge.label;
        default: return std::string(to_string(kind));
    }
}

}  // namespace fcst::app
