#include "fcst/provider.hpp"

#include "fcst/rng.hpp"
#include "fcst/util.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <iostream>
#include <thread>

namespace fcst::prompt {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

void validate(const ProviderConfig& c) {
    if (c.max_in_flight < 1) fail(ErrorCode::BadConfig, "provider.max_in_flight must be >= 1");
    if (!(c.temperature >= 0.0)) fail(ErrorCode::BadConfig, "provider.temperature must be >= 0");
    if (!(c.request_timeout > 0.0)) fail(ErrorCode::BadConfig, "provider.request_timeout must be > 0");
    if (!(c.backoff_base >= 0.0)) fail(ErrorCode::BadConfig, "provider.backoff_base must be >= 0");
    if (!(c.backoff_jitter >= 0.0)) fail(ErrorCode::BadConfig, "provider.backoff_jitter must be >= 0");
    if (c.endpoint_url.empty()) fail(ErrorCode::BadConfig, "provider.endpoint_url is empty");
    if (c.api_key_env_var.empty()) fail(ErrorCode::BadConfig, "provider.api_key_env_var is empty");
}

double backoff_delay(const ProviderConfig& config, std::size_t retry) noexcept {
    return retry == 0 ? 0.0 : config.backoff_base * std::ldexp(1.0, static_cast<int>(retry) - 1);
}

// ---- adapter ----------------------------------------------------------------

std::string OpenAiChatAdapter::request_body(const ProviderConfig& config, std::string_view prompt) const {
    const json body = {
        {"model", config.model_id},
        {"messages", json::array({{{"role", "user"}, {"content", std::string(prompt)}}})},
        {"temperature", config.temperature},
    };
    return body.dump();
}

std::string OpenAiChatAdapter::reply_text(std::string_view body) const {
    const json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded()) fail(ErrorCode::ProviderError, "response body is not JSON");
    try {
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
        fail(ErrorCode::ProviderError, "response has no choices[0].message.content string");
    }
}

std::map<std::string, std::string> OpenAiChatAdapter::headers(std::string_view api_key) const {
    return {{"Authorization", "Bearer " + std::string(api_key)}};
}

// ---- transport --------------------------------------------------------------

HttpResponse HttplibTransport::post(const std::string& url, const std::map<std::string, std::string>& headers,
                                    const std::string& body, double timeout_seconds) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) fail(ErrorCode::BadConfig, "endpoint URL lacks a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    const auto sec = static_cast<time_t>(timeout_seconds);
    const auto usec = static_cast<time_t>((timeout_seconds - static_cast<double>(sec)) * 1e6);
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);

    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    HttpResponse out;
    auto res = client.Post(path, h, body, "application/json");
    if (!res) {
        out.timed_out = res.error() == httplib::Error::Read || res.error() == httplib::Error::ConnectionTimeout;
        out.transport_error = httplib::to_string(res.error());
        return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
}

// ---- transcript -------------------------------------------------------------

TranscriptLog::TranscriptLog(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::app | std::ios::binary);
    if (!out_) fail(ErrorCode::IoError, "cannot open transcript log " + path.string());
}

void TranscriptLog::append(const json& record) {
    const std::lock_guard lock(mutex_);
    out_ << record.dump() << '\n';
    out_.flush();
}

// ---- client -----------------------------------------------------------------

ProviderClient::ProviderClient(ProviderConfig config, std::shared_ptr<const ProviderAdapter> adapter,
                               std::shared_ptr<HttpTransport> transport, std::shared_ptr<TranscriptLog> transcript)
    : config_(std::move(config)),
      adapter_(adapter ? std::move(adapter) : std::make_shared<OpenAiChatAdapter>()),
      transport_(transport ? std::move(transport) : std::make_shared<HttplibTransport>()),
      transcript_(std::move(transcript)) {
    validate(config_);
}

namespace {

bool retryable_parse_error(ErrorCode code) {
    return code == ErrorCode::NoJsonFound || code == ErrorCode::WrongCount || code == ErrorCode::NonFiniteValue ||
           code == ErrorCode::MalformedNumber || code == ErrorCode::ProviderError;
}

}  // namespace

ParsedPrediction ProviderClient::complete(const std::string& prompt, std::size_t horizon,
                                          std::size_t window_index) const {
    const char* key = std::getenv(config_.api_key_env_var.c_str());
    if (key == nullptr || *key == '\0') {
        fail(ErrorCode::AuthError, "environment variable " + config_.api_key_env_var + " is not set");
    }
    if (prompt::estimate_tokens(prompt) > config_.token_warning && !warned_.exchange(true)) {
        std::cerr << "warning: prompt is about " << prompt::estimate_tokens(prompt)
                  << " tokens, above the configured " << config_.token_warning << "\n";
    }
    const std::string body = adapter_->request_body(config_, prompt);
    const auto headers = adapter_->headers(key);
    SeededRng jitter(config_.seed ^ (0x9E3779B97F4A7C15ULL * (window_index + 1)));

    const auto start = Clock::now();
    std::string last_cause = "no attempt made";
    bool last_timed_out = false;
    for (std::size_t attempt = 1; attempt <= config_.max_retries + 1; ++attempt) {
        if (attempt > 1) {
            const double delay = backoff_delay(config_, attempt - 1);
            const double total = delay + jitter.uniform() * config_.backoff_jitter * delay;
            std::this_thread::sleep_for(std::chrono::duration<double>(total));
        }
        const auto sent = Clock::now();
        const HttpResponse res = transport_->post(config_.endpoint_url, headers, body, config_.request_timeout);
        const double attempt_latency = std::chrono::duration<double>(Clock::now() - sent).count();

        json record = {{"timestamp", utc_timestamp()}, {"window_index", window_index}, {"attempt", attempt},
                       {"status", res.status},         {"latency", attempt_latency},  {"raw_response", res.body}};
        const auto log = [&](const std::string& outcome) {
            if (!transcript_) return;
            record["outcome"] = outcome;
            transcript_->append(record);
        };

        if (res.status == 0) {
            last_timed_out = res.timed_out;
            last_cause = (res.timed_out ? "timeout: " : "transport error: ") + res.transport_error;
            log(last_cause);
            continue;
        }
        last_timed_out = false;
        if (res.status == 401 || res.status == 403) {
            log("auth error");
            fail(ErrorCode::AuthError, "provider rejected credentials (HTTP " + std::to_string(res.status) + ")");
        }
        if (res.status == 429 || res.status >= 500) {
            last_cause = "HTTP " + std::to_string(res.status);
            log(last_cause);
            continue;
        }
        if (res.status < 200 || res.status >= 300) {
            log("HTTP " + std::to_string(res.status));
            fail(ErrorCode::ProviderError, "provider returned HTTP " + std::to_string(res.status) + ": " + res.body);
        }
        try {
            ParsedPrediction out;
            out.raw_text = adapter_->reply_text(res.body);
            out.values = parse_prediction(out.raw_text, horizon);
            out.attempt_count = attempt;
            out.latency = std::chrono::duration<double>(Clock::now() - start).count();
            log("ok");
            return out;
        } catch (const Error& e) {
            if (!retryable_parse_error(e.code())) throw;
            last_cause = e.what();
            log(last_cause);
        }
    }
    const std::string msg = "window " + std::to_string(window_index) + ": gave up after " +
                            std::to_string(config_.max_retries + 1) + " attempts; last cause: " + last_cause;
    fail(last_timed_out ? ErrorCode::Timeout : ErrorCode::RetriesExhausted, msg);
}

ParsedPrediction forecast_window(const ProviderClient& client, PromptMode mode, std::span<const Shot> shots,
                                 std::span<const double> window, std::size_t horizon, std::size_t window_index) {
    const std::string text =
        mode == PromptMode::zero_shot ? render_zero_shot(window, horizon) : render_few_shot(shots, window, horizon);
    return client.complete(text, horizon, window_index);
}

BatchResult run_batch(const ProviderClient& client, PromptMode mode, std::span<const Shot> shots,
                      std::span<const std::vector<double>> windows, std::size_t horizon, FailurePolicy policy) {
    BatchResult result;
    result.entries.resize(windows.size());
    if (windows.empty()) return result;

    std::mutex mutex;
    std::size_t next = 0;
    bool stop = false;
    std::optional<std::pair<std::size_t, Error>> first_failure;

    const auto worker = [&] {
        while (true) {
            std::size_t index = 0;
            {
                const std::lock_guard lock(mutex);
                if (stop || next >= windows.size()) return;
                index = next++;
            }
            try {
                auto p = forecast_window(client, mode, shots, windows[index], horizon, index);
                const std::lock_guard lock(mutex);
                result.entries[index].prediction = std::move(p);
            } catch (const Error& e) {
                const std::lock_guard lock(mutex);
                result.entries[index].failure = e;
                ++result.failures;
                if (policy == FailurePolicy::abort) {
                    stop = true;
                    if (!first_failure || index < first_failure->first) first_failure.emplace(index, e);
                }
            }
        }
    };

    const std::size_t n_workers = std::min(client.config().max_in_flight, windows.size());
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(n_workers);
        for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    }

    if (first_failure) {
        fail(first_failure->second.code(),
             "window " + std::to_string(first_failure->first) + ": " + first_failure->second.detail());
    }
    for (const auto& e : result.entries) {
        if (e.prediction) result.total_latency += e.prediction->latency;
    }
    return result;
}

// ---- forecaster -------------------------------------------------------------

LlmForecaster::LlmForecaster(std::shared_ptr<const ProviderClient> client, PromptMode mode, std::vector<Shot> shots)
    : client_(std::move(client)), mode_(mode), shots_(std::move(shots)) {
    if (mode_ == PromptMode::few_shot && shots_.empty()) fail(ErrorCode::NoShots, "few-shot forecaster without shots");
}

std::vector<double> LlmForecaster::predict(std::span<const double> window, std::size_t horizon) {
    return forecast_window(*client_, mode_, shots_, window, horizon, calls_++).values;
}

}  // namespace fcst::prompt
