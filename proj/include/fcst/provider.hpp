#pragma once

#include "fcst/error.hpp"
#include "fcst/forecaster.hpp"
#include "fcst/prompt.hpp"

#include <json.hpp>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fcst::prompt {

struct ProviderConfig {
    std::string endpoint_url = "https://api.openai.com/v1/chat/completions";
    std::string model_id = "o4-mini";
    std::string api_key_env_var = "OPENAI_API_KEY";
    double temperature = 0.0;
    double request_timeout = 120.0;  // seconds, per attempt
    std::size_t max_retries = 5;
    double backoff_base = 2.0;       // seconds; retry r waits base * 2^(r-1) plus jitter
    double backoff_jitter = 0.1;     // jitter drawn from [0, jitter * delay)
    std::size_t max_in_flight = 1;
    std::size_t token_warning = 4096;  // warn when a prompt's estimate exceeds this
    std::uint64_t seed = 0;            // jitter stream
};

void validate(const ProviderConfig& config);

/// Delay before retry number `retry` (1-based), excluding jitter.
double backoff_delay(const ProviderConfig& config, std::size_t retry) noexcept;

struct ParsedPrediction {
    std::vector<double> values;
    std::string raw_text;
    double latency = 0.0;  // seconds, first send to accepted reply, including backoff
    std::size_t attempt_count = 0;
};

/// Vendor schema seam: how to phrase a chat request and where the reply text
/// lives in the response body.
class ProviderAdapter {
public:
    virtual ~ProviderAdapter() = default;
    virtual std::string request_body(const ProviderConfig& config, std::string_view prompt) const = 0;
    /// Throws ProviderError when the body does not match the schema.
    virtual std::string reply_text(std::string_view body) const = 0;
    virtual std::map<std::string, std::string> headers(std::string_view api_key) const = 0;
};

/// {model, messages: [{role: "user", content}], temperature}; reply in
/// choices[0].message.content; bearer authentication.
class OpenAiChatAdapter final : public ProviderAdapter {
public:
    std::string request_body(const ProviderConfig& config, std::string_view prompt) const override;
    std::string reply_text(std::string_view body) const override;
    std::map<std::string, std::string> headers(std::string_view api_key) const override;
};

struct HttpResponse {
    int status = 0;  // 0 when no response arrived
    std::string body;
    bool timed_out = false;
    std::string transport_error;
};

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const std::string& url, const std::map<std::string, std::string>& headers,
                              const std::string& body, double timeout_seconds) = 0;
};

/// cpp-httplib backed transport; supports http:// and https:// URLs.
class HttplibTransport final : public HttpTransport {
public:
    HttpResponse post(const std::string& url, const std::map<std::string, std::string>& headers,
                      const std::string& body, double timeout_seconds) override;
};

/// Append-only JSON-lines record of every attempt. Safe to share between
/// worker threads.
class TranscriptLog {
public:
    explicit TranscriptLog(const std::filesystem::path& path);
    void append(const nlohmann::json& record);

private:
    std::mutex mutex_;
    std::ofstream out_;
};

class ProviderClient {
public:
    explicit ProviderClient(ProviderConfig config, std::shared_ptr<const ProviderAdapter> adapter = nullptr,
                            std::shared_ptr<HttpTransport> transport = nullptr,
                            std::shared_ptr<TranscriptLog> transcript = nullptr);

    const ProviderConfig& config() const noexcept { return config_; }

    /// Sends `prompt` with the retry policy and parses a `horizon`-value
    /// reply. `window_index` only labels transcript records.
    /// Throws AuthError, ProviderError, RetriesExhausted or Timeout.
    ParsedPrediction complete(const std::string& prompt, std::size_t horizon, std::size_t window_index) const;

private:
    ProviderConfig config_;
    std::shared_ptr<const ProviderAdapter> adapter_;
    std::shared_ptr<HttpTransport> transport_;
    std::shared_ptr<TranscriptLog> transcript_;
    mutable std::atomic<bool> warned_{false};
};

ParsedPrediction forecast_window(const ProviderClient& client, PromptMode mode, std::span<const Shot> shots,
                                 std::span<const double> window, std::size_t horizon, std::size_t window_index = 0);

enum class FailurePolicy { abort, skip };

struct BatchEntry {
    std::optional<ParsedPrediction> prediction;
    std::optional<Error> failure;
};

struct BatchResult {
    std::vector<BatchEntry> entries;  // index-aligned with the input windows
    double total_latency = 0.0;      // sum of per-window latencies
    std::size_t failures = 0;
};

/// Forecasts every window with at most `max_in_flight` requests outstanding.
/// Under FailurePolicy::abort the first failure stops new dispatches and is
/// rethrown with its window index once in-flight requests finish.
BatchResult run_batch(const ProviderClient& client, PromptMode mode, std::span<const Shot> shots,
                      std::span<const std::vector<double>> windows, std::size_t horizon,
                      FailurePolicy policy = FailurePolicy::abort);

class LlmForecaster final : public Forecaster {
public:
    LlmForecaster(std::shared_ptr<const ProviderClient> client, PromptMode mode, std::vector<Shot> shots);

    ForecasterKind kind() const override { return ForecasterKind::llm_prompt; }
    std::vector<double> predict(std::span<const double> window, std::size_t horizon) override;

private:
    std::shared_ptr<const ProviderClient> client_;
    PromptMode mode_;
    std::vector<Shot> shots_;
    std::size_t calls_ = 0;
};

}  // namespace fcst::prompt
