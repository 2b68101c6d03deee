#pragma once

#include "fcst/error.hpp"
#include "fcst/forecaster.hpp"

#include <sys/types.h>

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fcst::bridge {

inline constexpr std::string_view kProtocolVersion = "1";

struct HelloMessage {
    std::string protocol_version;
    std::string model_name;
    std::optional<std::size_t> max_window;
    std::optional<std::size_t> max_horizon;
};

struct BridgeOptions {
    std::vector<std::string> command;  // argv; command[0] is looked up on PATH
    double handshake_timeout = 10.0;   // seconds
    double request_timeout = 300.0;
    double shutdown_timeout = 5.0;
};

struct BridgeReply {
    std::uint64_t id = 0;
    std::vector<double> pred;
    double latency = 0.0;  // seconds from request write to matching reply
};

struct ExitStatus {
    std::string state;  // "exited", "signaled" or "killed"
    int code = 0;       // exit code or signal number

    std::string to_string() const;
};

/// One child process speaking the JSON-lines bridge protocol
/// (docs/bridge-protocol.md). Owned by a single client thread.
class BridgeSession {
public:
    /// Starts the child and waits for its hello line.
    /// Throws SpawnFailed, HandshakeTimeout, VersionMismatch, ProtocolViolation
    /// or BrokenPipe.
    static std::unique_ptr<BridgeSession> spawn(const BridgeOptions& options);

    ~BridgeSession();
    BridgeSession(const BridgeSession&) = delete;
    BridgeSession& operator=(const BridgeSession&) = delete;

    const HelloMessage& hello() const noexcept { return hello_; }
    pid_t pid() const noexcept { return pid_; }

    /// Sends one request and blocks for its reply.
    /// Throws BridgeError, ProtocolViolation, BrokenPipe or Timeout.
    BridgeReply forecast(std::span<const double> window, std::size_t horizon);

    /// Closes the child's stdin, waits up to shutdown_timeout, then kills it.
    /// Safe to call repeatedly; later calls return the first status.
    ExitStatus shutdown();

    double total_wait() const noexcept { return total_wait_; }
    std::size_t requests_sent() const noexcept { return next_id_ - 1; }
    std::size_t replies_received() const noexcept { return answered_.size(); }

private:
    BridgeSession(BridgeOptions options, pid_t pid, int to_child, int from_child);

    /// Next full line from the child, or throws BrokenPipe on EOF and
    /// `timeout_code` when `timeout` seconds pass first.
    std::string read_line(double timeout, ErrorCode timeout_code);
    void write_line(const std::string& line);

    BridgeOptions options_;
    pid_t pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
    HelloMessage hello_;
    std::uint64_t next_id_ = 1;
    std::set<std::uint64_t> outstanding_;
    std::set<std::uint64_t> answered_;
    double total_wait_ = 0.0;
    std::optional<ExitStatus> exit_status_;
};

class BridgeForecaster final : public Forecaster {
public:
    explicit BridgeForecaster(std::shared_ptr<BridgeSession> session) : session_(std::move(session)) {}

    ForecasterKind kind() const override { return ForecasterKind::bridge; }
    std::vector<double> predict(std::span<const double> window, std::size_t horizon) override {
        return session_->forecast(window, horizon).pred;
    }

private:
    std::shared_ptr<BridgeSession> session_;
};

}  // namespace fcst::bridge
