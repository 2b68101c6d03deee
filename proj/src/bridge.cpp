#include "fcst/bridge.hpp"

#include <json.hpp>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <thread>

namespace fcst::bridge {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

void close_fd(int& fd) {
    if (fd >= 0) {
        ::close(fd);
        fd = -1;
    }
}

double elapsed(Clock::time_point since) { return std::chrono::duration<double>(Clock::now() - since).count(); }

std::string clip(std::string_view line) {
    return line.size() <= 200 ? std::string(line) : std::string(line.substr(0, 200)) + "...";
}

HelloMessage parse_hello(const std::string& line) {
    const json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("hello") || !doc["hello"].is_object()) {
        fail(ErrorCode::ProtocolViolation, "expected a hello message, got: " + clip(line));
    }
    const auto& h = doc["hello"];
    if (!h.contains("protocol_version") || !h["protocol_version"].is_string() || !h.contains("model_name") ||
        !h["model_name"].is_string()) {
        fail(ErrorCode::ProtocolViolation, "hello lacks protocol_version or model_name: " + clip(line));
    }
    HelloMessage out;
    out.protocol_version = h["protocol_version"].get<std::string>();
    out.model_name = h["model_name"].get<std::string>();
    for (const char* key : {"max_window", "max_horizon"}) {
        if (!h.contains(key) || h[key].is_null()) continue;
        if (!h[key].is_number_unsigned()) fail(ErrorCode::ProtocolViolation, std::string("hello.") + key + " is not a count");
        (std::string_view(key) == "max_window" ? out.max_window : out.max_horizon) = h[key].get<std::size_t>();
    }
    return out;
}

}  // namespace

std::string ExitStatus::to_string() const {
    if (state == "killed") return "killed";
    return state + ":" + std::to_string(code);
}

std::unique_ptr<BridgeSession> BridgeSession::spawn(const BridgeOptions& options) {
    if (options.command.empty()) fail(ErrorCode::SpawnFailed, "empty bridge command");
    ::signal(SIGPIPE, SIG_IGN);

    int in_pipe[2];
    int out_pipe[2];
    int err_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) fail(ErrorCode::SpawnFailed, std::strerror(errno));
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        fail(ErrorCode::SpawnFailed, std::strerror(errno));
    }
    if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
        fail(ErrorCode::SpawnFailed, std::strerror(errno));
    }

    std::vector<char*> argv;
    for (const auto& a : options.command) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);

    const pid_t pid = ::fork();
    if (pid < 0) {
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) ::close(fd);
        fail(ErrorCode::SpawnFailed, std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::signal(SIGPIPE, SIG_DFL);
        ::execvp(argv[0], argv.data());
        const int err = errno;
        [[maybe_unused]] auto n = ::write(err_pipe[1], &err, sizeof err);
        ::_exit(127);
    }

    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    int child_errno = 0;
    ssize_t n = 0;
    do {
        n = ::read(err_pipe[0], &child_errno, sizeof child_errno);
    } while (n < 0 && errno == EINTR);
    ::close(err_pipe[0]);
    if (n > 0) {
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::waitpid(pid, nullptr, 0);
        fail(ErrorCode::SpawnFailed, "cannot execute " + options.command[0] + ": " + std::strerror(child_errno));
    }

    std::unique_ptr<BridgeSession> session(new BridgeSession(options, pid, in_pipe[1], out_pipe[0]));
    const std::string line = session->read_line(options.handshake_timeout, ErrorCode::HandshakeTimeout);
    session->hello_ = parse_hello(line);
    if (session->hello_.protocol_version != kProtocolVersion) {
        session->shutdown();
        fail(ErrorCode::VersionMismatch, "server speaks protocol " + session->hello_.protocol_version +
                                             ", client speaks " + std::string(kProtocolVersion));
    }
    return session;
}

BridgeSession::BridgeSession(BridgeOptions options, pid_t pid, int to_child, int from_child)
    : options_(std::move(options)), pid_(pid), to_child_(to_child), from_child_(from_child) {}

BridgeSession::~BridgeSession() { shutdown(); }

std::string BridgeSession::read_line(double timeout, ErrorCode timeout_code) {
    const auto start = Clock::now();
    while (true) {
        const auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }
        if (from_child_ < 0) fail(ErrorCode::BrokenPipe, "bridge server output is closed");
        const double remaining = timeout - elapsed(start);
        if (remaining <= 0.0) {
            fail(timeout_code, "no reply from bridge server within " + std::to_string(timeout) + " s");
        }
        pollfd pfd{from_child_, POLLIN, 0};
        const int ms = static_cast<int>(std::ceil(std::min(remaining, 3600.0) * 1000.0));
        const int rc = ::poll(&pfd, 1, ms);
        if (rc < 0) {
            if (errno == EINTR) continue;
            fail(ErrorCode::BrokenPipe, std::string("poll: ") + std::strerror(errno));
        }
        if (rc == 0) continue;
        char chunk[65536];
        const ssize_t got = ::read(from_child_, chunk, sizeof chunk);
        if (got < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            fail(ErrorCode::BrokenPipe, std::string("read: ") + std::strerror(errno));
        }
        if (got == 0) fail(ErrorCode::BrokenPipe, "bridge server closed its output");
        buffer_.append(chunk, static_cast<std::size_t>(got));
    }
}

void BridgeSession::write_line(const std::string& line) {
    if (to_child_ < 0) fail(ErrorCode::BrokenPipe, "bridge session is shut down");
    const std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = ::write(to_child_, data.data() + off, data.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            fail(ErrorCode::BrokenPipe, std::string("write to bridge server: ") + std::strerror(errno));
        }
        off += static_cast<std::size_t>(n);
    }
}

BridgeReply BridgeSession::forecast(std::span<const double> window, std::size_t horizon) {
    const std::uint64_t id = next_id_++;
    const json request = {{"id", id}, {"window", std::vector<double>(window.begin(), window.end())}, {"horizon", horizon}};
    const auto start = Clock::now();
    write_line(request.dump());
    outstanding_.insert(id);

    while (true) {
        const double remaining = options_.request_timeout - elapsed(start);
        const std::string line = read_line(std::max(remaining, 0.0), ErrorCode::Timeout);
        const json doc = json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) {
            fail(ErrorCode::ProtocolViolation, "bridge server sent a non-JSON line: " + clip(line));
        }
        if (!doc.contains("id") || !doc["id"].is_number_integer()) {
            fail(ErrorCode::ProtocolViolation, "reply lacks an integer id: " + clip(line));
        }
        const bool has_pred = doc.contains("pred");
        const bool has_error = doc.contains("error");
        if (has_pred == has_error) {
            fail(ErrorCode::ProtocolViolation, "reply must carry exactly one of pred/error: " + clip(line));
        }
        if (doc["id"].get<std::int64_t>() < 0 && has_error) {
            fail(ErrorCode::BridgeError, "bridge server could not read a request: " + doc["error"].dump());
        }
        const auto rid = doc["id"].get<std::uint64_t>();
        if (answered_.contains(rid)) fail(ErrorCode::ProtocolViolation, "duplicate reply for id " + std::to_string(rid));
        if (!outstanding_.contains(rid)) fail(ErrorCode::ProtocolViolation, "reply for unknown id " + std::to_string(rid));
        outstanding_.erase(rid);
        answered_.insert(rid);

        if (has_error) {
            const auto& err = doc["error"];
            const std::string code = err.is_object() && err.contains("code") ? err["code"].dump() : "?";
            const std::string message =
                err.is_object() && err.contains("message") && err["message"].is_string() ? err["message"].get<std::string>() : "";
            fail(ErrorCode::BridgeError, "server error " + code + ": " + message);
        }
        const auto& pred = doc["pred"];
        if (!pred.is_array() || pred.size() != horizon) {
            fail(ErrorCode::ProtocolViolation, "pred must be an array of " + std::to_string(horizon) + " numbers");
        }
        BridgeReply reply;
        reply.id = rid;
        for (const auto& v : pred) {
            if (!v.is_number()) fail(ErrorCode::ProtocolViolation, "pred holds a non-number");
            const double x = v.get<double>();
            if (!std::isfinite(x)) fail(ErrorCode::ProtocolViolation, "pred holds a non-finite value");
            reply.pred.push_back(x);
        }
        if (rid != id) continue;  // an earlier request answered late
        reply.latency = elapsed(start);
        total_wait_ += reply.latency;
        return reply;
    }
}

ExitStatus BridgeSession::shutdown() {
    if (exit_status_) return *exit_status_;
    close_fd(to_child_);
    ExitStatus status{"killed", SIGKILL};
    int wstatus = 0;
    bool reaped = false;
    const auto start = Clock::now();
    while (elapsed(start) < options_.shutdown_timeout) {
        const pid_t r = ::waitpid(pid_, &wstatus, WNOHANG);
        if (r == pid_) {
            reaped = true;
            break;
        }
        if (r < 0 && errno != EINTR) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (!reaped) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &wstatus, 0);
    } else if (WIFEXITED(wstatus)) {
        status = {"exited", WEXITSTATUS(wstatus)};
    } else if (WIFSIGNALED(wstatus)) {
        status = {"signaled", WTERMSIG(wstatus)};
    }
    close_fd(from_child_);
    exit_status_ = status;
    return status;
}

}  // namespace fcst::bridge
