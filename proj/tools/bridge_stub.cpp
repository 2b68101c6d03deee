// Reference bridge server with persistence semantics, plus misbehaving modes
// used to exercise the client's error handling.

#include <CLI11.hpp>
#include <json.hpp>

#include <unistd.h>

#include <chrono>
#include <iostream>
#include <string>
#include <thread>

using nlohmann::json;

namespace {

void emit(const json& msg) { std::cout << msg.dump() << '\n' << std::flush; }

[[noreturn]] void sleep_forever() {
    while (true) std::this_thread::sleep_for(std::chrono::hours(1));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Persistence bridge server for protocol tests"};
    std::string mode = "persistence";
    std::string version = "1";
    std::string model_name = "persistence-stub";
    app.add_option("--mode", mode, "persistence|garbage|duplicate|wrong-id|bad-length|nan|error|die|silent|hang")
        ->check(CLI::IsMember({"persistence", "garbage", "duplicate", "wrong-id", "bad-length", "nan", "error", "die",
                               "silent", "hang"}));
    app.add_option("--protocol-version", version);
    app.add_option("--model-name", model_name);
    CLI11_PARSE(app, argc, argv);

    if (mode == "silent") sleep_forever();
    emit({{"hello", {{"protocol_version", version}, {"model_name", model_name}}}});
    if (mode == "hang") sleep_forever();

    std::string line;
    while (std::getline(std::cin, line)) {
        const json req = json::parse(line, nullptr, false);
        if (req.is_discarded() || !req.contains("id") || !req["id"].is_number_integer()) {
            emit({{"id", -1}, {"error", {{"code", "bad_request"}, {"message", "unparsable request"}}}});
            continue;
        }
        const auto id = req["id"].get<std::int64_t>();
        const auto& window = req.value("window", json::array());
        const auto horizon = req.value("horizon", std::size_t{1});
        if (mode == "die") return 3;
        if (mode == "garbage") {
            std::cout << "this is not json\n" << std::flush;
            continue;
        }
        if (mode == "error") {
            emit({{"id", id}, {"error", {{"code", "model_failure"}, {"message", "scripted failure"}}}});
            continue;
        }
        if (window.empty()) {
            emit({{"id", id}, {"error", {{"code", "empty_window"}, {"message", "window is empty"}}}});
            continue;
        }
        json pred = json::array();
        for (std::size_t i = 0; i < horizon; ++i) pred.push_back(window.back());
        if (mode == "bad-length") pred.push_back(window.back());
        if (mode == "nan") {
            std::cout << "{\"id\":" << id << ",\"pred\":[NaN]}\n" << std::flush;
            continue;
        }
        emit({{"id", mode == "wrong-id" ? id + 100 : id}, {"pred", pred}});
        if (mode == "duplicate") emit({{"id", id}, {"pred", pred}});
    }
    return 0;
}
