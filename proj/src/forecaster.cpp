#include "fcst/forecaster.hpp"

#include "fcst/error.hpp"

namespace fcst {

std::string_view to_string(ForecasterKind kind) noexcept {
    switch (kind) {
        case ForecasterKind::persistence: return "persistence";
        case ForecasterKind::lstm: return "lstm";
        case ForecasterKind::tcn: return "tcn";
        case ForecasterKind::llm_prompt: return "llm_prompt";
        case ForecasterKind::bridge: return "bridge";
    }
    return "unknown";
}

std::optional<ForecasterKind> parse_forecaster_kind(std::string_view name) noexcept {
    for (auto k : {ForecasterKind::persistence, ForecasterKind::lstm, ForecasterKind::tcn, ForecasterKind::llm_prompt,
                   ForecasterKind::bridge}) {
        if (to_string(k) == name) return k;
    }
    return std::nullopt;
}

std::vector<double> persistence_forecast(std::span<const double> window, std::size_t horizon) {
    if (window.empty()) {
        fail(ErrorCode::ShapeMismatch, "persistence: empty window");
    }
    return std::vector<double>(horizon, window.back());
}

}  // namespace fcst
