#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fcst {

enum class ForecasterKind { persistence, lstm, tcn, llm_prompt, bridge };

/// Stable serialized names: "persistence", "lstm", "tcn", "llm_prompt", "bridge".
std::string_view to_string(ForecasterKind kind) noexcept;
std::optional<ForecasterKind> parse_forecaster_kind(std::string_view name) noexcept;

/// Predict-one-window contract shared by every backend. Windows and
/// predictions are on the normalized scale.
class Forecaster {
public:
    virtual ~Forecaster() = default;

    virtual ForecasterKind kind() const = 0;
    virtual std::string label() const { return std::string(to_string(kind())); }
    virtual std::vector<double> predict(std::span<const double> window, std::size_t horizon) = 0;
};

/// Last observed value repeated `horizon` times.
std::vector<double> persistence_forecast(std::span<const double> window, std::size_t horizon);

class PersistenceForecaster final : public Forecaster {
public:
    ForecasterKind kind() const override { return ForecasterKind::persistence; }
    std::vector<double> predict(std::span<const double> window, std::size_t horizon) override {
        return persistence_forecast(window, horizon);
    }
};

}  // namespace fcst
