#pragma once

#include "fcst/dataset.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fcst::prompt {

enum class PromptMode { zero_shot, few_shot };

std::string_view to_string(PromptMode mode) noexcept;
std::optional<PromptMode> parse_prompt_mode(std::string_view name) noexcept;

/// One in-context example: a normalized train window and its next value(s).
struct Shot {
    std::vector<double> window;
    std::vector<double> next;
    std::size_t origin_index = 0;
};

/// "[v1, v2, ..., vn]" using the shortest decimal that round-trips each value
/// (1.0 renders as "1", 0.5 as "0.5"). Throws NonFiniteValue.
std::string serialize_values(std::span<const double> values);

std::string render_zero_shot(std::span<const double> window, std::size_t horizon);

/// Throws NoShots when `shots` is empty.
std::string render_few_shot(std::span<const Shot> shots, std::span<const double> window, std::size_t horizon);

/// The `k` chronologically latest samples of `train`, oldest first.
/// Throws NotEnoughSamples when train holds fewer than k samples.
std::vector<Shot> select_shots(std::span<const data::WindowSample> train, std::size_t k);

/// Extracts the "pred" array from a model reply. Surrounding prose and code
/// fences are ignored; the first balanced JSON object with a top-level "pred"
/// key wins.
/// Throws NoJsonFound, WrongCount, NonFiniteValue or MalformedNumber.
std::vector<double> parse_prediction(std::string_view raw, std::size_t horizon);

/// Rough token count (one token per four bytes), used only for the
/// prompt-size warning.
std::size_t estimate_tokens(std::string_view text) noexcept;

}  // namespace fcst::prompt
