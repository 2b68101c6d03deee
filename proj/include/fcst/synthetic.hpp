#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace fcst::synth {

enum class Shape { sine, random_walk };

struct SyntheticSpec {
    Shape shape = Shape::sine;
    std::size_t length = 3000;
    double period = 50.0;     // sine only
    double amplitude = 1.0;
    double offset = 0.0;
    std::size_t columns = 1;  // total columns including the target; extra columns are filler sensors
    std::string target_column = "LIT 301";
    std::uint64_t seed = 0;   // random walk steps and filler columns
};

std::vector<double> synthetic_series(const SyntheticSpec& spec);

/// Header "Timestamp,<target>,S1,..." then one row per point.
std::string synthetic_csv(const SyntheticSpec& spec);

}  // namespace fcst::synth
