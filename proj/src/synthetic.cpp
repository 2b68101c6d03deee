#include "fcst/synthetic.hpp"

#include "fcst/rng.hpp"
#include "fcst/util.hpp"

#include <cmath>
#include <numbers>

namespace fcst::synth {

std::vector<double> synthetic_series(const SyntheticSpec& spec) {
    std::vector<double> out(spec.length);
    SeededRng rng(spec.seed);
    double level = spec.offset;
    for (std::size_t i = 0; i < spec.length; ++i) {
        if (spec.shape == Shape::sine) {
            out[i] = spec.offset + spec.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / spec.period);
        } else {
            out[i] = level;
            level += spec.amplitude * (2.0 * rng.uniform() - 1.0);
        }
    }
    return out;
}

std::string synthetic_csv(const SyntheticSpec& spec) {
    const auto values = synthetic_series(spec);
    SeededRng filler(spec.seed ^ 0xA5A5A5A5ULL);
    std::string out = "Timestamp," + spec.target_column;
    for (std::size_t c = 2; c < spec.columns; ++c) out += ",S" + std::to_string(c - 1);
    out += '\n';
    for (std::size_t i = 0; i < values.size(); ++i) {
        out += std::to_string(i) + ',' + format_double(values[i]);
        for (std::size_t c = 2; c < spec.columns; ++c) out += ',' + format_double(std::round(filler.uniform() * 1000.0) / 1000.0);
        out += '\n';
    }
    return out;
}

}  // namespace fcst::synth
