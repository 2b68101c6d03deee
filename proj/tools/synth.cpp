#include "fcst/synthetic.hpp"
#include "fcst/util.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Write a synthetic sensor CSV"};
    fcst::synth::SyntheticSpec spec;
    std::string shape = "sine";
    std::string out;
    app.add_option("--shape", shape)->check(CLI::IsMember({"sine", "random_walk"}));
    app.add_option("--length", spec.length);
    app.add_option("--period", spec.period);
    app.add_option("--amplitude", spec.amplitude);
    app.add_option("--offset", spec.offset);
    app.add_option("--columns", spec.columns);
    app.add_option("--target", spec.target_column);
    app.add_option("--seed", spec.seed);
    app.add_option("--out", out)->required();
    CLI11_PARSE(app, argc, argv);
    spec.shape = shape == "sine" ? fcst::synth::Shape::sine : fcst::synth::Shape::random_walk;
    try {
        fcst::write_file(out, fcst::synth::synthetic_csv(spec));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
