#include "fcst/error.hpp"
#include "fcst/pipeline.hpp"
#include "fcst/util.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

fcst::ForecasterKind require_kind(const std::string& name) {
    const auto kind = fcst::parse_forecaster_kind(name);
    if (!kind) {
        fcst::fail(fcst::ErrorCode::UsageError,
                   "unknown model '" + name + "' (expected persistence, lstm, tcn, llm_prompt or bridge)");
    }
    return *kind;
}

void print_reports(const std::vector<fcst::eval::EvalReport>& reports) {
    std::cout << fcst::eval::report_markdown(reports);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Forecasting benchmark harness"};
    app.set_version_flag("--version", std::string(fcst::kToolVersion));
    app.require_subcommand(1);

    fcst::app::CommandOptions opts;
    std::string config;
    std::string model;
    std::string out;
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App* cmd, bool with_model, bool model_required) {
        cmd->add_option("--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
        cmd->add_option("--out", out, "Run directory (default: runs/<timestamp>-<config hash>)");
        cmd->add_option("--seed", seed, "Override train.seed");
        if (with_model) {
            auto* opt = cmd->add_option("--model", model, "persistence | lstm | tcn | llm_prompt | bridge");
            if (model_required) opt->required();
        }
    };
    auto* prepare = app.add_subcommand("prepare", "Ingest, window, split and standardize the dataset");
    auto* train = app.add_subcommand("train", "Train an lstm or tcn model");
    auto* forecast = app.add_subcommand("forecast", "Predict every test window with one backend");
    auto* evaluate = app.add_subcommand("evaluate", "Score predictions and write the report");
    auto* report = app.add_subcommand("report", "Rebuild report.md/report.csv from existing evaluations");
    auto* run = app.add_subcommand("run", "prepare, train, forecast and evaluate in one go");
    add_common(prepare, false, false);
    add_common(train, true, true);
    add_common(forecast, true, true);
    add_common(evaluate, true, false);
    add_common(report, false, false);
    add_common(run, false, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : fcst::exit_code_for(fcst::ErrorCode::UsageError);
    }

    try {
        opts.config_path = config;
        if (!out.empty()) opts.out = out;
        for (auto* cmd : {prepare, train, forecast, evaluate, report, run}) {
            if (cmd->count("--seed") > 0) opts.seed = seed;
        }
        if (prepare->parsed()) {
            const auto ctx = fcst::app::open_run(opts, true);
            const auto artifact = fcst::app::cmd_prepare(ctx);
            std::cout << "dataset: " << artifact.splits.train.size() << " train, " << artifact.splits.val.size()
                      << " val, " << artifact.splits.test.size() << " test samples in " << ctx.run_dir.string()
                      << "\n";
        } else if (train->parsed()) {
            const auto ctx = fcst::app::open_run(opts, false);
            const auto outcome = fcst::app::cmd_train(ctx, require_kind(model));
            std::cout << "trained " << model << " for " << outcome.log.epochs.size() << " epochs in "
                      << outcome.log.total_seconds << " s; final train loss " << outcome.log.epochs.back().train_loss
                      << "\n";
        } else if (forecast->parsed()) {
            const auto ctx = fcst::app::open_run(opts, false);
            const auto label = fcst::app::cmd_forecast(ctx, require_kind(model));
            std::cout << "wrote " << (ctx.run_dir / ("predictions_" + label + ".csv")).string() << "\n";
        } else if (evaluate->parsed()) {
            const auto ctx = fcst::app::open_run(opts, false);
            std::optional<std::string> label;
            if (!model.empty()) label = model;
            print_reports(fcst::app::cmd_evaluate(ctx, label));
        } else if (report->parsed()) {
            print_reports(fcst::app::cmd_report(fcst::app::open_run(opts, false)));
        } else if (run->parsed()) {
            const auto ctx = fcst::app::open_run(opts, true);
            print_reports(fcst::app::cmd_run(ctx));
            std::cout << "run directory: " << ctx.run_dir.string() << "\n";
        }
    } catch (const fcst::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return fcst::exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return fcst::exit_code_for(fcst::ErrorCode::IoError);
    }
    return 0;
}
