#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "mfcast/cli.hpp"
#include "mfcast/errors.hpp"

namespace {

enum Exit { ok = 0, config_error = 2, data_error = 3, runtime_error = 4 };

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Forecasting with missing features: synthetic data, training, evaluation."};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::size_t jobs = 1;

    auto add_common = [&](CLI::App* sub, bool with_jobs) {
        sub->add_option("--config", config_path, "JSON run config")->required();
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--out", out, "override the output folder");
        if (with_jobs) sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    };
    auto* synth = app.add_subcommand("synth", "write a synthetic data.csv");
    auto* train = app.add_subcommand("train", "train base models and partitions");
    auto* evaluate = app.add_subcommand("evaluate", "run the missingness grid on trained artifacts");
    auto* report = app.add_subcommand("report", "rewrite the CSV reports from results.json");
    add_common(synth, false);
    add_common(train, true);
    add_common(evaluate, true);
    add_common(report, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? Exit::ok : Exit::config_error;
    }

    using namespace mfcast;
    try {
        auto cfg = cli::load_run_config(config_path);
        cli::Overrides ov;
        ov.seed = seed;
        if (out) ov.out = *out;
        cli::apply_overrides(cfg, ov);

        if (synth->parsed()) {
            fmt::print("{}\n", cli::cmd_synth(cfg).string());
        } else if (train->parsed()) {
            for (const auto& p : cli::cmd_train(cfg, jobs, stdout)) fmt::print("wrote {}\n", p.string());
        } else if (evaluate->parsed()) {
            cli::cmd_evaluate(cfg, jobs);
            fmt::print("wrote reports to {}\n", cfg.output_dir.string());
        } else if (report->parsed()) {
            cli::cmd_report(cfg);
            fmt::print("wrote reports to {}\n", cfg.output_dir.string());
        }
        return Exit::ok;
    } catch (const ConfigError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return Exit::config_error;
    } catch (const ValidationError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return Exit::config_error;
    } catch (const Error& e) {
        fmt::print(stderr, "data error: {}\n", e.what());
        return Exit::data_error;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return Exit::runtime_error;
    }
}
