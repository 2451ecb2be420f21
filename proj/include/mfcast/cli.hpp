#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mfcast/evalx.hpp"
#include "mfcast/serialize.hpp"

namespace mfcast::cli {

struct DataSource {
    std::optional<std::filesystem::path> csv;  // synthetic data when empty
    SynthConfig synth;
    bool synth_seed_given = false;  // otherwise the run seed is used
};

struct PartitionSettings {
    std::string mode = "learned";  // fixed | learned
    std::size_t max_subsets = 10;
    double max_gap = 0.001;
    std::optional<std::size_t> budget;  // defaults to |P|
};

struct QSweepSettings {
    std::vector<std::size_t> q_values;
    double p01 = 0.2;
    double p11 = 0.9;
    std::optional<std::size_t> horizon;  // defaults to the first horizon
};

struct RunConfig {
    DataSource data;
    std::size_t target_plant = 0;
    std::size_t max_lag = 2;
    std::vector<std::size_t> horizons{1};
    double train_frac = 0.5;
    double val_frac = 0.15;

    Family family = Family::lr;
    Architecture arch{{50, 50, 50, 50}};
    bool adaptive = true;
    TrainConfig train;
    PartitionSettings partition;
    GridSpec grid;
    std::optional<QSweepSettings> q_sweep;

    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 0;

    void validate() const;
};

/// Parses a run config. Missing keys take their defaults; unknown keys are
/// rejected. Relative data paths resolve against the config file's folder.
RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Command-line overrides applied after parsing.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out;
};
void apply_overrides(RunConfig& cfg, const Overrides& ov);

/// Name of the partition a grid method refers to, or nullopt for baselines.
/// rf-* are non-adaptive and arf-* adaptive; *-fixed and *-learn pick the partition kind.
struct PartitionMethod {
    bool adaptive = false;
    bool learned = true;
};
std::optional<PartitionMethod> parse_partition_method(const std::string& name);

/// Partitions that `train` produces: those named in the grid, or a single
/// one from the partition settings when the grid names none.
std::vector<std::string> partition_methods(const RunConfig& cfg);

std::string artifact_name(std::size_t horizon);
std::string sweep_name(std::size_t q);

RawSeries load_data(const RunConfig& cfg);

/// Writes data.csv into the output folder and returns its path.
std::filesystem::path cmd_synth(const RunConfig& cfg);

/// Trains the base model and partitions for each horizon and writes one
/// artifact file per horizon. Bounds tables go to `log`.
std::vector<std::filesystem::path> cmd_train(const RunConfig& cfg, std::size_t jobs, std::FILE* log);

/// Reads the artifacts, runs the grid (and Q sweep) and writes results.json,
/// qsweep.json, dm.csv and the CSV reports.
EvalResult cmd_evaluate(const RunConfig& cfg, std::size_t jobs);

/// Re-emits the CSV reports from results.json and qsweep.json.
void cmd_report(const RunConfig& cfg);

}  // namespace mfcast::cli
