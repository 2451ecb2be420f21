#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfcast/partition.hpp"

namespace mfcast {

/// 100 * RMSE / mean(actuals).
double nrmse(std::span<const double> preds, std::span<const double> actuals);

struct DmResult {
    double statistic = 0.0;  // > 0 when the first series has the larger loss
    double p_value = 1.0;    // two-sided
    double p_first_worse = 0.5;
    double p_first_better = 0.5;
    bool degenerate = false;  // zero variance differential; statistic left at 0
    std::size_t lag = 0;
};

/// Diebold-Mariano test on per-observation losses with a Bartlett-kernel
/// long-run variance. `lag` defaults to floor(4 (n/100)^(2/9)).
DmResult dm_test(std::span<const double> loss_a, std::span<const double> loss_b,
                 std::optional<std::size_t> lag = std::nullopt);

namespace methods {
inline constexpr const char* imp_persistence = "imp-persistence";
inline constexpr const char* imp_mean = "imp-mean";
inline constexpr const char* retrain_oracle = "retrain-oracle";
}  // namespace methods

struct GridSpec {
    std::vector<double> p01;
    std::vector<double> p11;
    std::vector<std::size_t> horizons;
    /// imp-persistence, imp-mean, retrain-oracle, or the name of a trained partition.
    std::vector<std::string> methods;
    std::size_t runs = 10;
    std::uint64_t base_seed = 0;

    void validate() const;
};

/// Everything trained for one horizon.
struct HorizonArtifacts {
    std::size_t horizon = 1;
    ModelParams base;  // nominal model on complete data
    std::map<std::string, Partition> partitions;
};

/// Data and training settings shared by the evaluation routines.
struct EvalContext {
    RawSeries raw;
    std::size_t target_plant = 0;
    std::size_t max_lag = 2;
    double train_frac = 0.5;
    double val_frac = 0.15;
    std::vector<HorizonArtifacts> artifacts;

    // Used only by the retrain oracle.
    TrainConfig train_config;
    Architecture arch;
    Family family = Family::lr;

    const HorizonArtifacts& artifacts_for(std::size_t horizon) const;
};

struct EvalRecord {
    std::string method;
    std::size_t horizon = 1;
    double p01 = 0.0;
    double p11 = 0.0;
    std::size_t run = 0;
    double nrmse = 0.0;
    std::vector<double> squared_errors;  // one per test row
};

struct EvalResult {
    std::vector<EvalRecord> records;

    std::vector<const EvalRecord*> select(const std::string& method, std::size_t horizon, double p01,
                                          double p11) const;
    double mean_nrmse(const std::string& method, std::size_t horizon, double p01, double p11) const;
};

/// Seed of the availability masks for one cell and run. Shared by every
/// method and horizon so that comparisons within a run are paired.
std::uint64_t mask_seed(std::uint64_t base_seed, double p01, double p11, std::size_t run);

EvalResult run_grid(const GridSpec& spec, const EvalContext& ctx, std::size_t jobs = 1);

/// Averages the per-observation loss differential over runs, then applies dm_test.
DmResult dm_across_runs(const EvalResult& result, const std::string& method_a, const std::string& method_b,
                        std::size_t horizon, double p01, double p11);

struct QSweepRow {
    std::size_t q = 1;
    double nrmse = 0.0;  // mean over runs
    double max_relgap = 0.0;
};

/// Mean nrmse of each learned partition in one cell, ordered by Q.
std::vector<QSweepRow> q_sweep(const std::map<std::size_t, Partition>& by_q, std::size_t horizon, double p01,
                               double p11, std::size_t runs, std::uint64_t base_seed, const EvalContext& ctx,
                               std::size_t jobs = 1);

/// Writes grid.csv, summary.csv and qsweep.csv into out_dir.
void emit_report(const EvalResult& result, std::span<const QSweepRow> qsweep, const std::filesystem::path& out_dir);

}  // namespace mfcast
