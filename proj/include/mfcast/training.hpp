#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "mfcast/dataio.hpp"
#include "mfcast/missingness.hpp"
#include "mfcast/models.hpp"

namespace mfcast {

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t max_iterations = 1000;  // K, counted in epochs
    std::size_t patience = 20;          // Phi
    std::size_t batch_size = 512;
    double weight_decay = 0.0;
    bool shuffle = false;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Adam moments, shaped like the parameters they belong to.
struct OptimizerState {
    ModelParams m;
    ModelParams v;
    std::size_t step = 0;

    static OptimizerState for_params(const ModelParams& params);
};

struct AdamConstants {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam update, in place.
void adam_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, double learning_rate,
               const AdamConstants& constants = {});

/// One validation point per outer iteration. Iteration 0 is the starting
/// point, evaluated before any update.
struct TracePoint {
    std::size_t iteration = 0;
    double train_loss = std::numeric_limits<double>::quiet_NaN();
    double val_loss = 0.0;
};

struct TrainResult {
    ModelParams params;    // best validation point
    double best_loss = 0;  // its validation loss
    std::size_t best_iteration = 0;
    std::size_t iterations = 0;  // outer iterations actually run (<= K)
    std::vector<TracePoint> trace;
};

/// Training and validation blocks consumed by the trainers.
struct TrainData {
    const Dataset& train;
    const Dataset& val;
};

/// One epoch of mini-batch Adam at a fixed pattern; returns the mean batch loss.
double run_epoch(ModelParams& params, OptimizerState& state, const Dataset& train, const MissingPattern& alpha,
                 const TrainConfig& cfg, std::uint64_t epoch_index);

/// Gradient-based training at a fixed missing pattern with patience-based
/// early stopping on the validation loss. Starts from `warm_start` when
/// given, otherwise from init_params(..., cfg.seed).
TrainResult train_nominal(const TrainData& data, const MissingPattern& alpha, const TrainConfig& cfg,
                          const Architecture& arch, Family family, bool adaptive,
                          const std::optional<ModelParams>& warm_start = std::nullopt);

void write_trace_csv(std::span<const TracePoint> trace, const std::filesystem::path& path);

}  // namespace mfcast
