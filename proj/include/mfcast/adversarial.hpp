#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "mfcast/rng.hpp"
#include "mfcast/training.hpp"

namespace mfcast {

/// Where the greedy search may look: features still free to go missing, the
/// global budget, and the pattern already fixed by the enclosing subset.
struct AdvSearchScope {
    std::vector<std::size_t> free_features;
    std::size_t budget = 0;
    MissingPattern base;

    /// Throws DomainError when a free feature is already set in `base` or the
    /// base pattern exceeds the budget.
    void validate() const;
};

struct AdvStep {
    std::size_t feature = 0;
    double loss = 0.0;
};

struct AdvSearchResult {
    MissingPattern alpha;
    double loss = 0.0;
    std::vector<AdvStep> accepted;  // one entry per feature added, in order
};

/// Greedy worst-case pattern search. Starting from scope.base, repeatedly
/// scores every remaining free feature by the loss over (X, y) with that
/// feature additionally missing, and fixes the best one while the loss does
/// not drop and the budget allows. Ties go to the lowest feature index.
AdvSearchResult find_adversarial(const ModelParams& params, const Eigen::Ref<const Eigen::MatrixXd>& X,
                                 const Eigen::Ref<const Eigen::VectorXd>& y, const AdvSearchScope& scope);

/// The first scoring round only: the free feature whose removal hurts most,
/// regardless of whether it beats the base loss. Empty when the budget is
/// exhausted or nothing is free.
std::optional<std::size_t> most_damaging_feature(const ModelParams& params, const Eigen::Ref<const Eigen::MatrixXd>& X,
                                                 const Eigen::Ref<const Eigen::VectorXd>& y,
                                                 const AdvSearchScope& scope);

struct AdvTracePoint {
    std::size_t iteration = 0;
    MissingPattern train_alpha;
    MissingPattern val_alpha;
    double val_loss = 0.0;
};

struct AdvTrainResult {
    ModelParams params;
    double loss = 0.0;  // best validation loss under validation-side adversarial patterns
    std::size_t best_iteration = 0;
    std::size_t iterations = 0;
    ModelParams warm_start;  // parameters at the scope's base pattern
    double warm_start_loss = 0.0;
    std::vector<AdvTracePoint> trace;
};

/// Adversarial training. Warm-starts from nominal training at scope.base
/// (or from `warm_start` when supplied), then each iteration finds a pattern
/// on the training block, runs one epoch at it, finds a fresh pattern on the
/// validation block and scores the parameters there.
AdvTrainResult train_adversarial(const TrainData& data, const AdvSearchScope& scope, const TrainConfig& cfg,
                                 const Architecture& arch, Family family, bool adaptive,
                                 const std::optional<ModelParams>& warm_start = std::nullopt);

/// Uniformly random subset of `maskable` of exactly `count` features.
MissingPattern sample_fixed_adversarial(std::size_t count, std::span<const std::size_t> maskable,
                                        std::size_t features, Rng& rng);

/// Same loop as train_adversarial but with patterns drawn by
/// sample_fixed_adversarial (one for training and one for validation per
/// iteration) instead of the greedy search.
AdvTrainResult train_sampled_adversarial(const TrainData& data, std::size_t missing_count, const TrainConfig& cfg,
                                         const ModelParams& warm_start);

void write_adversarial_trace_csv(std::span<const AdvStep> steps, const std::filesystem::path& path);

}  // namespace mfcast
