#include "mfcast/adversarial.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>

#include "mfcast/errors.hpp"

namespace mfcast {

namespace {

struct Candidate {
    std::size_t feature;
    double loss;
};

// Scores each free feature not yet in `alpha`; returns the argmax with the
// lowest index winning ties.
std::optional<Candidate> best_candidate(const ModelParams& params, const Eigen::Ref<const Eigen::MatrixXd>& X,
                                        const Eigen::Ref<const Eigen::VectorXd>& y,
                                        const std::vector<std::size_t>& candidates, MissingPattern& alpha) {
    std::optional<Candidate> best;
    for (auto j : candidates) {
        alpha.set(j, true);
        const double loss = mse(params, X, y, alpha);
        alpha.set(j, false);
        if (!best || loss > best->loss || (loss == best->loss && j < best->feature)) best = Candidate{j, loss};
    }
    return best;
}

}  // namespace

void AdvSearchScope::validate() const {
    for (auto j : free_features) {
        if (j >= base.size()) throw DomainError(fmt::format("free feature {} outside the pattern", j));
        if (base.missing(j)) throw DomainError(fmt::format("free feature {} is already fixed missing", j));
    }
    if (base.popcount() > budget)
        throw DomainError(fmt::format("base pattern has {} missing features, budget is {}", base.popcount(), budget));
}

AdvSearchResult find_adversarial(const ModelParams& params, const Eigen::Ref<const Eigen::MatrixXd>& X,
                                 const Eigen::Ref<const Eigen::VectorXd>& y, const AdvSearchScope& scope) {
    if (X.rows() == 0) throw SizeError("adversarial search over an empty data set");
    scope.validate();
    AdvSearchResult out;
    out.alpha = scope.base;
    out.loss = mse(params, X, y, out.alpha);

    std::vector<std::size_t> candidates = scope.free_features;
    std::sort(candidates.begin(), candidates.end());
    while (out.alpha.popcount() < scope.budget && !candidates.empty()) {
        const auto best = best_candidate(params, X, y, candidates, out.alpha);
        if (best->loss < out.loss) break;
        out.alpha.set(best->feature);
        out.loss = best->loss;
        out.accepted.push_back({best->feature, best->loss});
        candidates.erase(std::find(candidates.begin(), candidates.end(), best->feature));
    }
    return out;
}

std::optional<std::size_t> most_damaging_feature(const ModelParams& params, const Eigen::Ref<const Eigen::MatrixXd>& X,
                                                 const Eigen::Ref<const Eigen::VectorXd>& y,
                                                 const AdvSearchScope& scope) {
    if (X.rows() == 0) throw SizeError("adversarial search over an empty data set");
    scope.validate();
    if (scope.base.popcount() >= scope.budget || scope.free_features.empty()) return std::nullopt;
    std::vector<std::size_t> candidates = scope.free_features;
    std::sort(candidates.begin(), candidates.end());
    MissingPattern alpha = scope.base;
    return best_candidate(params, X, y, candidates, alpha)->feature;
}

AdvTrainResult train_adversarial(const TrainData& data, const AdvSearchScope& scope, const TrainConfig& cfg,
                                 const Architecture& arch, Family family, bool adaptive,
                                 const std::optional<ModelParams>& warm_start) {
    cfg.validate();
    scope.validate();
    if (data.train.rows() == 0 || data.val.rows() == 0) throw SizeError("training and validation sets must be non-empty");

    AdvTrainResult result;
    result.warm_start = warm_start ? *warm_start
                                   : train_nominal(data, scope.base, cfg, arch, family, adaptive).params;
    result.warm_start_loss = mse(result.warm_start, data.val.X, data.val.y, scope.base);

    ModelParams theta = result.warm_start;
    OptimizerState state = OptimizerState::for_params(theta);

    auto initial = find_adversarial(theta, data.val.X, data.val.y, scope);
    result.params = theta;
    result.loss = initial.loss;
    result.trace.push_back({0, scope.base, initial.alpha, initial.loss});

    std::size_t stale = 0;
    std::size_t k = 0;
    while (k < cfg.max_iterations && stale < cfg.patience) {
        const auto on_train = find_adversarial(theta, data.train.X, data.train.y, scope);
        run_epoch(theta, state, data.train, on_train.alpha, cfg, k);
        const auto on_val = find_adversarial(theta, data.val.X, data.val.y, scope);
        ++k;
        result.trace.push_back({k, on_train.alpha, on_val.alpha, on_val.loss});
        if (on_val.loss < result.loss) {
            result.params = theta;
            result.loss = on_val.loss;
            result.best_iteration = k;
            stale = 0;
        } else {
            ++stale;
        }
    }
    result.iterations = k;
    return result;
}

MissingPattern sample_fixed_adversarial(std::size_t count, std::span<const std::size_t> maskable,
                                        std::size_t features, Rng& rng) {
    if (count > maskable.size())
        throw DomainError(fmt::format("cannot mark {} of {} maskable features missing", count, maskable.size()));
    // Partial Fisher-Yates on a copy of the index set.
    std::vector<std::size_t> pool(maskable.begin(), maskable.end());
    MissingPattern alpha(features);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t remaining = pool.size() - i;
        const auto pick = i + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(remaining));
        std::swap(pool[i], pool[std::min(pick, pool.size() - 1)]);
        if (pool[i] >= features) throw IndexError(fmt::format("maskable feature {} out of range", pool[i]));
        alpha.set(pool[i]);
    }
    return alpha;
}

AdvTrainResult train_sampled_adversarial(const TrainData& data, std::size_t missing_count, const TrainConfig& cfg,
                                         const ModelParams& warm_start) {
    cfg.validate();
    if (data.train.rows() == 0 || data.val.rows() == 0) throw SizeError("training and validation sets must be non-empty");
    const auto& maskable = data.train.maskable;
    const std::size_t p = data.train.features();
    Rng rng(derive_seed(cfg.seed, {0xf1ed, missing_count}));

    AdvTrainResult result;
    result.warm_start = warm_start;
    const MissingPattern none(p);
    result.warm_start_loss = mse(warm_start, data.val.X, data.val.y, none);

    ModelParams theta = warm_start;
    OptimizerState state = OptimizerState::for_params(theta);

    const auto first = sample_fixed_adversarial(missing_count, maskable, p, rng);
    result.params = theta;
    result.loss = mse(theta, data.val.X, data.val.y, first);
    result.trace.push_back({0, none, first, result.loss});

    std::size_t stale = 0;
    std::size_t k = 0;
    while (k < cfg.max_iterations && stale < cfg.patience) {
        const auto train_alpha = sample_fixed_adversarial(missing_count, maskable, p, rng);
        run_epoch(theta, state, data.train, train_alpha, cfg, k);
        const auto val_alpha = sample_fixed_adversarial(missing_count, maskable, p, rng);
        const double val_loss = mse(theta, data.val.X, data.val.y, val_alpha);
        ++k;
        result.trace.push_back({k, train_alpha, val_alpha, val_loss});
        if (val_loss < result.loss) {
            result.params = theta;
            result.loss = val_loss;
            result.best_iteration = k;
            stale = 0;
        } else {
            ++stale;
        }
    }
    result.iterations = k;
    return result;
}

void write_adversarial_trace_csv(std::span<const AdvStep> steps, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    out << "iteration,feature,loss\n";
    for (std::size_t i = 0; i < steps.size(); ++i)
        out << fmt::format("{},{},{:.17g}\n", i + 1, steps[i].feature, steps[i].loss);
}

}  // namespace mfcast
