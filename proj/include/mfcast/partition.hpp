#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfcast/adversarial.hpp"

namespace mfcast {

/// Patterns over `maskable` with at most `budget` missing features.
struct UncertaintySet {
    std::size_t features = 0;
    std::vector<std::size_t> maskable;
    std::size_t budget = 0;

    static UncertaintySet of(const Dataset& ds, std::size_t budget);
    void validate() const;
};

struct PartitionConfig {
    std::size_t max_subsets = 10;  // Q
    double max_gap = 0.001;        // epsilon, as a fraction

    void validate() const;
};

/// Relative gap (UB - LB) / LB, with LB floored at 1e-12.
double relative_gap(double lb, double ub);

/// One cell of a partition. Learned cells are defined by the equality
/// constraints collected along their tree path; fixed cells by an exact
/// missing count.
struct UncertaintySubset {
    std::size_t id = 0;
    std::optional<std::size_t> parent;
    std::map<std::size_t, std::uint8_t> fixed;  // feature -> 0 (available) / 1 (missing)
    std::optional<std::size_t> missing_count;   // fixed partitions only
    MissingPattern alpha_opt;
    bool has_opt = true;  // false for fixed cells with a positive missing count
    std::vector<std::size_t> free;

    ModelParams theta_opt;
    ModelParams theta_adv;
    double lb = 0.0;
    double ub = 0.0;
    double relgap = 0.0;

    std::optional<std::size_t> split_feature;
    std::optional<std::size_t> available_child;
    std::optional<std::size_t> missing_child;

    bool is_leaf() const { return !split_feature.has_value(); }
    /// More than one pattern left: something is free and the budget is not used up.
    bool splittable(std::size_t budget) const { return !free.empty() && alpha_opt.popcount() < budget; }
};

enum class PartitionKind { learned, fixed };

struct SplitRecord {
    std::size_t parent = 0;
    std::size_t feature = 0;
    std::size_t available_child = 0;
    std::size_t missing_child = 0;
};

struct Partition {
    PartitionKind kind = PartitionKind::learned;
    UncertaintySet uset;
    PartitionConfig config;
    Family family = Family::lr;
    bool adaptive = false;
    std::vector<UncertaintySubset> subsets;  // indexed by id; internal nodes kept
    std::vector<std::size_t> leaves;         // ascending ids
    std::vector<SplitRecord> splits;
    bool stopped_by_gap = false;

    const UncertaintySubset& subset(std::size_t id) const { return subsets.at(id); }
    double max_leaf_relgap() const;
};

/// All patterns with at most `budget` of the maskable features missing, in
/// lexicographic order of the bits over `maskable`.
std::vector<MissingPattern> enumerate_patterns(const UncertaintySet& uset);

/// Cells l = 0..budget with exactly l missing features; parameters untrained.
Partition fixed_partition(const UncertaintySet& uset);

/// Trains every cell of fixed_partition: l = 0 nominally, l >= 1 with sampled
/// adversarial patterns warm-started from the l = 0 model.
Partition train_fixed_partition(const TrainData& data, const UncertaintySet& uset, const TrainConfig& cfg,
                                const Architecture& arch, Family family, bool adaptive);

/// Tree partition grown by repeatedly splitting the leaf with the largest
/// relative gap on its most damaging free feature.
Partition learn_partition(const TrainData& data, const UncertaintySet& uset, const PartitionConfig& pcfg,
                          const TrainConfig& cfg, const Architecture& arch, Family family, bool adaptive);

/// The learned partition as it stood after its first min(q - 1, splits)
/// splits. Growth is greedy and does not look at Q, so this equals training
/// the same tree with max_subsets = q.
Partition prefix_partition(const Partition& learned, std::size_t q);

/// Leaf containing alpha. Patterns over the training budget still route:
/// learned trees only look at split features, fixed partitions clamp the
/// count to the budget.
std::size_t locate(const Partition& partition, const MissingPattern& alpha);

/// Parameters used at deployment: the leaf's optimistic model when alpha is
/// exactly its optimistic pattern, the adversarial model otherwise.
const ModelParams& deployed_params(const Partition& partition, const MissingPattern& alpha);

double predict_deployed(const Partition& partition, const Eigen::Ref<const Eigen::VectorXd>& x,
                        const MissingPattern& alpha);

Eigen::VectorXd predict_deployed_rows(const Partition& partition, const Eigen::Ref<const Eigen::MatrixXd>& X,
                                      std::span<const MissingPattern> alphas);

/// Subset / next split / 100*UB / 100*LB / RelGap(%) table, one line per subset.
std::string format_bounds_table(const Partition& partition);

}  // namespace mfcast
