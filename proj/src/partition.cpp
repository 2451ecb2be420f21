#include "mfcast/partition.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "mfcast/errors.hpp"
#include "mfcast/rng.hpp"

namespace mfcast {

namespace {

constexpr double kGapFloor = 1e-12;
constexpr std::size_t kEnumerationLimit = 20;

TrainConfig config_for(const TrainConfig& cfg, std::size_t subset_id) {
    TrainConfig out = cfg;
    out.seed = derive_seed(cfg.seed, {subset_id});
    return out;
}

std::vector<std::size_t> without(std::vector<std::size_t> v, std::size_t j) {
    v.erase(std::remove(v.begin(), v.end(), j), v.end());
    return v;
}

}  // namespace

UncertaintySet UncertaintySet::of(const Dataset& ds, std::size_t budget) {
    UncertaintySet u{ds.features(), ds.maskable, budget};
    u.validate();
    return u;
}

void UncertaintySet::validate() const {
    if (budget > maskable.size())
        throw ValidationError(fmt::format("budget {} exceeds the {} maskable features", budget, maskable.size()));
    for (auto j : maskable)
        if (j >= features) throw ValidationError(fmt::format("maskable feature {} out of range", j));
}

void PartitionConfig::validate() const {
    if (max_subsets < 1) throw ValidationError("Q must be at least 1");
    if (!(max_gap >= 0.0)) throw ValidationError("epsilon must be non-negative");
}

double relative_gap(double lb, double ub) { return (ub - lb) / std::max(lb, kGapFloor); }

double Partition::max_leaf_relgap() const {
    double out = -std::numeric_limits<double>::infinity();
    for (auto id : leaves) out = std::max(out, subsets[id].relgap);
    return out;
}

std::vector<MissingPattern> enumerate_patterns(const UncertaintySet& uset) {
    uset.validate();
    const std::size_t m = uset.maskable.size();
    if (m > kEnumerationLimit)
        throw CapacityError(fmt::format("refusing to enumerate patterns over {} features (limit {})", m, kEnumerationLimit));
    std::vector<MissingPattern> out;
    // Bit m-1-k of `code` is the k-th maskable feature, so increasing codes
    // are lexicographic in the pattern read left to right.
    for (std::uint64_t code = 0; code < (std::uint64_t{1} << m); ++code) {
        if (static_cast<std::size_t>(std::popcount(code)) > uset.budget) continue;
        MissingPattern alpha(uset.features);
        for (std::size_t k = 0; k < m; ++k)
            if (code >> (m - 1 - k) & 1U) alpha.set(uset.maskable[k]);
        out.push_back(std::move(alpha));
    }
    return out;
}

Partition fixed_partition(const UncertaintySet& uset) {
    uset.validate();
    Partition part;
    part.kind = PartitionKind::fixed;
    part.uset = uset;
    part.config.max_subsets = uset.budget + 1;
    for (std::size_t l = 0; l <= uset.budget; ++l) {
        UncertaintySubset s;
        s.id = l;
        s.missing_count = l;
        s.alpha_opt = MissingPattern(uset.features);
        s.has_opt = l == 0;
        s.free = l == 0 ? std::vector<std::size_t>{} : uset.maskable;
        part.subsets.push_back(std::move(s));
        part.leaves.push_back(l);
    }
    return part;
}

Partition train_fixed_partition(const TrainData& data, const UncertaintySet& uset, const TrainConfig& cfg,
                                const Architecture& arch, Family family, bool adaptive) {
    Partition part = fixed_partition(uset);
    part.family = family;
    part.adaptive = adaptive;
    const MissingPattern none(uset.features);
    const auto nominal = train_nominal(data, none, config_for(cfg, 0), arch, family, adaptive);
    for (auto& s : part.subsets) {
        s.theta_opt = nominal.params;
        s.lb = nominal.best_loss;
        if (s.missing_count == 0u) {
            s.theta_adv = nominal.params;
            s.ub = nominal.best_loss;
        } else {
            const auto adv = train_sampled_adversarial(data, *s.missing_count, config_for(cfg, s.id), nominal.params);
            s.theta_adv = adv.params;
            s.ub = adv.loss;
        }
        s.relgap = relative_gap(s.lb, s.ub);
    }
    return part;
}

Partition learn_partition(const TrainData& data, const UncertaintySet& uset, const PartitionConfig& pcfg,
                          const TrainConfig& cfg, const Architecture& arch, Family family, bool adaptive) {
    uset.validate();
    pcfg.validate();
    cfg.validate();

    Partition part;
    part.kind = PartitionKind::learned;
    part.uset = uset;
    part.config = pcfg;
    part.family = family;
    part.adaptive = adaptive;

    auto scope_of = [&uset](const UncertaintySubset& s) { return AdvSearchScope{s.free, uset.budget, s.alpha_opt}; };

    UncertaintySubset root;
    root.id = 0;
    root.alpha_opt = MissingPattern(uset.features);
    root.free = uset.maskable;
    {
        const auto tcfg = config_for(cfg, root.id);
        const auto opt = train_nominal(data, root.alpha_opt, tcfg, arch, family, adaptive);
        root.theta_opt = opt.params;
        root.lb = opt.best_loss;
        const auto adv = train_adversarial(data, scope_of(root), tcfg, arch, family, adaptive, opt.params);
        root.theta_adv = adv.params;
        root.ub = adv.loss;
        root.relgap = relative_gap(root.lb, root.ub);
    }
    part.subsets.push_back(std::move(root));
    part.leaves.push_back(0);

    while (part.leaves.size() < pcfg.max_subsets) {
        std::optional<std::size_t> pick;
        for (auto id : part.leaves) {
            const auto& s = part.subsets[id];
            if (!s.splittable(uset.budget)) continue;
            if (!pick || s.relgap > part.subsets[*pick].relgap) pick = id;
        }
        if (!pick) break;
        if (part.subsets[*pick].relgap <= pcfg.max_gap) {
            part.stopped_by_gap = true;
            break;
        }

        const std::size_t parent_id = *pick;
        const auto split = most_damaging_feature(part.subsets[parent_id].theta_opt, data.train.X, data.train.y,
                                                 scope_of(part.subsets[parent_id]));
        const std::size_t feature = *split;

        UncertaintySubset avail;
        UncertaintySubset miss;
        {
            const auto& parent = part.subsets[parent_id];
            avail.id = part.subsets.size();
            miss.id = avail.id + 1;
            for (auto* child : {&avail, &miss}) {
                child->parent = parent_id;
                child->fixed = parent.fixed;
                child->alpha_opt = parent.alpha_opt;
                child->free = without(parent.free, feature);
            }
            avail.fixed[feature] = 0;
            miss.fixed[feature] = 1;
            miss.alpha_opt.set(feature);

            avail.theta_opt = parent.theta_opt;
            avail.lb = parent.lb;
            miss.theta_adv = parent.theta_adv;
            miss.ub = parent.ub;
        }

        const auto adv = train_adversarial(data, scope_of(avail), config_for(cfg, avail.id), arch, family, adaptive,
                                           avail.theta_opt);
        avail.theta_adv = adv.params;
        avail.ub = adv.loss;
        avail.relgap = relative_gap(avail.lb, avail.ub);

        const auto opt = train_nominal(data, miss.alpha_opt, config_for(cfg, miss.id), arch, family, adaptive);
        miss.theta_opt = opt.params;
        miss.lb = opt.best_loss;
        miss.relgap = relative_gap(miss.lb, miss.ub);

        auto& parent = part.subsets[parent_id];
        parent.split_feature = feature;
        parent.available_child = avail.id;
        parent.missing_child = miss.id;
        part.splits.push_back({parent_id, feature, avail.id, miss.id});
        part.leaves.erase(std::find(part.leaves.begin(), part.leaves.end(), parent_id));
        part.leaves.push_back(avail.id);
        part.leaves.push_back(miss.id);
        part.subsets.push_back(std::move(avail));
        part.subsets.push_back(std::move(miss));
    }
    return part;
}

Partition prefix_partition(const Partition& learned, std::size_t q) {
    if (learned.kind != PartitionKind::learned) throw ValidationError("only learned partitions have prefixes");
    if (q < 1) throw ValidationError("Q must be at least 1");
    if (q > learned.config.max_subsets)
        throw ValidationError(fmt::format("Q={} exceeds the {} the partition was grown with", q, learned.config.max_subsets));
    const std::size_t kept = std::min(q - 1, learned.splits.size());
    Partition out;
    out.kind = learned.kind;
    out.uset = learned.uset;
    out.config = learned.config;
    out.config.max_subsets = q;
    out.family = learned.family;
    out.adaptive = learned.adaptive;
    out.splits.assign(learned.splits.begin(), learned.splits.begin() + static_cast<std::ptrdiff_t>(kept));
    out.subsets.assign(learned.subsets.begin(), learned.subsets.begin() + static_cast<std::ptrdiff_t>(1 + 2 * kept));
    for (auto& s : out.subsets)
        if (s.available_child && *s.available_child >= out.subsets.size()) {
            s.split_feature.reset();
            s.available_child.reset();
            s.missing_child.reset();
        }
    // Replay the leaf list in creation order.
    out.leaves = {0};
    for (const auto& r : out.splits) {
        out.leaves.erase(std::find(out.leaves.begin(), out.leaves.end(), r.parent));
        out.leaves.push_back(r.available_child);
        out.leaves.push_back(r.missing_child);
    }
    out.stopped_by_gap = kept == learned.splits.size() && learned.stopped_by_gap && out.leaves.size() < q;
    return out;
}

std::size_t locate(const Partition& partition, const MissingPattern& alpha) {
    if (alpha.size() != partition.uset.features)
        throw DomainError(fmt::format("pattern has {} entries, partition expects {}", alpha.size(), partition.uset.features));
    check_support(alpha, partition.uset.maskable);
    if (partition.kind == PartitionKind::fixed)
        return std::min(alpha.popcount(), partition.uset.budget);
    std::size_t id = 0;
    while (true) {
        const auto& node = partition.subsets.at(id);
        if (node.is_leaf()) return id;
        id = alpha.missing(*node.split_feature) ? *node.missing_child : *node.available_child;
    }
}

const ModelParams& deployed_params(const Partition& partition, const MissingPattern& alpha) {
    const auto& leaf = partition.subsets[locate(partition, alpha)];
    return leaf.has_opt && alpha == leaf.alpha_opt ? leaf.theta_opt : leaf.theta_adv;
}

double predict_deployed(const Partition& partition, const Eigen::Ref<const Eigen::VectorXd>& x,
                        const MissingPattern& alpha) {
    return forward(deployed_params(partition, alpha), x, alpha);
}

Eigen::VectorXd predict_deployed_rows(const Partition& partition, const Eigen::Ref<const Eigen::MatrixXd>& X,
                                      std::span<const MissingPattern> alphas) {
    if (alphas.size() != static_cast<std::size_t>(X.rows()))
        throw SizeError(fmt::format("{} patterns for {} rows", alphas.size(), X.rows()));
    Eigen::VectorXd out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const auto& alpha = alphas[static_cast<std::size_t>(i)];
        out[i] = predict_deployed(partition, X.row(i).transpose(), alpha);
    }
    return out;
}

std::string format_bounds_table(const Partition& partition) {
    std::string out = fmt::format("{:<8} {:<12} {:>12} {:>12} {:>12}\n", "Subset", "Next split", "100*UB", "100*LB",
                                  "RelGap(%)");
    for (const auto& s : partition.subsets) {
        std::string next = "-";
        if (s.split_feature) next = fmt::format("{}", *s.split_feature);
        std::string gap = s.relgap > 1e6 ? std::string("inf") : fmt::format("{:.2f}", 100.0 * s.relgap);
        std::string name = partition.kind == PartitionKind::fixed ? fmt::format("l={}", *s.missing_count)
                                                                  : fmt::format("U{}", s.id);
        out += fmt::format("{:<8} {:<12} {:>12.4f} {:>12.4f} {:>12}\n", name, next, 100.0 * s.ub, 100.0 * s.lb, gap);
    }
    return out;
}

}  // namespace mfcast
