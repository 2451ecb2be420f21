#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfcast/dataio.hpp"

namespace mfcast {

/// Feature-level availability: bits[j] == 1 means feature j is missing.
struct MissingPattern {
    std::vector<std::uint8_t> bits;

    MissingPattern() = default;
    explicit MissingPattern(std::size_t p) : bits(p, 0) {}

    std::size_t size() const { return bits.size(); }
    bool missing(std::size_t j) const { return bits[j] != 0; }
    void set(std::size_t j, bool value = true) { bits[j] = value ? 1 : 0; }
    std::size_t popcount() const;
    bool any() const { return popcount() > 0; }
    /// '0'/'1' string, one char per feature; used as a map key and in reports.
    std::string key() const;

    bool operator==(const MissingPattern&) const = default;
    auto operator<=>(const MissingPattern&) const = default;
};

/// Pattern with the listed features set.
MissingPattern make_pattern(std::size_t p, std::span<const std::size_t> missing);

/// Throws DomainError if any bit outside the maskable set is set.
void check_support(const MissingPattern& alpha, std::span<const std::size_t> maskable);

struct MissingnessConfig {
    double p01 = 0.0;  // P(missing at t | available at t-1)
    double p11 = 0.0;  // P(missing at t | missing at t-1)
    std::uint64_t seed = 0;

    void validate() const;
};

/// Plant-level availability per period; 1 = measurement missing.
struct ObsMaskSeries {
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask;  // periods x plants

    std::size_t periods() const { return static_cast<std::size_t>(mask.rows()); }
    std::size_t plants() const { return static_cast<std::size_t>(mask.cols()); }
};

Eigen::VectorXd apply_mask(const Eigen::Ref<const Eigen::VectorXd>& x, const MissingPattern& alpha,
                           std::span<const std::size_t> maskable);

/// Independent two-state chain per plant, each starting available. Plant s
/// draws from its own stream seeded by (seed, s).
ObsMaskSeries simulate_markov(const MissingnessConfig& cfg, std::size_t periods, std::size_t plants);

/// Feature (plant s, lag k) of the row observed at period t is missing iff
/// mask(t - k, s) == 1. Weather and bias stay available.
std::vector<MissingPattern> expand_obs_mask(const ObsMaskSeries& mask, const Dataset& ds);

/// Forward fill per plant; a leading gap is filled with 0.0.
Eigen::MatrixXd impute_persistence(const Eigen::MatrixXd& values, const ObsMaskSeries& mask);

/// Column means of a training set, used by impute_mean.
Eigen::VectorXd column_means(const Dataset& train);

Eigen::VectorXd impute_mean(const Eigen::VectorXd& train_means, const Eigen::Ref<const Eigen::VectorXd>& x,
                            const MissingPattern& alpha);

void save_mask_csv(const ObsMaskSeries& mask, std::span<const std::int64_t> timestamps,
                   const std::filesystem::path& path);
ObsMaskSeries load_mask_csv(const std::filesystem::path& path);

}  // namespace mfcast
