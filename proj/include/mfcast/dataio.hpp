#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mfcast {

/// Multi-plant production series on a regular period grid, normalized to [0,1].
struct RawSeries {
    std::vector<std::int64_t> timestamps;    // strictly increasing, constant step
    Eigen::MatrixXd values;                  // periods x plants
    std::vector<double> capacities;          // nominal MW per plant
    std::optional<Eigen::VectorXd> weather;  // one entry per period

    std::size_t periods() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t plants() const { return static_cast<std::size_t>(values.cols()); }

    /// Throws DomainError / OrderError / SizeError on a broken invariant.
    void validate() const;
};

enum class FeatureKind { measurement, weather, bias };

struct FeatureDescriptor {
    FeatureKind kind = FeatureKind::measurement;
    std::size_t plant = 0;  // measurement only
    std::size_t lag = 0;    // measurement only

    bool maskable() const { return kind == FeatureKind::measurement; }
    bool operator==(const FeatureDescriptor&) const = default;
};

/// Supervised matrix built from lag windows. Row i describes period
/// obs_periods[i] and targets the target plant at obs_periods[i] + horizon.
struct Dataset {
    Eigen::MatrixXd X;  // n x p
    Eigen::VectorXd y;  // n
    std::vector<FeatureDescriptor> descriptors;
    std::vector<std::size_t> maskable;  // P, ascending column indices
    std::size_t horizon = 1;
    std::size_t max_lag = 0;
    std::size_t target_plant = 0;
    std::vector<std::size_t> obs_periods;  // row positions in the RawSeries

    std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
    std::size_t features() const { return static_cast<std::size_t>(X.cols()); }
    std::optional<std::size_t> bias_feature() const;

    /// Contiguous row range [begin, begin + count).
    Dataset slice(std::size_t begin, std::size_t count) const;
};

struct SynthConfig {
    std::size_t n_plants = 4;
    std::size_t n_periods = 8000;
    double ar_coefficient = 0.97;
    double cross_plant_correlation = 0.6;
    double noise_std = 1.0;
    std::uint64_t seed = 1;

    void validate() const;
};

struct SplitIndices {
    std::size_t train_begin = 0, train_count = 0;
    std::size_t val_begin = 0, val_count = 0;
    std::size_t test_begin = 0, test_count = 0;
};

struct DataSplit {
    Dataset train;
    Dataset val;
    Dataset test;
    SplitIndices indices;
};

/// Reads `period,plant_0..plant_{S-1}[,weather]`.
RawSeries load_csv(const std::filesystem::path& path);
void save_csv(const RawSeries& raw, const std::filesystem::path& path);

/// AR(1) latent per plant with equicorrelated innovations, squashed by the
/// logistic map. Plant s at period t:
///   e_s[t] = sqrt(c) * common[t] + sqrt(1 - c) * own_s[t]
///   z_s[t] = a * z_s[t-1] + sqrt(1 - a^2) * sigma * e_s[t],  z_s[0] = sigma * e_s[0]
///   value  = 1 / (1 + exp(-z_s[t]))
/// Weather is the trailing 8-period mean of plant 0's latent plus N(0, 0.3^2)
/// noise, squashed the same way.
RawSeries gen_synthetic(const SynthConfig& cfg);

/// Columns: plant-major, lag-minor measurements, then weather, then bias.
Dataset build_supervised(const RawSeries& raw, std::size_t target_plant, std::size_t max_lag,
                         std::size_t horizon);

/// Sequential split. train = floor(n * train_frac) rows, of which the last
/// floor(train * val_frac_of_train) form the validation block; the rest is test.
SplitIndices split_indices(std::size_t n, double train_frac, double val_frac_of_train);
DataSplit split_sequential(const Dataset& ds, double train_frac, double val_frac_of_train);

}  // namespace mfcast
