#pragma once

// Independent reference computations shared by the unit and acceptance tests.
// Nothing here calls the code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mfcast/partition.hpp"

namespace oracle {

using mfcast::Dataset;
using mfcast::FeatureDescriptor;
using mfcast::FeatureKind;
using mfcast::MissingPattern;
using mfcast::ModelParams;

/// Dataset over given X and y. The last column is treated as the bias when
/// `with_bias`, every other column is maskable.
inline Dataset make_dataset(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, bool with_bias = true) {
    Dataset ds;
    ds.X = X;
    ds.y = y;
    const auto p = static_cast<std::size_t>(X.cols());
    for (std::size_t j = 0; j < p; ++j) {
        FeatureDescriptor d;
        if (with_bias && j + 1 == p) {
            d.kind = FeatureKind::bias;
        } else {
            d.kind = FeatureKind::measurement;
            d.plant = j;
            ds.maskable.push_back(j);
        }
        ds.descriptors.push_back(d);
    }
    for (Eigen::Index i = 0; i < X.rows(); ++i) ds.obs_periods.push_back(static_cast<std::size_t>(i));
    return ds;
}

/// n rows of U(0,1) features plus a bias column; y is a noisy linear
/// function of the features.
inline Dataset random_dataset(std::size_t n, std::size_t p_no_bias, std::uint64_t seed, double noise = 0.05) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p_no_bias + 1));
    Eigen::VectorXd beta(static_cast<Eigen::Index>(p_no_bias));
    for (auto& b : beta.reshaped()) b = g(rng);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double t = 0.2;
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(p_no_bias); ++j) {
            X(i, j) = u(rng);
            t += beta[j] * X(i, j);
        }
        X(i, X.cols() - 1) = 1.0;
        y[i] = t + noise * g(rng);
    }
    return make_dataset(X, y);
}

/// Randomizes every parameter block, including the correction blocks.
inline void randomize(ModelParams& params, std::uint64_t seed, double scale = 0.5) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, scale);
    for (auto block : params.blocks())
        for (auto& v : block) v = g(rng);
}

/// Predictions straight from the definitions: masked inputs are zeroed and
/// every weight block is shifted by its correction times alpha.
inline Eigen::VectorXd reference_predict(const ModelParams& params, const Eigen::MatrixXd& X,
                                         const MissingPattern& alpha) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.maskable.size()));
    for (std::size_t k = 0; k < params.maskable.size(); ++k)
        a[static_cast<Eigen::Index>(k)] = alpha.missing(params.maskable[k]) ? 1.0 : 0.0;
    Eigen::MatrixXd Xa = X;
    for (std::size_t j = 0; j < alpha.size(); ++j)
        if (alpha.missing(j)) Xa.col(static_cast<Eigen::Index>(j)).setZero();

    Eigen::VectorXd w = params.w;
    if (params.adaptive) w += params.D * a;
    if (params.family == mfcast::Family::lr) return Xa * w;

    Eigen::MatrixXd G = Xa.transpose();  // one column per row of X
    for (std::size_t m = 0; m < params.layers.size(); ++m) {
        const auto& L = params.layers[m];
        Eigen::MatrixXd W = L.W;
        if (params.adaptive) W.rowwise() += (L.D * a).transpose();
        G = (W * G).colwise() + L.b;
        if (m > 0) G = G.cwiseMax(0.0);
    }
    return (G.transpose() * w).array() + params.b[0];
}

/// Mean squared error of reference_predict plus weight decay over every
/// weight and correction block except explicit biases and the LR weight of
/// the constant feature.
inline double reference_loss(const ModelParams& params, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const MissingPattern& alpha, double wd) {
    const double loss = (reference_predict(params, X, alpha) - y).squaredNorm() / static_cast<double>(X.rows());
    if (wd == 0.0) return loss;
    double decay = 0.0;
    for (const auto& L : params.layers) decay += L.W.squaredNorm() + L.D.squaredNorm();
    for (Eigen::Index j = 0; j < params.w.size(); ++j)
        if (!(params.family == mfcast::Family::lr && params.bias_feature &&
              static_cast<std::size_t>(j) == *params.bias_feature))
            decay += params.w[j] * params.w[j];
    decay += params.D.squaredNorm();
    return loss + wd * decay;
}

/// Central finite differences of reference_loss, flattened in block order.
inline std::vector<double> fd_gradient(ModelParams params, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                       const MissingPattern& alpha, double wd, double step = 1e-6) {
    std::vector<double> out;
    auto blocks = params.blocks();
    for (auto block : blocks)
        for (auto& v : block) {
            const double keep = v;
            v = keep + step;
            const double up = reference_loss(params, X, y, alpha, wd);
            v = keep - step;
            const double down = reference_loss(params, X, y, alpha, wd);
            v = keep;
            out.push_back((up - down) / (2.0 * step));
        }
    return out;
}

/// Central differences at selected flat coordinates only (block order).
inline std::vector<double> fd_gradient_at(ModelParams params, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                          const MissingPattern& alpha, double wd, const std::vector<std::size_t>& coords,
                                          double step = 1e-6) {
    std::vector<double*> flat;
    for (auto block : params.blocks())
        for (auto& v : block) flat.push_back(&v);
    std::vector<double> out;
    for (auto c : coords) {
        double& v = *flat.at(c);
        const double keep = v;
        v = keep + step;
        const double up = reference_loss(params, X, y, alpha, wd);
        v = keep - step;
        const double down = reference_loss(params, X, y, alpha, wd);
        v = keep;
        out.push_back((up - down) / (2.0 * step));
    }
    return out;
}

/// Every subset of `free` of size <= budget - popcount(base), added to base.
inline std::vector<MissingPattern> patterns_within(const MissingPattern& base, const std::vector<std::size_t>& free,
                                                   std::size_t budget) {
    std::vector<MissingPattern> out;
    const std::size_t used = base.popcount();
    for (std::uint64_t code = 0; code < (std::uint64_t{1} << free.size()); ++code) {
        std::size_t count = 0;
        MissingPattern alpha = base;
        for (std::size_t k = 0; k < free.size(); ++k)
            if (code >> k & 1U) {
                alpha.set(free[k]);
                ++count;
            }
        if (used + count <= budget) out.push_back(alpha);
    }
    return out;
}

/// Exhaustive worst case of the reference loss.
inline double brute_force_worst(const ModelParams& params, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                const MissingPattern& base, const std::vector<std::size_t>& free, std::size_t budget) {
    double worst = -1.0;
    for (const auto& alpha : patterns_within(base, free, budget))
        worst = std::max(worst, reference_loss(params, X, y, alpha, 0.0));
    return worst;
}

inline double relative_error(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace oracle
