#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mfcast/dataio.hpp"
#include "mfcast/missingness.hpp"

namespace mfcast {

enum class Family { lr, nn };

std::string_view to_string(Family f);
Family family_from_string(std::string_view s);

/// Which columns of the input can go missing and where the constant feature sits.
struct FeatureLayout {
    std::size_t inputs = 0;
    std::vector<std::size_t> maskable;
    std::optional<std::size_t> bias_feature;

    static FeatureLayout of(const Dataset& ds);
};

/// Hidden layer widths of the NN family; ignored for LR.
struct Architecture {
    std::vector<std::size_t> hidden;

    void validate() const;
};

/// One NN hidden layer. When adaptive, D holds one column per maskable
/// feature and has as many rows as W has columns: the vector D * a is added
/// to every row of W.
struct Layer {
    Eigen::MatrixXd W;
    Eigen::VectorXd b;
    Eigen::MatrixXd D;
};

/// Parameters of either family.
///  - LR: prediction (w + D a)' x(alpha); the bias is the weight of the
///    constant feature. `layers` and `b` are empty.
///  - NN: g1 = (W0 + 1 (D0 a)') x(alpha) + b0, g_{m+1} = relu((Wm + 1 (Dm a)') gm + bm),
///    output (w + D a)' gM + b.
/// `a` is alpha restricted to the maskable features, in `maskable` order.
struct ModelParams {
    Family family = Family::lr;
    bool adaptive = false;
    std::size_t inputs = 0;
    std::vector<std::size_t> maskable;
    std::optional<std::size_t> bias_feature;

    std::vector<Layer> layers;
    Eigen::VectorXd w;
    Eigen::VectorXd b;
    Eigen::MatrixXd D;

    /// Contiguous storage of every parameter block, in a fixed order.
    std::vector<std::span<double>> blocks();
    std::vector<std::span<const double>> blocks() const;
    std::size_t parameter_count() const;

    /// Same shapes, all entries zero.
    ModelParams zeros_like() const;

    /// Throws DomainError when shapes disagree with each other or with `adaptive`.
    void validate() const;

    bool operator==(const ModelParams& other) const;
};

ModelParams init_params(const FeatureLayout& layout, const Architecture& arch, Family family, bool adaptive,
                        std::uint64_t seed);

/// Alpha restricted to the maskable features as a 0/1 vector.
Eigen::VectorXd restrict_pattern(const ModelParams& params, const MissingPattern& alpha);

double forward(const ModelParams& params, const Eigen::Ref<const Eigen::VectorXd>& x, const MissingPattern& alpha);

/// Predictions for every row of X under one shared pattern.
Eigen::VectorXd predict_batch(const ModelParams& params, const Eigen::Ref<const Eigen::MatrixXd>& X,
                              const MissingPattern& alpha);

/// Predictions with a pattern per row.
Eigen::VectorXd predict_rows(const ModelParams& params, const Eigen::Ref<const Eigen::MatrixXd>& X,
                             std::span<const MissingPattern> alphas);

/// Plain mean squared error under one shared pattern.
double mse(const ModelParams& params, const Eigen::Ref<const Eigen::MatrixXd>& X,
           const Eigen::Ref<const Eigen::VectorXd>& y, const MissingPattern& alpha);

/// Plain mean squared error with a pattern per row.
double mse_rows(const ModelParams& params, const Eigen::Ref<const Eigen::MatrixXd>& X,
                const Eigen::Ref<const Eigen::VectorXd>& y, std::span<const MissingPattern> alphas);

/// Sum of squares that weight decay penalizes: every weight and correction
/// block, excluding explicit biases and the LR weight of the constant feature.
double decay_norm(const ModelParams& params);

struct LossGrad {
    double loss = 0.0;
    ModelParams grad;
};

/// loss = MSE + weight_decay * decay_norm(params), with exact gradients for
/// every block.
LossGrad loss_and_grad(const ModelParams& params, const Eigen::Ref<const Eigen::MatrixXd>& X,
                       const Eigen::Ref<const Eigen::VectorXd>& y, const MissingPattern& alpha,
                       double weight_decay);

}  // namespace mfcast
