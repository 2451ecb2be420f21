#include <doctest.h>

#include <cmath>

#include "../support/oracles.hpp"
#include "mfcast/errors.hpp"
#include "mfcast/training.hpp"

using namespace mfcast;

namespace {

// y = 2x on a grid, with a constant column for the intercept.
Dataset line(std::size_t n, std::size_t offset) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 2);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const double x = static_cast<double>((i * 7 + offset) % 50) / 50.0;
        X(static_cast<Eigen::Index>(i), 0) = x;
        X(static_cast<Eigen::Index>(i), 1) = 1.0;
        y[static_cast<Eigen::Index>(i)] = 2.0 * x;
    }
    return oracle::make_dataset(X, y);
}

}  // namespace

TEST_CASE("adam_step with zero gradient only advances the counter") {
    auto p = init_params(FeatureLayout{3, {0, 1}, 2}, {}, Family::lr, true, 5);
    const auto before = p;
    auto state = OptimizerState::for_params(p);
    adam_step(p, p.zeros_like(), state, 1e-3);
    CHECK(p == before);
    CHECK(state.step == 1u);
}

TEST_CASE("adam first step moves by the learning rate against the gradient sign") {
    for (double g : {1e-3, -0.5, 3.0}) {
        auto p = init_params(FeatureLayout{1, {0}, std::nullopt}, {}, Family::lr, false, 1);
        const double w0 = p.w[0];
        auto grad = p.zeros_like();
        grad.w[0] = g;
        auto state = OptimizerState::for_params(p);
        adam_step(p, grad, state, 0.01);
        CHECK(std::abs((p.w[0] - w0) - (-0.01 * (g > 0 ? 1.0 : -1.0))) < 1e-6);
    }
}

TEST_CASE("adam is independent of the training seed") {
    auto a = init_params(FeatureLayout{2, {0}, 1}, {}, Family::lr, false, 3);
    auto b = a;
    auto g = a.zeros_like();
    g.w << 0.3, -0.2;
    auto sa = OptimizerState::for_params(a);
    auto sb = OptimizerState::for_params(b);
    adam_step(a, g, sa, 1e-3);
    adam_step(b, g, sb, 1e-3);
    CHECK(a == b);
}

TEST_CASE("train_nominal recovers a noiseless line") {
    const auto train = line(200, 0);
    const auto val = line(40, 3);
    TrainConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.batch_size = 32;
    cfg.max_iterations = 1000;
    cfg.patience = 50;
    const auto r = train_nominal({train, val}, MissingPattern(2), cfg, {}, Family::lr, false);
    CHECK(r.iterations <= 1000u);
    CHECK(std::abs(r.params.w[0] - 2.0) < 1e-2);
    CHECK(r.best_loss <= r.trace.front().val_loss);
}

TEST_CASE("train_nominal with K=1 stops after one iteration") {
    const auto ds = oracle::random_dataset(60, 3, 2);
    const auto train = ds.slice(0, 40);
    const auto val = ds.slice(40, 20);
    TrainConfig cfg;
    cfg.max_iterations = 1;
    cfg.patience = 1;
    const auto r = train_nominal({train, val}, MissingPattern(4), cfg, {}, Family::lr, false);
    CHECK(r.iterations == 1u);
    CHECK(r.trace.size() == 2u);
    CHECK(r.best_loss == std::min(r.trace[0].val_loss, r.trace[1].val_loss));
}

TEST_CASE("train_nominal early stopping contract") {
    const auto ds = oracle::random_dataset(300, 4, 6, 0.3);
    const auto train = ds.slice(0, 200);
    const auto val = ds.slice(200, 100);
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.batch_size = 16;
    cfg.max_iterations = 300;
    cfg.patience = 5;
    cfg.shuffle = true;
    cfg.seed = 4;
    const auto r = train_nominal({train, val}, MissingPattern(5), cfg, {{8}}, Family::nn, true);
    CHECK(r.iterations <= cfg.max_iterations);
    CHECK(r.iterations - r.best_iteration <= cfg.patience);
    double best = r.trace.front().val_loss;
    for (const auto& t : r.trace) best = std::min(best, t.val_loss);
    CHECK(r.best_loss == best);
    CHECK(mse(r.params, val.X, val.y, MissingPattern(5)) == doctest::Approx(r.best_loss).epsilon(1e-12));
}

TEST_CASE("train_nominal is deterministic and validates input") {
    const auto ds = oracle::random_dataset(80, 3, 9);
    const auto train = ds.slice(0, 60);
    const auto val = ds.slice(60, 20);
    TrainConfig cfg;
    cfg.max_iterations = 20;
    cfg.shuffle = true;
    const auto a = train_nominal({train, val}, MissingPattern(4), cfg, {{4}}, Family::nn, false);
    const auto b = train_nominal({train, val}, MissingPattern(4), cfg, {{4}}, Family::nn, false);
    CHECK(a.params == b.params);
    const auto empty = ds.slice(0, 0);
    CHECK_THROWS_AS(train_nominal({train, empty}, MissingPattern(4), cfg, {}, Family::lr, false), SizeError);
    cfg.patience = 0;
    CHECK_THROWS_AS(train_nominal({train, val}, MissingPattern(4), cfg, {}, Family::lr, false), ValidationError);
}
