#include <doctest.h>

#include "../support/oracles.hpp"
#include "mfcast/errors.hpp"
#include "mfcast/models.hpp"

using namespace mfcast;

namespace {

ModelParams lr_two(bool adaptive) {
    auto p = init_params(FeatureLayout{2, {0, 1}, std::nullopt}, {}, Family::lr, adaptive, 0);
    p.w = Eigen::Vector2d(3.0, 1.0);
    return p;
}

double max_rel_error(const ModelParams& grad, const std::vector<double>& fd) {
    double worst = 0.0;
    std::size_t k = 0;
    for (auto block : grad.blocks())
        for (double g : block) worst = std::max(worst, oracle::relative_error(g, fd[k++]));
    return worst;
}

}  // namespace

TEST_CASE("LR forward worked examples") {
    const Eigen::Vector2d x(1.0, 1.0);
    CHECK(forward(lr_two(false), x, MissingPattern(2)) == doctest::Approx(4.0));

    auto p = lr_two(true);
    p.D.setZero();
    p.D(1, 0) = 2.0;  // correction applied to feature 1's weight when feature 0 is missing
    const std::vector<std::size_t> first{0};
    CHECK(forward(p, x, make_pattern(2, first)) == doctest::Approx(3.0));
}

TEST_CASE("init_params shapes and determinism") {
    const FeatureLayout layout{6, {0, 1, 2, 3, 4}, 5};
    const Architecture arch{{7, 4}};
    const auto a = init_params(layout, arch, Family::nn, true, 9);
    const auto b = init_params(layout, arch, Family::nn, true, 9);
    CHECK(a == b);
    CHECK_FALSE(a == init_params(layout, arch, Family::nn, true, 10));
    REQUIRE(a.layers.size() == 2);
    CHECK(a.layers[0].W.rows() == 7);
    CHECK(a.layers[0].W.cols() == 6);
    CHECK(a.layers[0].D.rows() == 6);
    CHECK(a.layers[0].D.cols() == 5);
    CHECK(a.layers[1].D.rows() == 7);
    CHECK(a.D.rows() == 4);
    for (const auto& L : a.layers) CHECK(L.D.isZero(0.0));
    CHECK(a.D.isZero(0.0));

    const auto plain = init_params(layout, arch, Family::nn, false, 9);
    for (const auto& L : plain.layers) CHECK(L.D.size() == 0);

    const auto lr = init_params(layout, arch, Family::lr, true, 9);
    CHECK(lr.layers.empty());
    CHECK(lr.w.size() == 6);
}

TEST_CASE("fresh adaptive init predicts like the plain init for any pattern") {
    const auto ds = oracle::random_dataset(10, 5, 3);
    const auto layout = FeatureLayout::of(ds);
    for (auto fam : {Family::lr, Family::nn}) {
        const auto ad = init_params(layout, {{8, 8}}, fam, true, 4);
        const auto pl = init_params(layout, {{8, 8}}, fam, false, 4);
        for (const auto& alpha : oracle::patterns_within(MissingPattern(6), ds.maskable, 5))
            CHECK(predict_batch(ad, ds.X, alpha) == predict_batch(pl, ds.X, alpha));
    }
}

TEST_CASE("forward agrees with the reference loss definition") {
    const auto ds = oracle::random_dataset(12, 4, 8);
    for (auto fam : {Family::lr, Family::nn}) {
        auto p = init_params(FeatureLayout::of(ds), {{6, 5}}, fam, true, 2);
        oracle::randomize(p, 77);
        const std::vector<std::size_t> miss{1, 3};
        const auto alpha = make_pattern(5, miss);
        CHECK(mse(p, ds.X, ds.y, alpha) == doctest::Approx(oracle::reference_loss(p, ds.X, ds.y, alpha, 0.0)).epsilon(1e-12));
    }
}

TEST_CASE("loss_and_grad small cases") {
    auto p = init_params(FeatureLayout{1, {0}, std::nullopt}, {}, Family::lr, false, 0);
    p.w[0] = 2.0;
    const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(1, 1);
    const Eigen::VectorXd y = Eigen::VectorXd::Zero(1);
    const auto lg = loss_and_grad(p, X, y, MissingPattern(1), 0.0);
    CHECK(lg.loss == doctest::Approx(4.0));
    CHECK(lg.grad.w[0] == doctest::Approx(4.0));

    const auto ds = oracle::random_dataset(8, 3, 1);
    auto q = init_params(FeatureLayout::of(ds), {}, Family::lr, false, 0);
    Eigen::VectorXd w = ds.X.colPivHouseholderQr().solve(ds.y);
    q.w = w;
    const Eigen::VectorXd exact = ds.X * w;
    const auto zero = loss_and_grad(q, ds.X, exact, MissingPattern(4), 0.0);
    CHECK(zero.loss == doctest::Approx(0.0));
    for (auto block : zero.grad.blocks())
        for (double g : block) CHECK(std::abs(g) < 1e-12);

    CHECK_THROWS_AS(loss_and_grad(q, ds.X.topRows(0), ds.y.head(0), MissingPattern(4), 0.0), SizeError);
}

TEST_CASE("gradients match finite differences") {
    for (std::uint64_t inst = 0; inst < 3; ++inst) {
        const auto ds = oracle::random_dataset(16, 5, 100 + inst);
        std::vector<std::size_t> miss{inst % 5, (inst + 2) % 5};
        const auto alpha = make_pattern(6, miss);
        for (bool adaptive : {false, true}) {
            auto lr = init_params(FeatureLayout::of(ds), {}, Family::lr, adaptive, inst);
            oracle::randomize(lr, inst + 7);
            const auto g = loss_and_grad(lr, ds.X, ds.y, alpha, 0.01);
            CHECK(max_rel_error(g.grad, oracle::fd_gradient(lr, ds.X, ds.y, alpha, 0.01)) < 1e-5);

            auto nn = init_params(FeatureLayout::of(ds), {{6, 5}}, Family::nn, adaptive, inst);
            oracle::randomize(nn, inst + 9);
            const auto gn = loss_and_grad(nn, ds.X, ds.y, alpha, 0.01);
            CHECK(gn.loss == doctest::Approx(oracle::reference_loss(nn, ds.X, ds.y, alpha, 0.01)).epsilon(1e-12));
            CHECK(max_rel_error(gn.grad, oracle::fd_gradient(nn, ds.X, ds.y, alpha, 0.01)) < 1e-4);
        }
    }
}

TEST_CASE("ModelParams validation and block bookkeeping") {
    auto p = init_params(FeatureLayout{4, {0, 1, 2}, 3}, {{3}}, Family::nn, true, 1);
    std::size_t total = 0;
    for (auto b : p.blocks()) total += b.size();
    CHECK(total == p.parameter_count());
    CHECK(p.zeros_like().parameter_count() == p.parameter_count());
    p.layers[0].D.resize(2, 2);
    CHECK_THROWS_AS(p.validate(), DomainError);
    CHECK_THROWS_AS(forward(lr_two(false), Eigen::Vector3d::Ones(), MissingPattern(3)), DomainError);
}
