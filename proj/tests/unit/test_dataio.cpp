#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "mfcast/dataio.hpp"
#include "mfcast/errors.hpp"

using namespace mfcast;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& contents) {
    const auto dir = fs::temp_directory_path() / "mfcast_unit";
    fs::create_directories(dir);
    const auto path = dir / name;
    std::ofstream(path) << contents;
    return path;
}

RawSeries series(const std::vector<std::vector<double>>& rows, std::optional<std::vector<double>> weather = {}) {
    RawSeries raw;
    raw.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t t = 0; t < rows.size(); ++t) {
        raw.timestamps.push_back(static_cast<std::int64_t>(t));
        for (std::size_t s = 0; s < rows[t].size(); ++s) raw.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s)) = rows[t][s];
    }
    raw.capacities.assign(rows.front().size(), 1.0);
    if (weather) raw.weather = Eigen::Map<const Eigen::VectorXd>(weather->data(), static_cast<Eigen::Index>(weather->size()));
    return raw;
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::VectorXd ca = a.array() - a.mean();
    const Eigen::VectorXd cb = b.array() - b.mean();
    return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
}

}  // namespace

TEST_CASE("load_csv reads a small file without weather") {
    const auto path = temp_file("small.csv", "period,plant_0,plant_1\n0,0.1,0.2\n1,0.3,0.4\n2,0.5,0.6\n");
    const auto raw = load_csv(path);
    CHECK(raw.values.rows() == 3);
    CHECK(raw.values.cols() == 2);
    CHECK_FALSE(raw.weather.has_value());
    CHECK(raw.values(2, 1) == doctest::Approx(0.6));
}

TEST_CASE("load_csv rejects bad input") {
    CHECK_THROWS_AS(load_csv(temp_file("range.csv", "period,plant_0\n0,0.1\n1,1.2\n")), DomainError);
    CHECK_THROWS_AS(load_csv(temp_file("order.csv", "period,plant_0\n0,0.1\n2,0.2\n1,0.3\n")), OrderError);
    CHECK_THROWS_AS(load_csv(temp_file("parse.csv", "period,plant_0\n0,0.1\n1,abc\n")), ParseError);
    try {
        load_csv(temp_file("parse2.csv", "period,plant_0\n0,0.1\n1,abc\n"));
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(load_csv(fs::temp_directory_path() / "mfcast_unit" / "absent.csv"), IoError);
}

TEST_CASE("save_csv round-trips through load_csv") {
    SynthConfig cfg;
    cfg.n_periods = 50;
    cfg.n_plants = 3;
    const auto raw = gen_synthetic(cfg);
    const auto path = fs::temp_directory_path() / "mfcast_unit" / "roundtrip.csv";
    fs::create_directories(path.parent_path());
    save_csv(raw, path);
    const auto back = load_csv(path);
    CHECK(back.values == raw.values);
    CHECK(back.timestamps == raw.timestamps);
    REQUIRE(back.weather.has_value());
    CHECK(*back.weather == *raw.weather);
}

TEST_CASE("gen_synthetic is deterministic and bounded") {
    SynthConfig cfg;
    cfg.n_periods = 500;
    const auto a = gen_synthetic(cfg);
    const auto b = gen_synthetic(cfg);
    CHECK(a.values == b.values);
    CHECK(*a.weather == *b.weather);
    CHECK(a.values.minCoeff() >= 0.0);
    CHECK(a.values.maxCoeff() <= 1.0);
    cfg.seed = 2;
    CHECK(gen_synthetic(cfg).values != a.values);
}

TEST_CASE("gen_synthetic degenerate recursion is constant") {
    SynthConfig cfg;
    cfg.n_periods = 100;
    cfg.noise_std = 0.0;
    cfg.ar_coefficient = 0.0;
    const auto raw = gen_synthetic(cfg);
    CHECK(raw.values.maxCoeff() == raw.values.minCoeff());
}

TEST_CASE("gen_synthetic validates its config") {
    SynthConfig cfg;
    cfg.n_plants = 0;
    CHECK_THROWS_AS(gen_synthetic(cfg), ValidationError);
    cfg = {};
    cfg.ar_coefficient = 1.0;
    CHECK_THROWS_AS(gen_synthetic(cfg), ValidationError);
    cfg = {};
    cfg.cross_plant_correlation = 1.5;
    CHECK_THROWS_AS(gen_synthetic(cfg), ValidationError);
}

TEST_CASE("gen_synthetic cross-plant correlation matches a direct simulation") {
    SynthConfig cfg;
    cfg.n_plants = 2;
    cfg.n_periods = 10000;
    cfg.cross_plant_correlation = 0.9;
    const auto raw = gen_synthetic(cfg);
    const double got = pearson(raw.values.col(0), raw.values.col(1));

    // Independent simulation of the documented recursion with its own generator.
    std::mt19937_64 rng(12345);
    std::normal_distribution<double> g(0.0, 1.0);
    const double a = cfg.ar_coefficient, c = cfg.cross_plant_correlation, sigma = cfg.noise_std;
    const int n = 100000;
    Eigen::VectorXd v0(n), v1(n);
    double z0 = 0, z1 = 0;
    for (int t = 0; t < n; ++t) {
        const double common = g(rng);
        const double e0 = std::sqrt(c) * common + std::sqrt(1 - c) * g(rng);
        const double e1 = std::sqrt(c) * common + std::sqrt(1 - c) * g(rng);
        z0 = t == 0 ? sigma * e0 : a * z0 + std::sqrt(1 - a * a) * sigma * e0;
        z1 = t == 0 ? sigma * e1 : a * z1 + std::sqrt(1 - a * a) * sigma * e1;
        v0[t] = 1.0 / (1.0 + std::exp(-z0));
        v1[t] = 1.0 / (1.0 + std::exp(-z1));
    }
    const double expected = pearson(v0, v1);
    CHECK(std::abs(got - expected) <= 0.1);
}

TEST_CASE("build_supervised hand-enumerated lag windows") {
    const auto raw = series({{0.1}, {0.2}, {0.3}, {0.4}});
    const auto ds = build_supervised(raw, 0, 1, 1);
    REQUIRE(ds.rows() == 2);
    REQUIRE(ds.features() == 3);
    CHECK(ds.X(0, 0) == doctest::Approx(0.2));
    CHECK(ds.X(0, 1) == doctest::Approx(0.1));
    CHECK(ds.X(0, 2) == 1.0);
    CHECK(ds.y[0] == doctest::Approx(0.3));
    CHECK(ds.X(1, 0) == doctest::Approx(0.3));
    CHECK(ds.X(1, 1) == doctest::Approx(0.2));
    CHECK(ds.y[1] == doctest::Approx(0.4));
    CHECK(ds.maskable == std::vector<std::size_t>{0, 1});
    CHECK(ds.bias_feature() == 2u);
}

TEST_CASE("build_supervised sizes with weather") {
    std::vector<std::vector<double>> rows(30, std::vector<double>(8, 0.5));
    const auto raw = series(rows, std::vector<double>(30, 0.3));
    const auto ds = build_supervised(raw, 3, 2, 1);
    CHECK(ds.features() == 26);
    CHECK(ds.maskable.size() == 24);
    CHECK(ds.rows() == 30 - 2 - 1);
    int weather = 0, bias = 0;
    for (const auto& d : ds.descriptors) {
        weather += d.kind == FeatureKind::weather;
        bias += d.kind == FeatureKind::bias;
    }
    CHECK(weather == 1);
    CHECK(bias == 1);
}

TEST_CASE("build_supervised with tau 0 has only lag-0 features") {
    const auto raw = series({{0.1, 0.5}, {0.2, 0.6}, {0.3, 0.7}});
    const auto ds = build_supervised(raw, 1, 0, 1);
    CHECK(ds.maskable.size() == 2);
    for (auto j : ds.maskable) CHECK(ds.descriptors[j].lag == 0u);
    CHECK(ds.y[0] == doctest::Approx(0.6));
}

TEST_CASE("build_supervised targets and errors") {
    const auto raw = series({{0.1}, {0.2}, {0.3}});
    CHECK_THROWS_AS(build_supervised(raw, 0, 2, 1), SizeError);
    CHECK_THROWS_AS(build_supervised(raw, 1, 0, 1), IndexError);
}

TEST_CASE("split_sequential floor arithmetic") {
    const auto s = split_indices(100, 0.5, 0.15);
    CHECK(s.train_begin == 0u);
    CHECK(s.train_count == 43u);
    CHECK(s.val_begin == 43u);
    CHECK(s.val_count == 7u);
    CHECK(s.test_begin == 50u);
    CHECK(s.test_count == 50u);
    CHECK_THROWS_AS(split_indices(2, 0.5, 0.5), SizeError);
    CHECK_THROWS_AS(split_indices(100, 0.0, 0.5), DomainError);
}

TEST_CASE("split_sequential segments concatenate to the dataset") {
    SynthConfig cfg;
    cfg.n_periods = 120;
    const auto ds = build_supervised(gen_synthetic(cfg), 0, 2, 1);
    const auto sp = split_sequential(ds, 0.5, 0.15);
    CHECK(sp.train.rows() + sp.val.rows() + sp.test.rows() == ds.rows());
    Eigen::MatrixXd joined(static_cast<Eigen::Index>(ds.rows()), static_cast<Eigen::Index>(ds.features()));
    joined << sp.train.X, sp.val.X, sp.test.X;
    CHECK(joined == ds.X);
}
