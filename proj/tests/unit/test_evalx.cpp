#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "mfcast/errors.hpp"
#include "mfcast/evalx.hpp"

using namespace mfcast;
namespace fs = std::filesystem;

namespace {

TrainConfig small_train() {
    TrainConfig cfg;
    cfg.learning_rate = 0.003;
    cfg.batch_size = 256;
    cfg.max_iterations = 300;
    cfg.seed = 2;
    return cfg;
}

// Two plants, tau = 1: four maskable lag features, small enough for the oracle.
const EvalContext& shared_context() {
    static const EvalContext ctx = [] {
        EvalContext c;
        SynthConfig sc;
        sc.n_plants = 2;
        sc.n_periods = 2000;
        sc.seed = 3;
        c.raw = gen_synthetic(sc);
        c.max_lag = 1;
        c.train_config = small_train();
        const Dataset ds = build_supervised(c.raw, 0, 1, 1);
        const auto split = split_sequential(ds, c.train_frac, c.val_frac);
        const TrainData data{split.train, split.val};
        HorizonArtifacts art;
        art.horizon = 1;
        art.base = train_nominal(data, MissingPattern(ds.features()), c.train_config, {}, Family::lr, false).params;
        const auto uset = UncertaintySet::of(ds, 4);
        art.partitions["rf-learn"] = learn_partition(data, uset, {1, 0.0}, c.train_config, {}, Family::lr, false);
        art.partitions["arf-learn"] = learn_partition(data, uset, {4, 0.001}, c.train_config, {}, Family::lr, true);
        c.artifacts.push_back(std::move(art));
        return c;
    }();
    return ctx;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::ifstream in(path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("nrmse arithmetic") {
    const std::vector<double> y{1.0, 1.0};
    const std::vector<double> yhat{2.0, 0.0};
    CHECK(nrmse(y, y) == 0.0);
    CHECK(nrmse(yhat, y) == doctest::Approx(100.0));
    const std::vector<double> a{0.3, 0.5, 0.2}, b{0.25, 0.55, 0.1};
    std::vector<double> a3, b3;
    for (double v : a) a3.push_back(3.0 * v);
    for (double v : b) b3.push_back(3.0 * v);
    CHECK(nrmse(a3, b3) == doctest::Approx(nrmse(a, b)));
    const std::vector<double> zeros{0.0, 0.0};
    CHECK_THROWS_AS(nrmse(y, zeros), DomainError);
}

TEST_CASE("dm_test properties") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> a(500), b(500);
    for (std::size_t i = 0; i < 500; ++i) {
        b[i] = 1.0 + 0.1 * g(rng);
        a[i] = b[i] + 0.5 + 0.05 * g(rng);
    }
    const auto same = dm_test(b, b);
    CHECK(same.statistic == 0.0);
    CHECK(same.p_value == 1.0);
    const auto worse = dm_test(a, b);
    CHECK(worse.statistic > 5.0);
    CHECK(worse.p_value < 0.01);
    CHECK(worse.p_first_worse < 0.01);
    CHECK(dm_test(b, a).statistic == doctest::Approx(-worse.statistic));
    CHECK(worse.lag == static_cast<std::size_t>(std::floor(4.0 * std::pow(5.0, 2.0 / 9.0))));
    CHECK_THROWS_AS(dm_test(std::vector<double>(40), std::vector<double>(41)), SizeError);
}

TEST_CASE("mask seeds are shared across methods but differ by run") {
    CHECK(mask_seed(1, 0.2, 0.9, 0) == mask_seed(1, 0.2, 0.9, 0));
    CHECK(mask_seed(1, 0.2, 0.9, 0) != mask_seed(1, 0.2, 0.9, 1));
    CHECK(mask_seed(1, 0.2, 0.9, 0) != mask_seed(1, 0.1, 0.9, 0));
}

TEST_CASE("zero missingness reproduces the complete-data score") {
    const auto& ctx = shared_context();
    GridSpec spec{{0.0}, {0.5}, {1}, {methods::imp_persistence, methods::imp_mean, "arf-learn"}, 3, 4};
    const auto result = run_grid(spec, ctx, 1);
    const Dataset ds = build_supervised(ctx.raw, 0, 1, 1);
    const auto split = split_sequential(ds, ctx.train_frac, ctx.val_frac);
    const MissingPattern none(ds.features());
    const Eigen::VectorXd base = predict_batch(ctx.artifacts[0].base, split.test.X, none);
    const double clean = nrmse({base.data(), static_cast<std::size_t>(base.size())},
                               {split.test.y.data(), static_cast<std::size_t>(split.test.y.size())});
    for (const auto& r : result.records) {
        if (r.method == "arf-learn") {
            const Eigen::VectorXd p = predict_batch(deployed_params(ctx.artifacts[0].partitions.at("arf-learn"), none),
                                                    split.test.X, none);
            CHECK(r.nrmse == doctest::Approx(nrmse({p.data(), static_cast<std::size_t>(p.size())},
                                                   {split.test.y.data(), static_cast<std::size_t>(split.test.y.size())})));
        } else {
            CHECK(r.nrmse == doctest::Approx(clean));
        }
    }
}

TEST_CASE("run_grid is deterministic and independent of the job count") {
    const auto& ctx = shared_context();
    GridSpec spec{{0.1}, {0.8}, {1}, {methods::imp_persistence, "arf-learn"}, 4, 9};
    const auto a = run_grid(spec, ctx, 1);
    const auto b = run_grid(spec, ctx, 3);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].method == b.records[i].method);
        CHECK(a.records[i].run == b.records[i].run);
        CHECK(a.records[i].nrmse == b.records[i].nrmse);
    }
}

TEST_CASE("run_grid reports missing artifacts") {
    const auto& ctx = shared_context();
    GridSpec spec{{0.1}, {0.8}, {1}, {"arf-fixed"}, 1, 0};
    CHECK_THROWS_AS(run_grid(spec, ctx, 1), ConfigError);
    spec.methods = {"arf-learn"};
    spec.horizons = {2};
    CHECK_THROWS_AS(run_grid(spec, ctx, 1), ConfigError);
}

TEST_CASE("retraining oracle is at least as good as a single robust model") {
    const auto& ctx = shared_context();
    GridSpec spec{{0.2}, {0.9}, {1}, {methods::retrain_oracle, "rf-learn"}, 10, 1};
    const auto result = run_grid(spec, ctx, 1);
    const auto dm = dm_across_runs(result, "rf-learn", methods::retrain_oracle, 1, 0.2, 0.9);
    CHECK(dm.p_first_worse < 0.1);
}

TEST_CASE("reports are consistent and reproducible") {
    const auto& ctx = shared_context();
    GridSpec spec{{0.05}, {0.0}, {1}, {methods::imp_persistence, "arf-learn"}, 5, 2};
    const auto result = run_grid(spec, ctx, 1);
    std::map<std::size_t, Partition> by_q{{4, ctx.artifacts[0].partitions.at("arf-learn")}};
    const auto sweep = q_sweep(by_q, 1, 0.05, 0.0, 5, 2, ctx, 1);
    REQUIRE(sweep.size() == 1u);
    CHECK(sweep[0].nrmse == doctest::Approx(result.mean_nrmse("arf-learn", 1, 0.05, 0.0)));

    const auto dir = fs::temp_directory_path() / "mfcast_unit_report";
    fs::remove_all(dir);
    emit_report(result, sweep, dir);
    const auto grid = read_csv(dir / "grid.csv");
    CHECK(grid.size() == 1 + 2 * 5);
    const auto summary = read_csv(dir / "summary.csv");
    REQUIRE(summary.size() == 3u);
    for (std::size_t r = 1; r < summary.size(); ++r) {
        double s = 0.0;
        int n = 0;
        for (std::size_t g = 1; g < grid.size(); ++g)
            if (grid[g][0] == summary[r][0]) {
                s += std::stod(grid[g][5]);
                ++n;
            }
        CHECK(std::abs(s / n - std::stod(summary[r][5])) <= 1e-12);
    }
    const auto first = slurp(dir / "summary.csv");
    emit_report(result, sweep, dir);
    CHECK(slurp(dir / "summary.csv") == first);
}
