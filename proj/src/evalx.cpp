#include "mfcast/evalx.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>

#include <fmt/format.h>

#include "mfcast/errors.hpp"
#include "mfcast/parallel.hpp"
#include "mfcast/rng.hpp"

namespace mfcast {

namespace {

using Eigen::Index;

constexpr std::size_t kOracleFeatureLimit = 10;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Feature rows for `rows` recomputed from another version of the series
// (used to feed imputed values through the same lag layout).
Eigen::MatrixXd rebuild_rows(const Eigen::MatrixXd& values, const RawSeries& raw, const Dataset& rows) {
    Eigen::MatrixXd X(static_cast<Index>(rows.rows()), static_cast<Index>(rows.features()));
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        const std::size_t t = rows.obs_periods[i];
        for (std::size_t j = 0; j < rows.features(); ++j) {
            const auto& d = rows.descriptors[j];
            double v = 1.0;
            if (d.kind == FeatureKind::measurement)
                v = values(static_cast<Index>(t - d.lag), static_cast<Index>(d.plant));
            else if (d.kind == FeatureKind::weather)
                v = (*raw.weather)[static_cast<Index>(t + rows.horizon)];
            X(static_cast<Index>(i), static_cast<Index>(j)) = v;
        }
    }
    return X;
}

struct HorizonData {
    const HorizonArtifacts* art = nullptr;
    DataSplit split;
    Eigen::VectorXd means;
    std::map<std::string, ModelParams> oracle;  // pattern key -> retrained model
};

HorizonData prepare(const EvalContext& ctx, std::size_t horizon) {
    HorizonData hd;
    hd.art = &ctx.artifacts_for(horizon);
    const Dataset ds = build_supervised(ctx.raw, ctx.target_plant, ctx.max_lag, horizon);
    if (ds.features() != hd.art->base.inputs)
        throw ValidationError(fmt::format("artifact for h={} expects {} features, data has {}", horizon,
                                          hd.art->base.inputs, ds.features()));
    hd.split = split_sequential(ds, ctx.train_frac, ctx.val_frac);
    hd.means = column_means(hd.split.train);
    return hd;
}

std::vector<double> squared_errors(const Eigen::VectorXd& preds, const Eigen::VectorXd& y) {
    std::vector<double> out(static_cast<std::size_t>(y.size()));
    for (Index i = 0; i < y.size(); ++i) out[static_cast<std::size_t>(i)] = (preds[i] - y[i]) * (preds[i] - y[i]);
    return out;
}

Eigen::VectorXd predict_method(const std::string& method, const HorizonData& hd, const EvalContext& ctx,
                               const ObsMaskSeries& mask, const std::vector<MissingPattern>& patterns) {
    const Dataset& test = hd.split.test;
    const MissingPattern none(test.features());
    if (method == methods::imp_persistence) {
        const Eigen::MatrixXd filled = impute_persistence(ctx.raw.values, mask);
        return predict_batch(hd.art->base, rebuild_rows(filled, ctx.raw, test), none);
    }
    if (method == methods::imp_mean) {
        Eigen::MatrixXd X = test.X;
        for (std::size_t i = 0; i < test.rows(); ++i)
            X.row(static_cast<Index>(i)) = impute_mean(hd.means, test.X.row(static_cast<Index>(i)).transpose(), patterns[i]).transpose();
        return predict_batch(hd.art->base, X, none);
    }
    if (method == methods::retrain_oracle) {
        Eigen::VectorXd out(static_cast<Index>(test.rows()));
        for (std::size_t i = 0; i < test.rows(); ++i)
            out[static_cast<Index>(i)] = forward(hd.oracle.at(patterns[i].key()), test.X.row(static_cast<Index>(i)).transpose(), patterns[i]);
        return out;
    }
    const auto it = hd.art->partitions.find(method);
    if (it == hd.art->partitions.end())
        throw ConfigError(fmt::format("no trained artifact '{}' for horizon {}", method, test.horizon));
    return predict_deployed_rows(it->second, test.X, patterns);
}

struct Task {
    std::size_t horizon_index;
    double p01;
    double p11;
    std::size_t run;
};

ObsMaskSeries task_mask(const Task& task, std::uint64_t base_seed, const RawSeries& raw) {
    return simulate_markov({task.p01, task.p11, mask_seed(base_seed, task.p01, task.p11, task.run)}, raw.periods(),
                           raw.plants());
}

}  // namespace

double nrmse(std::span<const double> preds, std::span<const double> actuals) {
    if (preds.size() != actuals.size() || preds.empty())
        throw SizeError(fmt::format("nrmse needs equal non-empty series ({} vs {})", preds.size(), actuals.size()));
    double sq = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        sq += (preds[i] - actuals[i]) * (preds[i] - actuals[i]);
        total += actuals[i];
    }
    const double n = static_cast<double>(preds.size());
    const double mean = total / n;
    if (!(mean > 0.0)) throw DomainError("nrmse is undefined when the mean of the actuals is not positive");
    return 100.0 * std::sqrt(sq / n) / mean;
}

DmResult dm_test(std::span<const double> loss_a, std::span<const double> loss_b, std::optional<std::size_t> lag) {
    if (loss_a.size() != loss_b.size()) throw SizeError("loss series differ in length");
    const std::size_t n = loss_a.size();
    if (n < 30) throw SizeError(fmt::format("DM test needs at least 30 observations, got {}", n));
    const double nd = static_cast<double>(n);

    std::vector<double> d(n);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        d[i] = loss_a[i] - loss_b[i];
        mean += d[i];
    }
    mean /= nd;

    DmResult out;
    out.lag = lag ? *lag : static_cast<std::size_t>(std::floor(4.0 * std::pow(nd / 100.0, 2.0 / 9.0)));
    out.lag = std::min(out.lag, n - 1);
    auto autocov = [&](std::size_t k) {
        double s = 0.0;
        for (std::size_t i = k; i < n; ++i) s += (d[i] - mean) * (d[i - k] - mean);
        return s / nd;
    };
    double var = autocov(0);
    for (std::size_t k = 1; k <= out.lag; ++k)
        var += 2.0 * (1.0 - static_cast<double>(k) / static_cast<double>(out.lag + 1)) * autocov(k);

    const double scale = std::max(std::abs(mean), 1.0);
    if (!(var > 1e-300) || var <= 1e-24 * scale * scale) {
        out.degenerate = true;
        return out;
    }
    out.statistic = mean / std::sqrt(var / nd);
    out.p_value = std::erfc(std::abs(out.statistic) / std::sqrt(2.0));
    out.p_first_worse = 0.5 * std::erfc(out.statistic / std::sqrt(2.0));
    out.p_first_better = 0.5 * std::erfc(-out.statistic / std::sqrt(2.0));
    return out;
}

void GridSpec::validate() const {
    if (p01.empty() || p11.empty() || horizons.empty() || methods.empty())
        throw ValidationError("grid lists must be non-empty");
    if (runs < 1) throw ValidationError("grid needs at least one run");
    for (double p : p01)
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("p01 values must lie in [0,1]");
    for (double p : p11)
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("p11 values must lie in [0,1]");
}

const HorizonArtifacts& EvalContext::artifacts_for(std::size_t horizon) const {
    for (const auto& a : artifacts)
        if (a.horizon == horizon) return a;
    throw ConfigError(fmt::format("no trained artifacts for horizon {}", horizon));
}

std::vector<const EvalRecord*> EvalResult::select(const std::string& method, std::size_t horizon, double p01,
                                                  double p11) const {
    std::vector<const EvalRecord*> out;
    for (const auto& r : records)
        if (r.method == method && r.horizon == horizon && r.p01 == p01 && r.p11 == p11) out.push_back(&r);
    std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->run < b->run; });
    return out;
}

double EvalResult::mean_nrmse(const std::string& method, std::size_t horizon, double p01, double p11) const {
    const auto rows = select(method, horizon, p01, p11);
    if (rows.empty()) throw ConfigError(fmt::format("no results for {} at h={} ({}, {})", method, horizon, p01, p11));
    double s = 0.0;
    for (auto* r : rows) s += r->nrmse;
    return s / static_cast<double>(rows.size());
}

std::uint64_t mask_seed(std::uint64_t base_seed, double p01, double p11, std::size_t run) {
    return derive_seed(base_seed, {std::bit_cast<std::uint64_t>(p01), std::bit_cast<std::uint64_t>(p11), run});
}

EvalResult run_grid(const GridSpec& spec, const EvalContext& ctx, std::size_t jobs) {
    spec.validate();
    std::vector<HorizonData> horizons;
    for (auto h : spec.horizons) horizons.push_back(prepare(ctx, h));
    for (const auto& m : spec.methods) {
        if (m == methods::imp_persistence || m == methods::imp_mean || m == methods::retrain_oracle) continue;
        for (const auto& hd : horizons)
            if (!hd.art->partitions.contains(m))
                throw ConfigError(fmt::format("grid cell (method {}, h={}) has no trained artifact", m, hd.art->horizon));
    }

    std::vector<Task> tasks;
    for (std::size_t hi = 0; hi < horizons.size(); ++hi)
        for (double p01 : spec.p01)
            for (double p11 : spec.p11)
                for (std::size_t r = 0; r < spec.runs; ++r) tasks.push_back({hi, p01, p11, r});

    const bool oracle = std::find(spec.methods.begin(), spec.methods.end(), methods::retrain_oracle) != spec.methods.end();
    if (oracle) {
        for (auto& hd : horizons) {
            if (hd.split.test.maskable.size() > kOracleFeatureLimit)
                throw ConfigError(fmt::format("retrain-oracle supports at most {} maskable features, data has {}",
                                              kOracleFeatureLimit, hd.split.test.maskable.size()));
        }
        // Collect every realized pattern first so training can be shared and
        // the evaluation pass stays read-only.
        std::vector<std::set<MissingPattern>> needed(horizons.size());
        for (const auto& task : tasks) {
            const auto mask = task_mask(task, spec.base_seed, ctx.raw);
            for (auto& alpha : expand_obs_mask(mask, horizons[task.horizon_index].split.test))
                needed[task.horizon_index].insert(std::move(alpha));
        }
        for (std::size_t hi = 0; hi < horizons.size(); ++hi) {
            std::vector<MissingPattern> list(needed[hi].begin(), needed[hi].end());
            std::vector<ModelParams> models(list.size());
            auto& hd = horizons[hi];
            parallel_for(list.size(), jobs, [&](std::size_t i) {
                TrainConfig cfg = ctx.train_config;
                cfg.seed = derive_seed(ctx.train_config.seed, {fnv1a(list[i].key())});
                models[i] = train_nominal({hd.split.train, hd.split.val}, list[i], cfg, ctx.arch, ctx.family, false).params;
            });
            for (std::size_t i = 0; i < list.size(); ++i) hd.oracle.emplace(list[i].key(), std::move(models[i]));
        }
    }

    std::vector<std::vector<EvalRecord>> per_task(tasks.size());
    parallel_for(tasks.size(), jobs, [&](std::size_t ti) {
        const auto& task = tasks[ti];
        const auto& hd = horizons[task.horizon_index];
        const auto mask = task_mask(task, spec.base_seed, ctx.raw);
        const auto patterns = expand_obs_mask(mask, hd.split.test);
        const auto& y = hd.split.test.y;
        for (const auto& method : spec.methods) {
            const Eigen::VectorXd preds = predict_method(method, hd, ctx, mask, patterns);
            EvalRecord rec;
            rec.method = method;
            rec.horizon = hd.art->horizon;
            rec.p01 = task.p01;
            rec.p11 = task.p11;
            rec.run = task.run;
            rec.nrmse = nrmse({preds.data(), static_cast<std::size_t>(preds.size())},
                              {y.data(), static_cast<std::size_t>(y.size())});
            rec.squared_errors = squared_errors(preds, y);
            per_task[ti].push_back(std::move(rec));
        }
    });

    // Long format ordered by method, horizon, p01, p11, run.
    EvalResult result;
    for (std::size_t mi = 0; mi < spec.methods.size(); ++mi)
        for (auto& recs : per_task) result.records.push_back(std::move(recs[mi]));
    return result;
}

DmResult dm_across_runs(const EvalResult& result, const std::string& method_a, const std::string& method_b,
                        std::size_t horizon, double p01, double p11) {
    const auto a = result.select(method_a, horizon, p01, p11);
    const auto b = result.select(method_b, horizon, p01, p11);
    if (a.empty() || a.size() != b.size()) throw ConfigError("DM comparison needs matching runs for both methods");
    const std::size_t n = a.front()->squared_errors.size();
    std::vector<double> mean_a(n, 0.0);
    std::vector<double> mean_b(n, 0.0);
    for (std::size_t r = 0; r < a.size(); ++r) {
        if (a[r]->squared_errors.size() != n || b[r]->squared_errors.size() != n)
            throw SizeError("runs differ in test length");
        for (std::size_t i = 0; i < n; ++i) {
            mean_a[i] += a[r]->squared_errors[i] / static_cast<double>(a.size());
            mean_b[i] += b[r]->squared_errors[i] / static_cast<double>(a.size());
        }
    }
    return dm_test(mean_a, mean_b);
}

std::vector<QSweepRow> q_sweep(const std::map<std::size_t, Partition>& by_q, std::size_t horizon, double p01,
                               double p11, std::size_t runs, std::uint64_t base_seed, const EvalContext& ctx,
                               std::size_t jobs) {
    if (by_q.empty()) throw ConfigError("Q sweep needs at least one learned partition");
    if (runs < 1) throw ValidationError("Q sweep needs at least one run");
    const HorizonData hd = prepare(ctx, horizon);
    std::vector<std::size_t> qs;
    for (const auto& [q, part] : by_q) {
        if (part.kind != PartitionKind::learned) throw ConfigError(fmt::format("Q={} artifact is not a learned partition", q));
        qs.push_back(q);
    }
    std::vector<std::vector<double>> scores(runs, std::vector<double>(qs.size()));
    parallel_for(runs, jobs, [&](std::size_t r) {
        const auto mask = task_mask({0, p01, p11, r}, base_seed, ctx.raw);
        const auto patterns = expand_obs_mask(mask, hd.split.test);
        const auto& y = hd.split.test.y;
        for (std::size_t qi = 0; qi < qs.size(); ++qi) {
            const Eigen::VectorXd preds = predict_deployed_rows(by_q.at(qs[qi]), hd.split.test.X, patterns);
            scores[r][qi] = nrmse({preds.data(), static_cast<std::size_t>(preds.size())},
                                  {y.data(), static_cast<std::size_t>(y.size())});
        }
    });
    std::vector<QSweepRow> out;
    for (std::size_t qi = 0; qi < qs.size(); ++qi) {
        double s = 0.0;
        for (std::size_t r = 0; r < runs; ++r) s += scores[r][qi];
        out.push_back({qs[qi], s / static_cast<double>(runs), by_q.at(qs[qi]).max_leaf_relgap()});
    }
    return out;
}

void emit_report(const EvalResult& result, std::span<const QSweepRow> qsweep, const std::filesystem::path& out_dir) {
    if (result.records.empty()) throw ValidationError("no evaluation results to report");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError(fmt::format("cannot create {}: {}", out_dir.string(), ec.message()));

    auto open = [&out_dir](const char* name) {
        std::ofstream out(out_dir / name, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(fmt::format("cannot write {}", (out_dir / name).string()));
        return out;
    };

    {
        auto out = open("grid.csv");
        out << "method,h,p01,p11,run,nrmse\n";
        for (const auto& r : result.records)
            out << fmt::format("{},{},{},{},{},{}\n", r.method, r.horizon, r.p01, r.p11, r.run, r.nrmse);
    }
    {
        auto out = open("summary.csv");
        out << "method,h,p01,p11,runs,mean_nrmse,std_nrmse\n";
        std::vector<std::tuple<std::string, std::size_t, double, double>> cells;
        for (const auto& r : result.records) {
            auto key = std::make_tuple(r.method, r.horizon, r.p01, r.p11);
            if (std::find(cells.begin(), cells.end(), key) == cells.end()) cells.push_back(key);
        }
        for (const auto& [method, h, p01, p11] : cells) {
            const auto rows = result.select(method, h, p01, p11);
            double mean = 0.0;
            for (auto* r : rows) mean += r->nrmse;
            mean /= static_cast<double>(rows.size());
            double var = 0.0;
            for (auto* r : rows) var += (r->nrmse - mean) * (r->nrmse - mean);
            const double sd = rows.size() > 1 ? std::sqrt(var / static_cast<double>(rows.size() - 1)) : 0.0;
            out << fmt::format("{},{},{},{},{},{},{}\n", method, h, p01, p11, rows.size(), mean, sd);
        }
    }
    {
        auto out = open("qsweep.csv");
        out << "Q,nrmse,max_relgap\n";
        for (const auto& row : qsweep) out << fmt::format("{},{},{}\n", row.q, row.nrmse, row.max_relgap);
    }
}

}  // namespace mfcast
