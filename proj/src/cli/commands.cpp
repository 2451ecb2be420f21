#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <set>

#include <fmt/format.h>

#include "mfcast/cli.hpp"
#include "mfcast/errors.hpp"
#include "mfcast/parallel.hpp"
#include "mfcast/rng.hpp"

namespace mfcast::cli {

namespace {

namespace fs = std::filesystem;

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
}

std::size_t sweep_horizon(const RunConfig& cfg) {
    return cfg.q_sweep->horizon.value_or(cfg.horizons.front());
}

std::size_t budget_for(const RunConfig& cfg, const Dataset& ds) {
    const std::size_t gamma = cfg.partition.budget.value_or(ds.maskable.size());
    if (gamma > ds.maskable.size())
        throw ConfigError(fmt::format("partition.gamma={} exceeds the {} maskable features", gamma, ds.maskable.size()));
    return gamma;
}

// One training job of cmd_train. Results land in their own slot.
struct Job {
    std::size_t horizon_index = 0;
    std::string name;  // "" for the base model
    std::function<void()> run;
};

std::string describe(const std::exception& e) { return e.what(); }

}  // namespace

RawSeries load_data(const RunConfig& cfg) {
    RawSeries raw = cfg.data.csv ? load_csv(*cfg.data.csv) : gen_synthetic(cfg.data.synth);
    if (cfg.target_plant >= raw.plants())
        throw ConfigError(fmt::format("target_plant {} but the data has {} plants", cfg.target_plant, raw.plants()));
    return raw;
}

fs::path cmd_synth(const RunConfig& cfg) {
    cfg.data.synth.validate();
    ensure_dir(cfg.output_dir);
    const auto path = cfg.output_dir / "data.csv";
    save_csv(gen_synthetic(cfg.data.synth), path);
    return path;
}

std::vector<fs::path> cmd_train(const RunConfig& cfg, std::size_t jobs, std::FILE* log) {
    cfg.validate();
    const RawSeries raw = load_data(cfg);

    struct HorizonState {
        std::size_t horizon = 1;
        DataSplit split;
        UncertaintySet uset;
        TrainConfig tcfg;
        HorizonArtifacts art;
        std::map<std::string, Partition> trained;  // grown partitions, before prefixing
    };
    std::vector<HorizonState> states(cfg.horizons.size());
    for (std::size_t hi = 0; hi < cfg.horizons.size(); ++hi) {
        auto& st = states[hi];
        st.horizon = cfg.horizons[hi];
        const Dataset ds = build_supervised(raw, cfg.target_plant, cfg.max_lag, st.horizon);
        st.split = split_sequential(ds, cfg.train_frac, cfg.val_frac);
        st.uset = UncertaintySet::of(ds, budget_for(cfg, ds));
        st.tcfg = cfg.train;
        st.tcfg.seed = derive_seed(cfg.seed, {st.horizon});
        st.art.horizon = st.horizon;
    }

    // Learned partitions are grown once per adaptivity setting, to the
    // largest Q asked for, and cut back for every smaller Q.
    const auto names = partition_methods(cfg);
    std::vector<Job> job_list;
    for (std::size_t hi = 0; hi < states.size(); ++hi) {
        auto* st = &states[hi];
        job_list.push_back({hi, "", [st, &cfg] {
                                const MissingPattern none(st->uset.features);
                                st->art.base = train_nominal({st->split.train, st->split.val}, none, st->tcfg, cfg.arch,
                                                             cfg.family, false)
                                                   .params;
                            }});
        std::map<std::string, std::pair<bool, std::size_t>> grow;  // key -> (adaptive, Q)
        for (const auto& name : names) {
            const auto pm = *parse_partition_method(name);
            if (!pm.learned) {
                st->trained.emplace(name, Partition{});
                continue;
            }
            const std::string key = pm.adaptive ? "grown-arf" : "grown-rf";
            auto& g = grow.emplace(key, std::pair{pm.adaptive, std::size_t{1}}).first->second;
            g.second = std::max(g.second, cfg.partition.max_subsets);
        }
        if (cfg.q_sweep && sweep_horizon(cfg) == st->horizon) {
            const std::string key = cfg.adaptive ? "grown-arf" : "grown-rf";
            auto& g = grow.emplace(key, std::pair{cfg.adaptive, std::size_t{1}}).first->second;
            for (auto q : cfg.q_sweep->q_values) g.second = std::max(g.second, q);
        }
        for (const auto& [key, spec] : grow) st->trained.emplace(key, Partition{});
        for (auto& [key, part] : st->trained) {
            Partition* slot = &part;
            const auto it = grow.find(key);
            if (it != grow.end()) {
                const auto [adaptive, q] = it->second;
                job_list.push_back({hi, key, [st, slot, &cfg, adaptive = adaptive, q = q] {
                                        const PartitionConfig pcfg{q, cfg.partition.max_gap};
                                        *slot = learn_partition({st->split.train, st->split.val}, st->uset, pcfg,
                                                                st->tcfg, cfg.arch, cfg.family, adaptive);
                                    }});
            } else {
                const bool adaptive = parse_partition_method(key)->adaptive;
                job_list.push_back({hi, key, [st, slot, &cfg, adaptive] {
                                        *slot = train_fixed_partition({st->split.train, st->split.val}, st->uset,
                                                                      st->tcfg, cfg.arch, cfg.family, adaptive);
                                    }});
            }
        }
    }

    parallel_for(job_list.size(), jobs, [&](std::size_t i) {
        const auto& job = job_list[i];
        try {
            job.run();
        } catch (const Error& e) {
            const std::string what = job.name.empty() ? std::string("base model") : job.name;
            throw std::runtime_error(
                fmt::format("training {} for h={} failed: {}", what, states[job.horizon_index].horizon, describe(e)));
        }
    });

    ensure_dir(cfg.output_dir);
    std::vector<fs::path> written;
    for (auto& st : states) {
        for (const auto& name : names) {
            const auto pm = *parse_partition_method(name);
            if (pm.learned)
                st.art.partitions[name] =
                    prefix_partition(st.trained.at(pm.adaptive ? "grown-arf" : "grown-rf"), cfg.partition.max_subsets);
            else
                st.art.partitions[name] = st.trained.at(name);
        }
        if (cfg.q_sweep && sweep_horizon(cfg) == st.horizon) {
            const auto& grown = st.trained.at(cfg.adaptive ? "grown-arf" : "grown-rf");
            for (auto q : cfg.q_sweep->q_values) st.art.partitions[sweep_name(q)] = prefix_partition(grown, q);
        }
        if (log) {
            for (const auto& [name, part] : st.art.partitions) {
                fmt::print(log, "h={} {} ({} leaves, max RelGap {:.4g}%)\n", st.horizon, name, part.leaves.size(),
                           100.0 * part.max_leaf_relgap());
                fmt::print(log, "{}\n", format_bounds_table(part));
            }
        }
        const auto path = cfg.output_dir / artifact_name(st.horizon);
        write_json(to_json(st.art), path);
        written.push_back(path);
    }
    return written;
}

EvalResult cmd_evaluate(const RunConfig& cfg, std::size_t jobs) {
    cfg.validate();
    EvalContext ctx;
    ctx.raw = load_data(cfg);
    ctx.target_plant = cfg.target_plant;
    ctx.max_lag = cfg.max_lag;
    ctx.train_frac = cfg.train_frac;
    ctx.val_frac = cfg.val_frac;
    ctx.train_config = cfg.train;
    ctx.arch = cfg.arch;
    ctx.family = cfg.family;

    std::set<std::size_t> needed(cfg.grid.horizons.begin(), cfg.grid.horizons.end());
    if (cfg.q_sweep) needed.insert(sweep_horizon(cfg));
    for (auto h : needed) {
        const auto path = cfg.output_dir / artifact_name(h);
        if (!fs::exists(path))
            throw IoError(fmt::format("artifact {} not found; run `train` with this config first", path.string()));
        auto art = horizon_artifacts_from_json(read_json(path));
        const Dataset ds = build_supervised(ctx.raw, cfg.target_plant, cfg.max_lag, h);
        if (art.horizon != h) throw ValidationError(fmt::format("{} holds horizon {}", path.string(), art.horizon));
        if (art.base.inputs != ds.features() || art.base.maskable != ds.maskable)
            throw ValidationError(fmt::format("{} was trained on {} features, the config yields {}", path.string(),
                                              art.base.inputs, ds.features()));
        for (const auto& [name, part] : art.partitions)
            if (part.uset.features != ds.features() || part.uset.maskable != ds.maskable)
                throw ValidationError(fmt::format("partition {} in {} does not match the configured data", name,
                                                  path.string()));
        ctx.artifacts.push_back(std::move(art));
    }

    EvalResult result = run_grid(cfg.grid, ctx, jobs);

    std::vector<QSweepRow> sweep;
    if (cfg.q_sweep) {
        const std::size_t h = sweep_horizon(cfg);
        std::map<std::size_t, Partition> by_q;
        for (auto q : cfg.q_sweep->q_values) {
            const auto& parts = ctx.artifacts_for(h).partitions;
            const auto it = parts.find(sweep_name(q));
            if (it == parts.end()) throw ValidationError(fmt::format("artifact for h={} has no Q={} partition", h, q));
            by_q.emplace(q, it->second);
        }
        sweep = q_sweep(by_q, h, cfg.q_sweep->p01, cfg.q_sweep->p11, cfg.grid.runs, cfg.grid.base_seed, ctx, jobs);
    }

    ensure_dir(cfg.output_dir);
    write_json(to_json(result), cfg.output_dir / "results.json");
    json sj = json::array();
    for (const auto& row : sweep) sj.push_back(to_json(row));
    write_json(sj, cfg.output_dir / "qsweep.json");

    std::ofstream dm(cfg.output_dir / "dm.csv");
    if (!dm) throw IoError("cannot write dm.csv");
    dm << "method,baseline,h,p01,p11,dm_stat,p_value,p_method_better\n";
    for (const auto& m : cfg.grid.methods) {
        if (!parse_partition_method(m)) continue;
        for (const auto& base : cfg.grid.methods) {
            if (base != methods::imp_persistence && base != methods::imp_mean) continue;
            for (auto h : cfg.grid.horizons)
                for (double p01 : cfg.grid.p01)
                    for (double p11 : cfg.grid.p11) {
                        // Baseline first: a positive statistic means the baseline loses more.
                        const auto r = dm_across_runs(result, base, m, h, p01, p11);
                        dm << fmt::format("{},{},{},{},{},{},{},{}\n", m, base, h, p01, p11, r.statistic, r.p_value,
                                          r.p_first_worse);
                    }
        }
    }
    if (!dm) throw IoError("write to dm.csv failed");

    emit_report(result, sweep, cfg.output_dir);
    return result;
}

void cmd_report(const RunConfig& cfg) {
    const auto results = cfg.output_dir / "results.json";
    if (!fs::exists(results)) throw IoError(fmt::format("{} not found; run `evaluate` first", results.string()));
    const EvalResult result = eval_result_from_json(read_json(results));
    std::vector<QSweepRow> sweep;
    const auto qpath = cfg.output_dir / "qsweep.json";
    if (fs::exists(qpath))
        for (const auto& row : read_json(qpath)) sweep.push_back(qsweep_row_from_json(row));
    emit_report(result, sweep, cfg.output_dir);
}

}  // namespace mfcast::cli
