#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "mfcast/cli.hpp"
#include "mfcast/errors.hpp"

namespace mfcast::cli {

namespace {

// Reads keys from one JSON object and rejects the ones nobody asked for.
class Section {
public:
    Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(fmt::format("{} must be a JSON object", where_));
    }

    bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    const json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    template <class T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        if (!has(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(fmt::format("{}.{} has the wrong type", where_, key));
        }
    }

    template <class T>
    void read(const char* key, std::optional<T>& out) {
        T v{};
        if (!has(key)) {
            seen_.insert(key);
            return;
        }
        read(key, v);
        out = v;
    }

    void finish() const {
        for (const auto& item : j_.items())
            if (!seen_.contains(item.key())) throw ConfigError(fmt::format("unknown key {}.{}", where_, item.key()));
    }

    const std::string& where() const { return where_; }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace

void RunConfig::validate() const {
    if (data.csv) {
        if (!std::filesystem::exists(*data.csv)) throw ConfigError(fmt::format("data file {} does not exist", data.csv->string()));
    } else {
        data.synth.validate();
    }
    if (horizons.empty()) throw ConfigError("at least one horizon is required");
    for (auto h : horizons)
        if (h < 1) throw ConfigError("horizons must be positive");
    if (max_lag < 1) throw ConfigError("tau must be at least 1");
    if (!(train_frac > 0.0 && train_frac < 1.0) || !(val_frac > 0.0 && val_frac < 1.0))
        throw ConfigError("train_frac and val_frac must lie in (0,1)");
    if (family == Family::nn) arch.validate();
    train.validate();
    if (partition.mode != "fixed" && partition.mode != "learned")
        throw ConfigError(fmt::format("partition.mode must be fixed or learned, got '{}'", partition.mode));
    PartitionConfig{partition.max_subsets, partition.max_gap}.validate();
    grid.validate();
    for (const auto& m : grid.methods)
        if (m != methods::imp_persistence && m != methods::imp_mean && m != methods::retrain_oracle &&
            !parse_partition_method(m))
            throw ConfigError(fmt::format("unknown method '{}'", m));
    for (auto h : grid.horizons)
        if (std::find(horizons.begin(), horizons.end(), h) == horizons.end())
            throw ConfigError(fmt::format("grid horizon {} is not trained", h));
    if (q_sweep) {
        if (q_sweep->q_values.empty()) throw ConfigError("q_sweep.Q must list at least one value");
        for (auto q : q_sweep->q_values)
            if (q < 1) throw ConfigError("q_sweep.Q values must be positive");
        if (q_sweep->horizon &&
            std::find(horizons.begin(), horizons.end(), *q_sweep->horizon) == horizons.end())
            throw ConfigError(fmt::format("q_sweep horizon {} is not trained", *q_sweep->horizon));
    }
}

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    bool wd_given = false;
    Section top(j, "config");

    if (top.has("data")) {
        Section data(top.raw("data"), "data");
        std::optional<std::string> csv;
        data.read("csv", csv);
        if (csv) {
            std::filesystem::path p = *csv;
            cfg.data.csv = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
        }
        if (data.has("synth")) {
            Section s(data.raw("synth"), "data.synth");
            auto& sc = cfg.data.synth;
            s.read("n_plants", sc.n_plants);
            s.read("n_periods", sc.n_periods);
            s.read("ar", sc.ar_coefficient);
            s.read("correlation", sc.cross_plant_correlation);
            s.read("noise_std", sc.noise_std);
            cfg.data.synth_seed_given = s.has("seed");
            s.read("seed", sc.seed);
            s.finish();
        }
        data.finish();
    }

    top.read("target_plant", cfg.target_plant);
    top.read("tau", cfg.max_lag);
    top.read("horizons", cfg.horizons);
    top.read("train_frac", cfg.train_frac);
    top.read("val_frac", cfg.val_frac);

    if (top.has("model")) {
        Section m(top.raw("model"), "model");
        std::string family = std::string(to_string(cfg.family));
        m.read("family", family);
        try {
            cfg.family = family_from_string(family);
        } catch (const Error&) {
            throw ConfigError(fmt::format("model.family must be LR or NN, got '{}'", family));
        }
        m.read("hidden", cfg.arch.hidden);
        m.read("adaptive", cfg.adaptive);
        m.finish();
    }

    if (top.has("train")) {
        Section t(top.raw("train"), "train");
        t.read("learning_rate", cfg.train.learning_rate);
        t.read("max_iterations", cfg.train.max_iterations);
        t.read("patience", cfg.train.patience);
        t.read("batch_size", cfg.train.batch_size);
        wd_given = t.has("weight_decay");
        t.read("weight_decay", cfg.train.weight_decay);
        t.read("shuffle", cfg.train.shuffle);
        t.finish();
    }
    if (!wd_given) cfg.train.weight_decay = cfg.family == Family::nn ? 1e-5 : 0.0;

    if (top.has("partition")) {
        Section p(top.raw("partition"), "partition");
        p.read("mode", cfg.partition.mode);
        p.read("Q", cfg.partition.max_subsets);
        p.read("epsilon", cfg.partition.max_gap);
        p.read("gamma", cfg.partition.budget);
        p.finish();
    }

    cfg.grid.horizons = cfg.horizons;
    cfg.grid.methods = {methods::imp_persistence, "arf-learn"};
    cfg.grid.p01 = {0.2};
    cfg.grid.p11 = {0.9};
    if (top.has("grid")) {
        Section g(top.raw("grid"), "grid");
        g.read("p01", cfg.grid.p01);
        g.read("p11", cfg.grid.p11);
        g.read("horizons", cfg.grid.horizons);
        g.read("methods", cfg.grid.methods);
        g.read("runs", cfg.grid.runs);
        g.finish();
    }

    if (top.has("q_sweep")) {
        Section q(top.raw("q_sweep"), "q_sweep");
        QSweepSettings qs;
        q.read("Q", qs.q_values);
        q.read("p01", qs.p01);
        q.read("p11", qs.p11);
        q.read("horizon", qs.horizon);
        q.finish();
        cfg.q_sweep = qs;
    }

    std::optional<std::string> out;
    top.read("output_dir", out);
    if (out) {
        const std::filesystem::path p(*out);
        cfg.output_dir = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
    top.read("seed", cfg.seed);
    top.finish();

    apply_overrides(cfg, {});
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    json j;
    try {
        j = read_json(path);
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    return parse_run_config(j, path.parent_path());
}

void apply_overrides(RunConfig& cfg, const Overrides& ov) {
    if (ov.seed) cfg.seed = *ov.seed;
    if (ov.out) cfg.output_dir = *ov.out;
    cfg.train.seed = cfg.seed;
    cfg.grid.base_seed = cfg.seed;
    if (!cfg.data.synth_seed_given) cfg.data.synth.seed = cfg.seed;
}

std::optional<PartitionMethod> parse_partition_method(const std::string& name) {
    if (name == "rf-fixed") return PartitionMethod{false, false};
    if (name == "rf-learn") return PartitionMethod{false, true};
    if (name == "arf-fixed") return PartitionMethod{true, false};
    if (name == "arf-learn") return PartitionMethod{true, true};
    return std::nullopt;
}

std::vector<std::string> partition_methods(const RunConfig& cfg) {
    std::vector<std::string> out;
    for (const auto& m : cfg.grid.methods)
        if (parse_partition_method(m) && std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    if (out.empty())
        out.push_back(fmt::format("{}-{}", cfg.adaptive ? "arf" : "rf", cfg.partition.mode == "fixed" ? "fixed" : "learn"));
    return out;
}

std::string artifact_name(std::size_t horizon) { return fmt::format("artifact_h{}.json", horizon); }

std::string sweep_name(std::size_t q) { return fmt::format("sweep-q{}", q); }

}  // namespace mfcast::cli
