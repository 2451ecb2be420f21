#include "mfcast/serialize.hpp"

#include <fstream>

#include <fmt/format.h>

#include "mfcast/errors.hpp"

namespace mfcast {

namespace {

using Eigen::Index;

std::string kind_name(FeatureKind k) {
    switch (k) {
        case FeatureKind::measurement: return "measurement";
        case FeatureKind::weather: return "weather";
        case FeatureKind::bias: return "bias";
    }
    return "measurement";
}

FeatureKind kind_from(const std::string& s) {
    if (s == "measurement") return FeatureKind::measurement;
    if (s == "weather") return FeatureKind::weather;
    if (s == "bias") return FeatureKind::bias;
    throw ParseError(fmt::format("unknown feature kind '{}'", s));
}

json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

MissingPattern pattern_from_key(const std::string& key) {
    MissingPattern alpha(key.size());
    for (std::size_t j = 0; j < key.size(); ++j) {
        if (key[j] != '0' && key[j] != '1') throw ParseError(fmt::format("bad pattern string '{}'", key));
        alpha.set(j, key[j] == '1');
    }
    return alpha;
}

// Wraps nlohmann's exceptions so that callers only see library errors.
template <class F>
auto guarded(const char* what, F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw ParseError(fmt::format("malformed {} JSON: {}", what, e.what()));
    }
}

}  // namespace

json matrix_to_json(const Eigen::MatrixXd& m) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Index>();
    const auto cols = j.at("cols").get<Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size())
        throw ParseError(fmt::format("matrix of {}x{} with {} values", rows, cols, data.size()));
    Eigen::MatrixXd m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
    return m;
}

json to_json(const RawSeries& raw) {
    json j;
    j["timestamps"] = raw.timestamps;
    j["values"] = matrix_to_json(raw.values);
    j["capacities"] = raw.capacities;
    j["weather"] = raw.weather ? vector_to_json(*raw.weather) : json(nullptr);
    return j;
}

RawSeries raw_series_from_json(const json& j) {
    return guarded("RawSeries", [&] {
        RawSeries raw;
        raw.timestamps = j.at("timestamps").get<std::vector<std::int64_t>>();
        raw.values = matrix_from_json(j.at("values"));
        raw.capacities = j.at("capacities").get<std::vector<double>>();
        if (!j.at("weather").is_null()) raw.weather = vector_from_json(j.at("weather"));
        raw.validate();
        return raw;
    });
}

json to_json(const Dataset& ds) {
    json desc = json::array();
    for (const auto& d : ds.descriptors) {
        json e{{"kind", kind_name(d.kind)}};
        if (d.kind == FeatureKind::measurement) {
            e["plant"] = d.plant;
            e["lag"] = d.lag;
        }
        desc.push_back(e);
    }
    return {{"X", matrix_to_json(ds.X)},
            {"y", vector_to_json(ds.y)},
            {"descriptors", desc},
            {"P", ds.maskable},
            {"horizon", ds.horizon},
            {"max_lag", ds.max_lag},
            {"target_plant", ds.target_plant},
            {"obs_periods", ds.obs_periods}};
}

Dataset dataset_from_json(const json& j) {
    return guarded("Dataset", [&] {
        Dataset ds;
        ds.X = matrix_from_json(j.at("X"));
        ds.y = vector_from_json(j.at("y"));
        for (const auto& e : j.at("descriptors")) {
            FeatureDescriptor d;
            d.kind = kind_from(e.at("kind").get<std::string>());
            if (d.kind == FeatureKind::measurement) {
                d.plant = e.at("plant").get<std::size_t>();
                d.lag = e.at("lag").get<std::size_t>();
            }
            ds.descriptors.push_back(d);
        }
        ds.maskable = j.at("P").get<std::vector<std::size_t>>();
        ds.horizon = j.at("horizon").get<std::size_t>();
        ds.max_lag = j.at("max_lag").get<std::size_t>();
        ds.target_plant = j.value("target_plant", std::size_t{0});
        ds.obs_periods = j.at("obs_periods").get<std::vector<std::size_t>>();
        if (ds.y.size() != ds.X.rows() || ds.descriptors.size() != ds.features() || ds.obs_periods.size() != ds.rows())
            throw ParseError("Dataset JSON has inconsistent sizes");
        return ds;
    });
}

json to_json(const ModelParams& params) {
    json layers = json::array();
    for (const auto& layer : params.layers)
        layers.push_back({{"W", matrix_to_json(layer.W)}, {"b", vector_to_json(layer.b)}, {"D", matrix_to_json(layer.D)}});
    return {{"family", std::string(to_string(params.family))},
            {"adaptive", params.adaptive},
            {"inputs", params.inputs},
            {"maskable", params.maskable},
            {"bias_feature", params.bias_feature ? json(*params.bias_feature) : json(nullptr)},
            {"layers", layers},
            {"w", vector_to_json(params.w)},
            {"b", vector_to_json(params.b)},
            {"D", matrix_to_json(params.D)}};
}

ModelParams model_params_from_json(const json& j) {
    return guarded("ModelParams", [&] {
        ModelParams p;
        p.family = family_from_string(j.at("family").get<std::string>());
        p.adaptive = j.at("adaptive").get<bool>();
        p.inputs = j.at("inputs").get<std::size_t>();
        p.maskable = j.at("maskable").get<std::vector<std::size_t>>();
        if (!j.at("bias_feature").is_null()) p.bias_feature = j.at("bias_feature").get<std::size_t>();
        for (const auto& l : j.at("layers"))
            p.layers.push_back({matrix_from_json(l.at("W")), vector_from_json(l.at("b")), matrix_from_json(l.at("D"))});
        p.w = vector_from_json(j.at("w"));
        p.b = vector_from_json(j.at("b"));
        p.D = matrix_from_json(j.at("D"));
        p.validate();
        return p;
    });
}

json to_json(const Partition& part) {
    json nodes = json::array();
    for (const auto& s : part.subsets) {
        json fixed = json::object();
        for (const auto& [feature, value] : s.fixed) fixed[std::to_string(feature)] = value;
        json n{{"id", s.id},
               {"parent", s.parent ? json(*s.parent) : json(nullptr)},
               {"split_feature", s.split_feature ? json(*s.split_feature) : json(nullptr)},
               {"available_child", s.available_child ? json(*s.available_child) : json(nullptr)},
               {"missing_child", s.missing_child ? json(*s.missing_child) : json(nullptr)},
               {"fixed", fixed},
               {"missing_count", s.missing_count ? json(*s.missing_count) : json(nullptr)},
               {"alpha_opt", s.alpha_opt.key()},
               {"has_opt", s.has_opt},
               {"free", s.free},
               {"LB", s.lb},
               {"UB", s.ub},
               {"relgap", s.relgap}};
        if (s.is_leaf()) {
            n["theta_opt"] = to_json(s.theta_opt);
            n["theta_adv"] = to_json(s.theta_adv);
        }
        nodes.push_back(std::move(n));
    }
    json splits = json::array();
    for (const auto& r : part.splits)
        splits.push_back({{"parent", r.parent},
                          {"feature", r.feature},
                          {"available_child", r.available_child},
                          {"missing_child", r.missing_child}});
    return {{"kind", part.kind == PartitionKind::learned ? "learned" : "fixed"},
            {"features", part.uset.features},
            {"P", part.uset.maskable},
            {"gamma", part.uset.budget},
            {"Q", part.config.max_subsets},
            {"epsilon", part.config.max_gap},
            {"family", std::string(to_string(part.family))},
            {"adaptive", part.adaptive},
            {"stopped_by_gap", part.stopped_by_gap},
            {"leaves", part.leaves},
            {"splits", splits},
            {"nodes", nodes}};
}

Partition partition_from_json(const json& j) {
    return guarded("Partition", [&] {
        Partition part;
        const auto kind = j.at("kind").get<std::string>();
        if (kind != "learned" && kind != "fixed") throw ParseError(fmt::format("unknown partition kind '{}'", kind));
        part.kind = kind == "learned" ? PartitionKind::learned : PartitionKind::fixed;
        part.uset.features = j.at("features").get<std::size_t>();
        part.uset.maskable = j.at("P").get<std::vector<std::size_t>>();
        part.uset.budget = j.at("gamma").get<std::size_t>();
        part.config.max_subsets = j.at("Q").get<std::size_t>();
        part.config.max_gap = j.at("epsilon").get<double>();
        part.family = family_from_string(j.at("family").get<std::string>());
        part.adaptive = j.at("adaptive").get<bool>();
        part.stopped_by_gap = j.at("stopped_by_gap").get<bool>();
        part.leaves = j.at("leaves").get<std::vector<std::size_t>>();
        for (const auto& r : j.at("splits"))
            part.splits.push_back({r.at("parent").get<std::size_t>(), r.at("feature").get<std::size_t>(),
                                   r.at("available_child").get<std::size_t>(), r.at("missing_child").get<std::size_t>()});
        auto opt_index = [](const json& v) -> std::optional<std::size_t> {
            if (v.is_null()) return std::nullopt;
            return v.get<std::size_t>();
        };
        for (const auto& n : j.at("nodes")) {
            UncertaintySubset s;
            s.id = n.at("id").get<std::size_t>();
            if (s.id != part.subsets.size()) throw ParseError("partition nodes must be stored in id order");
            s.parent = opt_index(n.at("parent"));
            s.split_feature = opt_index(n.at("split_feature"));
            s.available_child = opt_index(n.at("available_child"));
            s.missing_child = opt_index(n.at("missing_child"));
            for (const auto& [feature, value] : n.at("fixed").items())
                s.fixed[static_cast<std::size_t>(std::stoul(feature))] = value.get<std::uint8_t>();
            s.missing_count = opt_index(n.at("missing_count"));
            s.alpha_opt = pattern_from_key(n.at("alpha_opt").get<std::string>());
            s.has_opt = n.at("has_opt").get<bool>();
            s.free = n.at("free").get<std::vector<std::size_t>>();
            s.lb = n.at("LB").get<double>();
            s.ub = n.at("UB").get<double>();
            s.relgap = n.at("relgap").get<double>();
            if (n.contains("theta_opt")) s.theta_opt = model_params_from_json(n.at("theta_opt"));
            if (n.contains("theta_adv")) s.theta_adv = model_params_from_json(n.at("theta_adv"));
            part.subsets.push_back(std::move(s));
        }
        for (auto id : part.leaves)
            if (id >= part.subsets.size() || !part.subsets[id].is_leaf())
                throw ParseError(fmt::format("leaf {} is not a leaf node", id));
        for (const auto& s : part.subsets)
            if (s.split_feature && (!s.available_child || !s.missing_child || *s.available_child >= part.subsets.size() ||
                                    *s.missing_child >= part.subsets.size()))
                throw ParseError(fmt::format("node {} has dangling children", s.id));
        return part;
    });
}

json to_json(const HorizonArtifacts& art) {
    json parts = json::object();
    for (const auto& [name, part] : art.partitions) parts[name] = to_json(part);
    return {{"horizon", art.horizon}, {"base", to_json(art.base)}, {"partitions", parts}};
}

HorizonArtifacts horizon_artifacts_from_json(const json& j) {
    return guarded("artifact", [&] {
        HorizonArtifacts art;
        art.horizon = j.at("horizon").get<std::size_t>();
        art.base = model_params_from_json(j.at("base"));
        for (const auto& [name, part] : j.at("partitions").items()) art.partitions.emplace(name, partition_from_json(part));
        return art;
    });
}

json to_json(const EvalResult& result) {
    json records = json::array();
    for (const auto& r : result.records)
        records.push_back({{"method", r.method},
                           {"h", r.horizon},
                           {"p01", r.p01},
                           {"p11", r.p11},
                           {"run", r.run},
                           {"nrmse", r.nrmse}});
    return {{"records", records}};
}

EvalResult eval_result_from_json(const json& j) {
    return guarded("results", [&] {
        EvalResult result;
        for (const auto& r : j.at("records")) {
            EvalRecord rec;
            rec.method = r.at("method").get<std::string>();
            rec.horizon = r.at("h").get<std::size_t>();
            rec.p01 = r.at("p01").get<double>();
            rec.p11 = r.at("p11").get<double>();
            rec.run = r.at("run").get<std::size_t>();
            rec.nrmse = r.at("nrmse").get<double>();
            result.records.push_back(std::move(rec));
        }
        return result;
    });
}

json to_json(const QSweepRow& row) { return {{"Q", row.q}, {"nrmse", row.nrmse}, {"max_relgap", row.max_relgap}}; }

QSweepRow qsweep_row_from_json(const json& j) {
    return guarded("Q sweep", [&] {
        return QSweepRow{j.at("Q").get<std::size_t>(), j.at("nrmse").get<double>(), j.at("max_relgap").get<double>()};
    });
}

void write_json(const json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    out << j.dump(2) << '\n';
    if (!out) throw IoError(fmt::format("write to {} failed", path.string()));
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

}  // namespace mfcast
