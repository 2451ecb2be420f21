#include "mfcast/dataio.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "mfcast/errors.hpp"
#include "mfcast/rng.hpp"

namespace mfcast {

namespace {

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double parse_double(const std::string& cell, std::size_t line_no) {
    const std::string t = trim(cell);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        throw ParseError(fmt::format("line {}: '{}' is not a number", line_no, t));
    }
    if (used != t.size() || !std::isfinite(v))
        throw ParseError(fmt::format("line {}: '{}' is not a number", line_no, t));
    return v;
}

std::int64_t parse_period(const std::string& cell, std::size_t line_no) {
    const std::string t = trim(cell);
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(t, &used);
    } catch (const std::exception&) {
        throw ParseError(fmt::format("line {}: period '{}' is not an integer", line_no, t));
    }
    if (used != t.size())
        throw ParseError(fmt::format("line {}: period '{}' is not an integer", line_no, t));
    return v;
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

void RawSeries::validate() const {
    const std::size_t T = periods();
    if (timestamps.size() != T)
        throw SizeError(fmt::format("{} timestamps for {} periods", timestamps.size(), T));
    if (capacities.size() != plants())
        throw SizeError(fmt::format("{} capacities for {} plants", capacities.size(), plants()));
    for (double c : capacities)
        if (!(c > 0.0)) throw DomainError("plant capacity must be positive");
    for (std::size_t t = 1; t < T; ++t) {
        if (timestamps[t] <= timestamps[t - 1])
            throw OrderError(fmt::format("period {} does not increase (row {})", timestamps[t], t));
        if (t > 1 && timestamps[t] - timestamps[t - 1] != timestamps[1] - timestamps[0])
            throw OrderError(fmt::format("period step changes at row {}", t));
    }
    for (Eigen::Index t = 0; t < values.rows(); ++t)
        for (Eigen::Index s = 0; s < values.cols(); ++s) {
            const double v = values(t, s);
            if (!(v >= 0.0 && v <= 1.0))
                throw DomainError(fmt::format("value {} at row {}, plant {} outside [0,1]", v, t, s));
        }
    if (weather) {
        if (static_cast<std::size_t>(weather->size()) != T)
            throw SizeError("weather length differs from the number of periods");
        for (Eigen::Index t = 0; t < weather->size(); ++t)
            if (!((*weather)[t] >= 0.0 && (*weather)[t] <= 1.0))
                throw DomainError(fmt::format("weather {} at row {} outside [0,1]", (*weather)[t], t));
    }
}

std::optional<std::size_t> Dataset::bias_feature() const {
    for (std::size_t j = 0; j < descriptors.size(); ++j)
        if (descriptors[j].kind == FeatureKind::bias) return j;
    return std::nullopt;
}

Dataset Dataset::slice(std::size_t begin, std::size_t count) const {
    if (begin + count > rows()) throw IndexError("dataset slice out of range");
    Dataset out;
    out.X = X.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
    out.y = y.segment(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
    out.descriptors = descriptors;
    out.maskable = maskable;
    out.horizon = horizon;
    out.max_lag = max_lag;
    out.target_plant = target_plant;
    out.obs_periods.assign(obs_periods.begin() + static_cast<std::ptrdiff_t>(begin),
                           obs_periods.begin() + static_cast<std::ptrdiff_t>(begin + count));
    return out;
}

void SynthConfig::validate() const {
    if (n_plants < 1) throw ValidationError("n_plants must be at least 1");
    if (n_periods < 2) throw ValidationError("n_periods must be at least 2");
    if (!(ar_coefficient >= 0.0 && ar_coefficient < 1.0))
        throw ValidationError("ar_coefficient must lie in [0,1)");
    if (!(cross_plant_correlation >= 0.0 && cross_plant_correlation < 1.0))
        throw ValidationError("cross_plant_correlation must lie in [0,1)");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std))
        throw ValidationError("noise_std must be non-negative");
}

RawSeries load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open {}", path.string()));

    std::string line;
    if (!std::getline(in, line)) throw ParseError(fmt::format("{}: empty file", path.string()));
    const auto header = split_commas(line);
    if (header.size() < 2 || trim(header[0]) != "period")
        throw ParseError("line 1: header must start with 'period'");
    std::size_t n_plants = 0;
    bool has_weather = false;
    for (std::size_t c = 1; c < header.size(); ++c) {
        const std::string name = trim(header[c]);
        if (name == fmt::format("plant_{}", n_plants) && !has_weather) {
            ++n_plants;
        } else if (name == "weather" && c + 1 == header.size()) {
            has_weather = true;
        } else {
            throw ParseError(fmt::format("line 1: unexpected column '{}'", name));
        }
    }
    if (n_plants == 0) throw ParseError("line 1: no plant columns");

    std::vector<std::int64_t> periods;
    std::vector<double> cells;
    std::vector<double> weather;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto row = split_commas(line);
        if (row.size() != header.size())
            throw ParseError(fmt::format("line {}: expected {} fields, found {}", line_no,
                                         header.size(), row.size()));
        periods.push_back(parse_period(row[0], line_no));
        if (periods.size() > 1 && periods.back() <= periods[periods.size() - 2])
            throw OrderError(fmt::format("line {}: period {} is not after {}", line_no,
                                         periods.back(), periods[periods.size() - 2]));
        for (std::size_t s = 0; s < n_plants; ++s) {
            const double v = parse_double(row[1 + s], line_no);
            if (!(v >= 0.0 && v <= 1.0))
                throw DomainError(fmt::format("line {}: plant_{} value {} outside [0,1]", line_no, s, v));
            cells.push_back(v);
        }
        if (has_weather) {
            const double w = parse_double(row.back(), line_no);
            if (!(w >= 0.0 && w <= 1.0))
                throw DomainError(fmt::format("line {}: weather value {} outside [0,1]", line_no, w));
            weather.push_back(w);
        }
    }

    RawSeries raw;
    const auto T = static_cast<Eigen::Index>(periods.size());
    raw.timestamps = std::move(periods);
    raw.values.resize(T, static_cast<Eigen::Index>(n_plants));
    for (Eigen::Index t = 0; t < T; ++t)
        for (std::size_t s = 0; s < n_plants; ++s)
            raw.values(t, static_cast<Eigen::Index>(s)) = cells[static_cast<std::size_t>(t) * n_plants + s];
    raw.capacities.assign(n_plants, 1.0);
    if (has_weather) raw.weather = Eigen::Map<Eigen::VectorXd>(weather.data(), T);
    raw.validate();
    return raw;
}

void save_csv(const RawSeries& raw, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    out << "period";
    for (std::size_t s = 0; s < raw.plants(); ++s) out << ",plant_" << s;
    if (raw.weather) out << ",weather";
    out << '\n';
    for (std::size_t t = 0; t < raw.periods(); ++t) {
        std::string line = fmt::format("{}", raw.timestamps[t]);
        for (std::size_t s = 0; s < raw.plants(); ++s)
            line += fmt::format(",{:.17g}", raw.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s)));
        if (raw.weather) line += fmt::format(",{:.17g}", (*raw.weather)[static_cast<Eigen::Index>(t)]);
        out << line << '\n';
    }
    if (!out) throw IoError(fmt::format("write to {} failed", path.string()));
}

RawSeries gen_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t T = cfg.n_periods;
    const std::size_t S = cfg.n_plants;
    const double a = cfg.ar_coefficient;
    const double shock = std::sqrt(1.0 - a * a) * cfg.noise_std;
    const double w_common = std::sqrt(cfg.cross_plant_correlation);
    const double w_own = std::sqrt(1.0 - cfg.cross_plant_correlation);

    Rng common_rng(derive_seed(cfg.seed, {0}));
    Rng weather_rng(derive_seed(cfg.seed, {1}));
    std::vector<Rng> plant_rng;
    for (std::size_t s = 0; s < S; ++s) plant_rng.emplace_back(derive_seed(cfg.seed, {2, s}));

    Eigen::MatrixXd latent(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(S));
    for (std::size_t t = 0; t < T; ++t) {
        const double c = standard_normal(common_rng);
        for (std::size_t s = 0; s < S; ++s) {
            const double e = w_common * c + w_own * standard_normal(plant_rng[s]);
            const auto ti = static_cast<Eigen::Index>(t);
            const auto si = static_cast<Eigen::Index>(s);
            latent(ti, si) = t == 0 ? cfg.noise_std * e : a * latent(ti - 1, si) + shock * e;
        }
    }

    RawSeries raw;
    raw.timestamps.resize(T);
    for (std::size_t t = 0; t < T; ++t) raw.timestamps[t] = static_cast<std::int64_t>(t);
    raw.values = latent.unaryExpr([](double z) { return logistic(z); });
    raw.capacities.assign(S, 100.0);

    constexpr std::size_t window = 8;
    constexpr double weather_noise = 0.3;
    Eigen::VectorXd weather(static_cast<Eigen::Index>(T));
    double running = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        running += latent(static_cast<Eigen::Index>(t), 0);
        if (t >= window) running -= latent(static_cast<Eigen::Index>(t - window), 0);
        const double mean = running / static_cast<double>(std::min(t + 1, window));
        const double noise = cfg.noise_std > 0.0 ? weather_noise * standard_normal(weather_rng) : 0.0;
        weather[static_cast<Eigen::Index>(t)] = logistic(mean + noise);
    }
    raw.weather = std::move(weather);
    return raw;
}

Dataset build_supervised(const RawSeries& raw, std::size_t target_plant, std::size_t max_lag,
                         std::size_t horizon) {
    if (horizon < 1) throw DomainError("horizon must be at least 1");
    if (target_plant >= raw.plants())
        throw IndexError(fmt::format("target plant {} out of range ({} plants)", target_plant, raw.plants()));
    const std::size_t T = raw.periods();
    if (T <= max_lag + horizon)
        throw SizeError(fmt::format("series of {} periods too short for lag {} and horizon {}", T,
                                    max_lag, horizon));

    Dataset ds;
    ds.horizon = horizon;
    ds.max_lag = max_lag;
    ds.target_plant = target_plant;
    for (std::size_t s = 0; s < raw.plants(); ++s)
        for (std::size_t k = 0; k <= max_lag; ++k) {
            ds.maskable.push_back(ds.descriptors.size());
            ds.descriptors.push_back({FeatureKind::measurement, s, k});
        }
    if (raw.weather) ds.descriptors.push_back({FeatureKind::weather, 0, 0});
    ds.descriptors.push_back({FeatureKind::bias, 0, 0});

    const std::size_t n = T - max_lag - horizon;
    const std::size_t p = ds.descriptors.size();
    ds.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    ds.y.resize(static_cast<Eigen::Index>(n));
    ds.obs_periods.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t t = i + max_lag;
        const auto row = static_cast<Eigen::Index>(i);
        ds.obs_periods[i] = t;
        for (std::size_t j = 0; j < p; ++j) {
            const auto& d = ds.descriptors[j];
            double v = 1.0;
            if (d.kind == FeatureKind::measurement)
                v = raw.values(static_cast<Eigen::Index>(t - d.lag), static_cast<Eigen::Index>(d.plant));
            else if (d.kind == FeatureKind::weather)
                v = (*raw.weather)[static_cast<Eigen::Index>(t + horizon)];
            ds.X(row, static_cast<Eigen::Index>(j)) = v;
        }
        ds.y[row] = raw.values(static_cast<Eigen::Index>(t + horizon), static_cast<Eigen::Index>(target_plant));
    }
    return ds;
}

SplitIndices split_indices(std::size_t n, double train_frac, double val_frac_of_train) {
    if (!(train_frac > 0.0 && train_frac < 1.0) || !(val_frac_of_train > 0.0 && val_frac_of_train < 1.0))
        throw DomainError("split fractions must lie in (0,1)");
    const auto segment = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_frac));
    const auto val = static_cast<std::size_t>(std::floor(static_cast<double>(segment) * val_frac_of_train));
    SplitIndices idx;
    idx.train_begin = 0;
    idx.train_count = segment - val;
    idx.val_begin = idx.train_count;
    idx.val_count = val;
    idx.test_begin = segment;
    idx.test_count = n - segment;
    if (idx.train_count == 0 || idx.val_count == 0 || idx.test_count == 0)
        throw SizeError(fmt::format("split of {} rows leaves an empty segment (train {}, val {}, test {})",
                                    n, idx.train_count, idx.val_count, idx.test_count));
    return idx;
}

DataSplit split_sequential(const Dataset& ds, double train_frac, double val_frac_of_train) {
    const auto idx = split_indices(ds.rows(), train_frac, val_frac_of_train);
    return {ds.slice(idx.train_begin, idx.train_count), ds.slice(idx.val_begin, idx.val_count),
            ds.slice(idx.test_begin, idx.test_count), idx};
}

}  // namespace mfcast
