#include "mfcast/missingness.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "mfcast/errors.hpp"
#include "mfcast/rng.hpp"

namespace mfcast {

std::size_t MissingPattern::popcount() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::string MissingPattern::key() const {
    std::string s(bits.size(), '0');
    for (std::size_t j = 0; j < bits.size(); ++j)
        if (bits[j]) s[j] = '1';
    return s;
}

MissingPattern make_pattern(std::size_t p, std::span<const std::size_t> missing) {
    MissingPattern alpha(p);
    for (auto j : missing) {
        if (j >= p) throw IndexError(fmt::format("feature {} out of range ({} features)", j, p));
        alpha.set(j);
    }
    return alpha;
}

void check_support(const MissingPattern& alpha, std::span<const std::size_t> maskable) {
    std::vector<std::uint8_t> allowed(alpha.size(), 0);
    for (auto j : maskable)
        if (j < allowed.size()) allowed[j] = 1;
    for (std::size_t j = 0; j < alpha.size(); ++j)
        if (alpha.bits[j] && !allowed[j])
            throw DomainError(fmt::format("feature {} is marked missing but is not maskable", j));
}

void MissingnessConfig::validate() const {
    if (!(p01 >= 0.0 && p01 <= 1.0)) throw ValidationError("p01 must lie in [0,1]");
    if (!(p11 >= 0.0 && p11 <= 1.0)) throw ValidationError("p11 must lie in [0,1]");
}

Eigen::VectorXd apply_mask(const Eigen::Ref<const Eigen::VectorXd>& x, const MissingPattern& alpha,
                           std::span<const std::size_t> maskable) {
    if (static_cast<std::size_t>(x.size()) != alpha.size())
        throw SizeError(fmt::format("feature vector of length {} with pattern of length {}", x.size(), alpha.size()));
    check_support(alpha, maskable);
    Eigen::VectorXd out = x;
    for (auto j : maskable)
        if (alpha.missing(j)) out[static_cast<Eigen::Index>(j)] = 0.0;
    return out;
}

ObsMaskSeries simulate_markov(const MissingnessConfig& cfg, std::size_t periods, std::size_t plants) {
    cfg.validate();
    ObsMaskSeries out;
    out.mask.setZero(static_cast<Eigen::Index>(periods), static_cast<Eigen::Index>(plants));
    for (std::size_t s = 0; s < plants; ++s) {
        Rng rng(derive_seed(cfg.seed, {s}));
        std::uint8_t state = 0;
        for (std::size_t t = 1; t < periods; ++t) {
            const double u = uniform01(rng);
            state = state ? (u < cfg.p11 ? 1 : 0) : (u < cfg.p01 ? 1 : 0);
            out.mask(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s)) = state;
        }
    }
    return out;
}

std::vector<MissingPattern> expand_obs_mask(const ObsMaskSeries& mask, const Dataset& ds) {
    std::vector<MissingPattern> out;
    out.reserve(ds.rows());
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        const std::size_t t = ds.obs_periods[i];
        MissingPattern alpha(ds.features());
        for (auto j : ds.maskable) {
            const auto& d = ds.descriptors[j];
            if (t < d.lag || t - d.lag >= mask.periods() || d.plant >= mask.plants())
                throw IndexError(fmt::format("row {} (period {}) needs mask entry ({}, {}) outside {}x{}", i, t,
                                             static_cast<long long>(t) - static_cast<long long>(d.lag), d.plant,
                                             mask.periods(), mask.plants()));
            if (mask.mask(static_cast<Eigen::Index>(t - d.lag), static_cast<Eigen::Index>(d.plant))) alpha.set(j);
        }
        out.push_back(std::move(alpha));
    }
    return out;
}

Eigen::MatrixXd impute_persistence(const Eigen::MatrixXd& values, const ObsMaskSeries& mask) {
    if (values.rows() != mask.mask.rows() || values.cols() != mask.mask.cols())
        throw SizeError("mask shape differs from the series it annotates");
    Eigen::MatrixXd out = values;
    for (Eigen::Index s = 0; s < values.cols(); ++s) {
        double last = 0.0;
        for (Eigen::Index t = 0; t < values.rows(); ++t) {
            if (mask.mask(t, s))
                out(t, s) = last;
            else
                last = values(t, s);
        }
    }
    return out;
}

Eigen::VectorXd column_means(const Dataset& train) {
    if (train.rows() == 0) throw SizeError("cannot take column means of an empty dataset");
    return train.X.colwise().mean().transpose();
}

Eigen::VectorXd impute_mean(const Eigen::VectorXd& train_means, const Eigen::Ref<const Eigen::VectorXd>& x,
                            const MissingPattern& alpha) {
    if (x.size() != train_means.size() || static_cast<std::size_t>(x.size()) != alpha.size())
        throw SizeError("feature vector, pattern and means differ in length");
    Eigen::VectorXd out = x;
    for (std::size_t j = 0; j < alpha.size(); ++j)
        if (alpha.missing(j)) out[static_cast<Eigen::Index>(j)] = train_means[static_cast<Eigen::Index>(j)];
    return out;
}

void save_mask_csv(const ObsMaskSeries& mask, std::span<const std::int64_t> timestamps,
                   const std::filesystem::path& path) {
    if (timestamps.size() != mask.periods()) throw SizeError("one timestamp per mask row required");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    out << "period";
    for (std::size_t s = 0; s < mask.plants(); ++s) out << ",plant_" << s;
    out << '\n';
    for (std::size_t t = 0; t < mask.periods(); ++t) {
        out << timestamps[t];
        for (std::size_t s = 0; s < mask.plants(); ++s)
            out << ',' << static_cast<int>(mask.mask(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s)));
        out << '\n';
    }
}

ObsMaskSeries load_mask_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty mask file");
    const auto plants = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    std::vector<std::uint8_t> cells;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::istringstream row(line);
        std::string cell;
        std::getline(row, cell, ',');
        std::size_t count = 0;
        while (std::getline(row, cell, ',')) {
            if (!cell.empty() && cell.back() == '\r') cell.pop_back();
            if (cell != "0" && cell != "1")
                throw ParseError(fmt::format("line {}: mask cell '{}' is not 0/1", line_no, cell));
            cells.push_back(cell == "1" ? 1 : 0);
            ++count;
        }
        if (count != plants) throw ParseError(fmt::format("line {}: expected {} mask cells", line_no, plants));
    }
    ObsMaskSeries out;
    const auto T = static_cast<Eigen::Index>(plants ? cells.size() / plants : 0);
    out.mask.resize(T, static_cast<Eigen::Index>(plants));
    for (Eigen::Index t = 0; t < T; ++t)
        for (std::size_t s = 0; s < plants; ++s)
            out.mask(t, static_cast<Eigen::Index>(s)) = cells[static_cast<std::size_t>(t) * plants + s];
    return out;
}

}  // namespace mfcast
