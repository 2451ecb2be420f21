#include "mfcast/models.hpp"

#include <cmath>

#include <fmt/format.h>

#include "mfcast/errors.hpp"
#include "mfcast/rng.hpp"

namespace mfcast {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Index idx(std::size_t i) { return static_cast<Index>(i); }

void fill_uniform(std::span<double> block, double scale, Rng& rng) {
    for (auto& v : block) v = scale * (2.0 * uniform01(rng) - 1.0);
}

// Effective weights for one pattern; masked input columns are zeroed so that
// X * W0' equals x(alpha) * W0'.
struct Effective {
    std::vector<MatrixXd> W;
    VectorXd w;
    std::vector<std::uint8_t> masked;  // per input column
};

Effective effective_weights(const ModelParams& params, const MissingPattern& alpha) {
    Effective eff;
    eff.masked.assign(params.inputs, 0);
    for (auto j : params.maskable)
        if (alpha.missing(j)) eff.masked[j] = 1;

    const VectorXd a = restrict_pattern(params, alpha);
    const bool shift = params.adaptive && a.any();
    if (params.family == Family::lr) {
        eff.w = params.w;
        if (shift) eff.w.noalias() += params.D * a;
        for (std::size_t j = 0; j < params.inputs; ++j)
            if (eff.masked[j]) eff.w[idx(j)] = 0.0;
        return eff;
    }
    eff.W.reserve(params.layers.size());
    for (const auto& layer : params.layers) {
        MatrixXd W = layer.W;
        if (shift) W.rowwise() += (layer.D * a).transpose();
        eff.W.push_back(std::move(W));
    }
    for (std::size_t j = 0; j < params.inputs; ++j)
        if (eff.masked[j]) eff.W.front().col(idx(j)).setZero();
    eff.w = params.w;
    if (shift) eff.w.noalias() += params.D * a;
    return eff;
}

VectorXd predict_effective(const ModelParams& params, const Effective& eff,
                           const Eigen::Ref<const MatrixXd>& X) {
    if (params.family == Family::lr) return X * eff.w;
    MatrixXd H = X * eff.W[0].transpose();
    H.rowwise() += params.layers[0].b.transpose();
    for (std::size_t m = 1; m < params.layers.size(); ++m) {
        MatrixXd Z = H * eff.W[m].transpose();
        Z.rowwise() += params.layers[m].b.transpose();
        H = Z.cwiseMax(0.0);
    }
    VectorXd f = H * eff.w;
    f.array() += params.b[0];
    return f;
}

void check_inputs(const ModelParams& params, Index cols, const MissingPattern& alpha) {
    if (static_cast<std::size_t>(cols) != params.inputs)
        throw DomainError(fmt::format("input has {} features, model expects {}", cols, params.inputs));
    if (alpha.size() != params.inputs)
        throw DomainError(fmt::format("pattern has {} entries, model expects {}", alpha.size(), params.inputs));
    check_support(alpha, params.maskable);
}

}  // namespace

std::string_view to_string(Family f) { return f == Family::lr ? "LR" : "NN"; }

Family family_from_string(std::string_view s) {
    if (s == "LR" || s == "lr") return Family::lr;
    if (s == "NN" || s == "nn") return Family::nn;
    throw ValidationError(fmt::format("unknown model family '{}'", s));
}

FeatureLayout FeatureLayout::of(const Dataset& ds) {
    return {ds.features(), ds.maskable, ds.bias_feature()};
}

void Architecture::validate() const {
    for (auto width : hidden)
        if (width == 0) throw ValidationError("hidden layer widths must be positive");
}

std::vector<std::span<double>> ModelParams::blocks() {
    std::vector<std::span<double>> out;
    auto add = [&out](auto& m) {
        if (m.size() > 0) out.emplace_back(m.data(), static_cast<std::size_t>(m.size()));
    };
    for (auto& layer : layers) {
        add(layer.W);
        add(layer.b);
        add(layer.D);
    }
    add(w);
    add(b);
    add(D);
    return out;
}

std::vector<std::span<const double>> ModelParams::blocks() const {
    std::vector<std::span<const double>> out;
    for (auto s : const_cast<ModelParams*>(this)->blocks()) out.emplace_back(s.data(), s.size());
    return out;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (auto s : blocks()) n += s.size();
    return n;
}

ModelParams ModelParams::zeros_like() const {
    ModelParams z = *this;
    for (auto s : z.blocks()) std::fill(s.begin(), s.end(), 0.0);
    return z;
}

void ModelParams::validate() const {
    const auto P = idx(maskable.size());
    auto require = [](bool ok, const char* what) {
        if (!ok) throw DomainError(fmt::format("inconsistent model parameters: {}", what));
    };
    for (auto j : maskable) require(j < inputs, "maskable index out of range");
    if (bias_feature) require(*bias_feature < inputs, "bias feature out of range");
    if (family == Family::lr) {
        require(layers.empty(), "LR model with hidden layers");
        require(w.size() == idx(inputs), "LR weight length");
        require(b.size() == 0, "LR model with explicit bias");
        if (adaptive)
            require(D.rows() == idx(inputs) && D.cols() == P, "LR correction shape");
        else
            require(D.size() == 0, "non-adaptive model with correction block");
        return;
    }
    require(!layers.empty(), "NN model without hidden layers");
    Index in = idx(inputs);
    for (const auto& layer : layers) {
        require(layer.W.cols() == in && layer.W.rows() > 0, "hidden weight shape");
        require(layer.b.size() == layer.W.rows(), "hidden bias length");
        if (adaptive)
            require(layer.D.rows() == in && layer.D.cols() == P, "hidden correction shape");
        else
            require(layer.D.size() == 0, "non-adaptive model with correction block");
        in = layer.W.rows();
    }
    require(w.size() == in, "output weight length");
    require(b.size() == 1, "output bias length");
    if (adaptive)
        require(D.rows() == in && D.cols() == P, "output correction shape");
    else
        require(D.size() == 0, "non-adaptive model with correction block");
}

bool ModelParams::operator==(const ModelParams& other) const {
    if (family != other.family || adaptive != other.adaptive || inputs != other.inputs ||
        maskable != other.maskable || bias_feature != other.bias_feature || layers.size() != other.layers.size())
        return false;
    auto same = [](const auto& x, const auto& y) {
        return x.rows() == y.rows() && x.cols() == y.cols() && (x.size() == 0 || x == y);
    };
    for (std::size_t m = 0; m < layers.size(); ++m)
        if (!same(layers[m].W, other.layers[m].W) || !same(layers[m].b, other.layers[m].b) ||
            !same(layers[m].D, other.layers[m].D))
            return false;
    return same(w, other.w) && same(b, other.b) && same(D, other.D);
}

ModelParams init_params(const FeatureLayout& layout, const Architecture& arch, Family family, bool adaptive,
                        std::uint64_t seed) {
    arch.validate();
    if (layout.inputs == 0) throw DomainError("model needs at least one input feature");
    if (family == Family::nn && arch.hidden.empty()) throw ValidationError("NN family needs hidden layers");

    ModelParams params;
    params.family = family;
    params.adaptive = adaptive;
    params.inputs = layout.inputs;
    params.maskable = layout.maskable;
    params.bias_feature = layout.bias_feature;
    const auto P = idx(layout.maskable.size());

    // Scaled uniform: U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    Rng rng(derive_seed(seed, {0x5eed}));
    Index in = idx(layout.inputs);
    if (family == Family::nn) {
        for (auto width : arch.hidden) {
            Layer layer;
            layer.W.resize(idx(width), in);
            layer.b.resize(idx(width));
            const double scale = 1.0 / std::sqrt(static_cast<double>(in));
            fill_uniform({layer.W.data(), static_cast<std::size_t>(layer.W.size())}, scale, rng);
            fill_uniform({layer.b.data(), static_cast<std::size_t>(layer.b.size())}, scale, rng);
            if (adaptive) layer.D.setZero(in, P);
            params.layers.push_back(std::move(layer));
            in = idx(width);
        }
        params.b.resize(1);
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    params.w.resize(in);
    fill_uniform({params.w.data(), static_cast<std::size_t>(params.w.size())}, scale, rng);
    if (family == Family::nn) fill_uniform({params.b.data(), 1}, scale, rng);
    if (adaptive) params.D.setZero(in, P);
    return params;
}

VectorXd restrict_pattern(const ModelParams& params, const MissingPattern& alpha) {
    VectorXd a(idx(params.maskable.size()));
    for (std::size_t k = 0; k < params.maskable.size(); ++k)
        a[idx(k)] = alpha.missing(params.maskable[k]) ? 1.0 : 0.0;
    return a;
}

double forward(const ModelParams& params, const Eigen::Ref<const VectorXd>& x, const MissingPattern& alpha) {
    check_inputs(params, x.size(), alpha);
    const auto eff = effective_weights(params, alpha);
    return predict_effective(params, eff, x.transpose())[0];
}

VectorXd predict_batch(const ModelParams& params, const Eigen::Ref<const MatrixXd>& X, const MissingPattern& alpha) {
    check_inputs(params, X.cols(), alpha);
    return predict_effective(params, effective_weights(params, alpha), X);
}

VectorXd predict_rows(const ModelParams& params, const Eigen::Ref<const MatrixXd>& X,
                      std::span<const MissingPattern> alphas) {
    if (alphas.size() != static_cast<std::size_t>(X.rows()))
        throw SizeError(fmt::format("{} patterns for {} rows", alphas.size(), X.rows()));
    VectorXd out(X.rows());
    // Consecutive rows often share a pattern; reuse the effective weights.
    std::optional<Effective> eff;
    const MissingPattern* last = nullptr;
    for (Index i = 0; i < X.rows(); ++i) {
        const auto& alpha = alphas[static_cast<std::size_t>(i)];
        if (!last || !(*last == alpha)) {
            check_inputs(params, X.cols(), alpha);
            eff = effective_weights(params, alpha);
            last = &alpha;
        }
        out[i] = predict_effective(params, *eff, X.row(i))[0];
    }
    return out;
}

double mse(const ModelParams& params, const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y,
           const MissingPattern& alpha) {
    if (X.rows() == 0) throw SizeError("loss over an empty batch");
    return (predict_batch(params, X, alpha) - y).squaredNorm() / static_cast<double>(X.rows());
}

double mse_rows(const ModelParams& params, const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y,
                std::span<const MissingPattern> alphas) {
    if (X.rows() == 0) throw SizeError("loss over an empty batch");
    return (predict_rows(params, X, alphas) - y).squaredNorm() / static_cast<double>(X.rows());
}

double decay_norm(const ModelParams& params) {
    double total = 0.0;
    for (const auto& layer : params.layers) total += layer.W.squaredNorm() + layer.D.squaredNorm();
    total += params.w.squaredNorm() + params.D.squaredNorm();
    if (params.family == Family::lr && params.bias_feature) total -= params.w[idx(*params.bias_feature)] * params.w[idx(*params.bias_feature)];
    return total;
}

LossGrad loss_and_grad(const ModelParams& params, const Eigen::Ref<const MatrixXd>& X,
                       const Eigen::Ref<const VectorXd>& y, const MissingPattern& alpha, double weight_decay) {
    if (X.rows() == 0) throw SizeError("loss over an empty batch");
    if (y.size() != X.rows()) throw SizeError("targets and rows differ in count");
    check_inputs(params, X.cols(), alpha);

    const auto eff = effective_weights(params, alpha);
    const VectorXd a = restrict_pattern(params, alpha);
    const double n = static_cast<double>(X.rows());
    LossGrad out;
    out.grad = params.zeros_like();
    auto& g = out.grad;

    if (params.family == Family::lr) {
        const VectorXd resid = X * eff.w - y;
        out.loss = resid.squaredNorm() / n;
        VectorXd dw = (2.0 / n) * (X.transpose() * resid);
        for (std::size_t j = 0; j < params.inputs; ++j)
            if (eff.masked[j]) dw[idx(j)] = 0.0;
        g.w = dw;
        if (params.adaptive) g.D.noalias() = dw * a.transpose();
    } else {
        const std::size_t M = params.layers.size();
        // acts[m] is the input to layer m (acts[0] = X); pre[m] the layer's
        // pre-activation. Layer 0 is linear, later layers use relu.
        std::vector<MatrixXd> pre(M);
        std::vector<MatrixXd> acts(M + 1);
        pre[0] = X * eff.W[0].transpose();
        pre[0].rowwise() += params.layers[0].b.transpose();
        acts[1] = pre[0];
        for (std::size_t m = 1; m < M; ++m) {
            pre[m] = acts[m] * eff.W[m].transpose();
            pre[m].rowwise() += params.layers[m].b.transpose();
            acts[m + 1] = pre[m].cwiseMax(0.0);
        }
        VectorXd f = acts[M] * eff.w;
        f.array() += params.b[0];
        const VectorXd resid = f - y;
        out.loss = resid.squaredNorm() / n;

        const VectorXd r = (2.0 / n) * resid;
        g.w = acts[M].transpose() * r;
        g.b[0] = r.sum();
        if (params.adaptive) g.D.noalias() = g.w * a.transpose();
        MatrixXd delta = r * eff.w.transpose();  // d loss / d acts[M]
        for (std::size_t m = M; m-- > 0;) {
            if (m > 0) delta = delta.cwiseProduct((pre[m].array() > 0.0).cast<double>().matrix());
            auto& gl = g.layers[m];
            if (m == 0) {
                gl.W.noalias() = delta.transpose() * X;
                for (std::size_t j = 0; j < params.inputs; ++j)
                    if (eff.masked[j]) gl.W.col(idx(j)).setZero();
            } else {
                gl.W.noalias() = delta.transpose() * acts[m];
            }
            gl.b = delta.colwise().sum().transpose();
            if (params.adaptive) gl.D.noalias() = gl.W.colwise().sum().transpose() * a.transpose();
            if (m > 0) delta = delta * eff.W[m];
        }
    }

    if (weight_decay != 0.0) {
        out.loss += weight_decay * decay_norm(params);
        const double k = 2.0 * weight_decay;
        for (std::size_t m = 0; m < params.layers.size(); ++m) {
            g.layers[m].W += k * params.layers[m].W;
            if (params.adaptive) g.layers[m].D += k * params.layers[m].D;
        }
        VectorXd decay_w = k * params.w;
        if (params.family == Family::lr && params.bias_feature) decay_w[idx(*params.bias_feature)] = 0.0;
        g.w += decay_w;
        if (params.adaptive) g.D += k * params.D;
    }
    return out;
}

}  // namespace mfcast
