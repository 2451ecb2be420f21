#include "mfcast/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "mfcast/errors.hpp"
#include "mfcast/rng.hpp"

namespace mfcast {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
    if (max_iterations < 1) throw ValidationError("max_iterations must be at least 1");
    if (patience < 1) throw ValidationError("patience must be at least 1");
    if (batch_size < 1) throw ValidationError("batch_size must be at least 1");
    if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be non-negative");
}

OptimizerState OptimizerState::for_params(const ModelParams& params) {
    return {params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, double learning_rate,
               const AdamConstants& c) {
    auto p = params.blocks();
    const auto g = grads.blocks();
    auto m = state.m.blocks();
    auto v = state.v.blocks();
    if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size())
        throw DomainError("optimizer state does not match the parameters");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correct1 = 1.0 - std::pow(c.beta1, t);
    const double correct2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k].size() != g[k].size()) throw DomainError("gradient block shape mismatch");
        for (std::size_t i = 0; i < p[k].size(); ++i) {
            m[k][i] = c.beta1 * m[k][i] + (1.0 - c.beta1) * g[k][i];
            v[k][i] = c.beta2 * v[k][i] + (1.0 - c.beta2) * g[k][i] * g[k][i];
            const double m_hat = m[k][i] / correct1;
            const double v_hat = v[k][i] / correct2;
            p[k][i] -= learning_rate * m_hat / (std::sqrt(v_hat) + c.eps);
        }
    }
}

double run_epoch(ModelParams& params, OptimizerState& state, const Dataset& train, const MissingPattern& alpha,
                 const TrainConfig& cfg, std::uint64_t epoch_index) {
    const std::size_t n = train.rows();
    const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
    std::vector<std::size_t> order(batches);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.shuffle) {
        Rng rng(derive_seed(cfg.seed, {0xba7c, epoch_index}));
        std::shuffle(order.begin(), order.end(), rng);
    }
    double total = 0.0;
    for (auto b : order) {
        const std::size_t begin = b * cfg.batch_size;
        const std::size_t count = std::min(cfg.batch_size, n - begin);
        const auto rows = static_cast<Eigen::Index>(begin);
        const auto len = static_cast<Eigen::Index>(count);
        const auto lg = loss_and_grad(params, train.X.middleRows(rows, len), train.y.segment(rows, len), alpha,
                                      cfg.weight_decay);
        adam_step(params, lg.grad, state, cfg.learning_rate);
        total += lg.loss;
    }
    return total / static_cast<double>(batches);
}

TrainResult train_nominal(const TrainData& data, const MissingPattern& alpha, const TrainConfig& cfg,
                          const Architecture& arch, Family family, bool adaptive,
                          const std::optional<ModelParams>& warm_start) {
    cfg.validate();
    if (data.train.rows() == 0 || data.val.rows() == 0) throw SizeError("training and validation sets must be non-empty");

    ModelParams theta = warm_start ? *warm_start
                                   : init_params(FeatureLayout::of(data.train), arch, family, adaptive, cfg.seed);
    theta.validate();
    OptimizerState state = OptimizerState::for_params(theta);

    TrainResult result;
    result.params = theta;
    result.best_loss = mse(theta, data.val.X, data.val.y, alpha);
    result.trace.push_back({0, std::numeric_limits<double>::quiet_NaN(), result.best_loss});

    std::size_t stale = 0;
    std::size_t k = 0;
    while (k < cfg.max_iterations && stale < cfg.patience) {
        const double train_loss = run_epoch(theta, state, data.train, alpha, cfg, k);
        const double val_loss = mse(theta, data.val.X, data.val.y, alpha);
        ++k;
        result.trace.push_back({k, train_loss, val_loss});
        if (val_loss < result.best_loss) {
            result.params = theta;
            result.best_loss = val_loss;
            result.best_iteration = k;
            stale = 0;
        } else {
            ++stale;
        }
    }
    result.iterations = k;
    return result;
}

void write_trace_csv(std::span<const TracePoint> trace, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    out << "iteration,train_loss,val_loss\n";
    for (const auto& t : trace) out << fmt::format("{},{:.17g},{:.17g}\n", t.iteration, t.train_loss, t.val_loss);
}

}  // namespace mfcast
