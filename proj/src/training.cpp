#include "ulab/training.hpp"

#include <algorithm>
#include <cmath>

namespace ulab {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (!(l1_weight >= 0.0)) throw ConfigError("l1_weight must be >= 0");
}

Model train(const Model& model, const Dataset& data, std::span<const std::size_t> indices,
            const TrainConfig& cfg) {
    cfg.validate();
    if (indices.empty()) throw EmptyBatchError("train: empty index set");
    Model out = model;
    if (cfg.epochs == 0) return out;
    if (data.dim() != model.arch.input_dim) throw ShapeError("train: feature dimension mismatch");

    Rng rng(cfg.seed);
    OptState opt = OptState::fresh(cfg.lr, cfg.momentum, out.theta.size());
    const LossSpec spec = LossSpec::hard(cfg.l1_weight);
    IndexSet order(indices.begin(), indices.end());
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        shuffle(order, rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> batch(order.data() + start, stop - start);
            const auto lg = loss_and_grad(out, data.rows(batch), data.labels_of(batch), spec);
            sgd_step_inplace(out.theta, lg.grad, opt);
        }
    }
    return out;
}

}  // namespace ulab
