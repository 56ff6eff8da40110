#include "ulab/unlearners.hpp"

#include <algorithm>
#include <cmath>

#include "ulab/refdist.hpp"
#include "ulab/training.hpp"

namespace ulab {

std::string to_string(Method m) {
    switch (m) {
        case Method::regun: return "regun";
        case Method::neggrad: return "neggrad";
        case Method::neggrad_plus: return "neggrad_plus";
        case Method::finetune: return "finetune";
        case Method::l1_sparse: return "l1_sparse";
    }
    return "?";
}

Method parse_method(const std::string& s) {
    if (s == "regun") return Method::regun;
    if (s == "neggrad") return Method::neggrad;
    if (s == "neggrad_plus") return Method::neggrad_plus;
    if (s == "finetune") return Method::finetune;
    if (s == "l1_sparse") return Method::l1_sparse;
    throw ConfigError("unknown unlearning method '" + s + "'");
}

bool method_uses_w(Method m) { return m == Method::regun || m == Method::neggrad_plus; }

UnlearnConfig UnlearnConfig::defaults(Method method) {
    UnlearnConfig c;
    c.method = method;
    if (method == Method::neggrad) c.epochs = kNegGradEpochs;
    return c;
}

void UnlearnConfig::validate() const {
    if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("w must lie in [0, 1]");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be finite and >= 0");
}

std::size_t steps_for(std::size_t epochs, std::size_t n, std::size_t batch) {
    return epochs * ((n + batch - 1) / batch);
}

namespace {

void axpy_into(std::vector<double>& out, double a, const std::vector<double>& x, double b,
               const std::vector<double>& y) {
    out.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
}

void check_inputs(const DataSplits& splits, const Dataset& pool, const Model& theta0,
                  const UnlearnConfig& cfg) {
    cfg.validate();
    splits.validate(pool.size());
    if (pool.dim() != theta0.arch.input_dim) throw ShapeError("model/data dimension mismatch");
    if (pool.num_classes != theta0.arch.num_classes) throw ShapeError("model/data class count mismatch");
}

// Epoch loop over shuffled forget batches shared by the forget-driven methods.
template <class StepFn>
void for_each_forget_batch(const IndexSet& forget, std::size_t epochs, std::size_t b, Rng& rng,
                           StepFn&& step) {
    IndexSet order = forget;
    std::size_t t = 0;
    for (std::size_t e = 0; e < epochs; ++e) {
        shuffle(order, rng);
        for (std::size_t start = 0; start < order.size(); start += b) {
            const std::size_t stop = std::min(order.size(), start + b);
            step(t++, IndexSet(order.begin() + static_cast<std::ptrdiff_t>(start),
                               order.begin() + static_cast<std::ptrdiff_t>(stop)));
        }
    }
}

TrainConfig retain_training(const UnlearnConfig& cfg, double l1) {
    TrainConfig t;
    t.epochs = cfg.epochs;
    t.batch_size = cfg.batch_size;
    t.lr = cfg.lr;
    t.momentum = cfg.momentum;
    t.seed = cfg.seed;
    t.l1_weight = l1;
    return t;
}

}  // namespace

std::vector<double> regun_direction(const Model& model, const Matrix& forget_x, const ProbVector& q,
                                    const Matrix& retain_x, std::span<const int> retain_y, double w) {
    const auto gf = loss_and_grad(model, forget_x, {}, LossSpec::kl(q));
    const auto gr = loss_and_grad(model, retain_x, retain_y, LossSpec::hard());
    std::vector<double> out;
    axpy_into(out, 1.0 - w, gf.grad, w, gr.grad);
    return out;
}

std::vector<double> neggrad_plus_direction(const Model& model, const Matrix& forget_x,
                                           std::span<const int> forget_y, const Matrix& retain_x,
                                           std::span<const int> retain_y, double w) {
    const auto gf = loss_and_grad(model, forget_x, forget_y, LossSpec::negated_hard());
    const auto gr = loss_and_grad(model, retain_x, retain_y, LossSpec::hard());
    std::vector<double> out;
    axpy_into(out, 1.0 - w, gf.grad, w, gr.grad);
    return out;
}

Model regun(const Model& theta0, const DataSplits& splits, const Dataset& pool,
            const UnlearnConfig& cfg, const Model* reference, const StepObserver& observer) {
    check_inputs(splits, pool, theta0, cfg);
    Model model = theta0;
    if (cfg.epochs == 0) return model;
    // Frozen copy: the reference never follows the parameters being unlearned.
    const Model frozen = reference ? *reference : theta0;
    const ReferencePool refpool(pool, splits.held_out);
    Rng rng(cfg.seed);
    OptState opt = OptState::fresh(cfg.lr, cfg.momentum, model.theta.size());

    for_each_forget_batch(splits.forget, cfg.epochs, cfg.batch_size, rng,
                          [&](std::size_t t, IndexSet bf) {
        IndexSet br = sample_minibatch(splits.retain, cfg.retain_batch(), rng);
        ProbVector q = build_refdist(pool.labels_of(bf), refpool, frozen, cfg.m, rng);
        auto dir = regun_direction(model, pool.rows(bf), q, pool.rows(br), pool.labels_of(br), cfg.w);
        if (observer) observer({t, bf, br, q, model.theta, dir});
        sgd_step_inplace(model.theta, dir, opt);
    });
    return model;
}

Model neggrad(const Model& theta0, const DataSplits& splits, const Dataset& pool,
              const UnlearnConfig& cfg, const StepObserver& observer) {
    check_inputs(splits, pool, theta0, cfg);
    Model model = theta0;
    if (cfg.epochs == 0) return model;
    Rng rng(cfg.seed);
    OptState opt = OptState::fresh(cfg.lr, cfg.momentum, model.theta.size());
    for_each_forget_batch(splits.forget, cfg.epochs, cfg.batch_size, rng,
                          [&](std::size_t t, IndexSet bf) {
        auto lg = loss_and_grad(model, pool.rows(bf), pool.labels_of(bf), LossSpec::negated_hard());
        if (observer) observer({t, bf, {}, std::nullopt, model.theta, lg.grad});
        sgd_step_inplace(model.theta, lg.grad, opt);
    });
    return model;
}

Model neggrad_plus(const Model& theta0, const DataSplits& splits, const Dataset& pool,
                   const UnlearnConfig& cfg, const StepObserver& observer) {
    check_inputs(splits, pool, theta0, cfg);
    Model model = theta0;
    if (cfg.epochs == 0) return model;
    Rng rng(cfg.seed);
    OptState opt = OptState::fresh(cfg.lr, cfg.momentum, model.theta.size());
    for_each_forget_batch(splits.forget, cfg.epochs, cfg.batch_size, rng,
                          [&](std::size_t t, IndexSet bf) {
        IndexSet br = sample_minibatch(splits.retain, cfg.retain_batch(), rng);
        auto dir = neggrad_plus_direction(model, pool.rows(bf), pool.labels_of(bf), pool.rows(br),
                                          pool.labels_of(br), cfg.w);
        if (observer) observer({t, bf, br, std::nullopt, model.theta, dir});
        sgd_step_inplace(model.theta, dir, opt);
    });
    return model;
}

Model finetune(const Model& theta0, const DataSplits& splits, const Dataset& pool,
               const UnlearnConfig& cfg) {
    check_inputs(splits, pool, theta0, cfg);
    return train(theta0, pool, splits.retain, retain_training(cfg, 0.0));
}

Model l1_sparse(const Model& theta0, const DataSplits& splits, const Dataset& pool,
                const UnlearnConfig& cfg) {
    check_inputs(splits, pool, theta0, cfg);
    return train(theta0, pool, splits.retain, retain_training(cfg, cfg.gamma));
}

Model unlearn(const Model& theta0, const DataSplits& splits, const Dataset& pool,
              const UnlearnConfig& cfg, const Model* reference) {
    switch (cfg.method) {
        case Method::regun: return regun(theta0, splits, pool, cfg, reference);
        case Method::neggrad: return neggrad(theta0, splits, pool, cfg);
        case Method::neggrad_plus: return neggrad_plus(theta0, splits, pool, cfg);
        case Method::finetune: return finetune(theta0, splits, pool, cfg);
        case Method::l1_sparse: return l1_sparse(theta0, splits, pool, cfg);
    }
    throw ConfigError("unknown method");
}

}  // namespace ulab
