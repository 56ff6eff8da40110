#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ulab/datakit.hpp"
#include "ulab/model.hpp"

namespace ulab {

enum class Method { regun, neggrad, neggrad_plus, finetune, l1_sparse };

std::string to_string(Method m);
Method parse_method(const std::string& s);
/// True for the methods whose objective has a forget/retain trade-off weight w.
bool method_uses_w(Method m);

/// NegGrad's fixed ascent budget, in epochs over the forget set.
inline constexpr std::size_t kNegGradEpochs = 2;

struct UnlearnConfig {
    Method method = Method::regun;
    /// Retain weight; the forget term is weighted by 1 - w.
    double w = 0.5;
    double lr = 0.01;
    double momentum = 0.9;
    std::size_t epochs = 10;
    std::size_t batch_size = 64;
    /// 0 means batch_size.
    std::size_t retain_batch_size = 0;
    /// RefDist sample size; 0 means the forget batch size.
    std::size_t m = 0;
    double gamma = 0.0;
    std::uint64_t seed = 0;

    /// Method defaults: NegGrad gets its 2-epoch budget, everything else 10 epochs.
    static UnlearnConfig defaults(Method method);

    std::size_t retain_batch() const noexcept { return retain_batch_size ? retain_batch_size : batch_size; }
    double forget_weight() const noexcept { return 1.0 - w; }
    double retain_weight() const noexcept { return w; }

    void validate() const;
};

/// One optimizer step as seen by an observer. Batches are pool indices.
struct StepRecord {
    std::size_t step = 0;
    IndexSet forget_batch;
    IndexSet retain_batch;
    std::optional<ProbVector> target;
    std::vector<double> theta_before;
    std::vector<double> direction;
};

using StepObserver = std::function<void(const StepRecord&)>;

/// Number of optimizer steps for an epoch budget over a set of n items.
std::size_t steps_for(std::size_t epochs, std::size_t n, std::size_t batch);

/// (1 - w) * grad mean KL(q || p(.|x_f)) + w * grad mean CE(p(.|x_r), y_r).
/// The forget term never looks at forget labels.
std::vector<double> regun_direction(const Model& model, const Matrix& forget_x, const ProbVector& q,
                                    const Matrix& retain_x, std::span<const int> retain_y, double w);

/// (1 - w) * grad(-CE on forget) + w * grad CE on retain.
std::vector<double> neggrad_plus_direction(const Model& model, const Matrix& forget_x,
                                           std::span<const int> forget_y, const Matrix& retain_x,
                                           std::span<const int> retain_y, double w);

/// Reference-guided unlearning. `reference` defaults to theta0 and stays frozen.
Model regun(const Model& theta0, const DataSplits& splits, const Dataset& pool,
            const UnlearnConfig& cfg, const Model* reference = nullptr,
            const StepObserver& observer = {});

/// Gradient ascent on forget-set cross-entropy for cfg.epochs epochs.
Model neggrad(const Model& theta0, const DataSplits& splits, const Dataset& pool,
              const UnlearnConfig& cfg, const StepObserver& observer = {});

Model neggrad_plus(const Model& theta0, const DataSplits& splits, const Dataset& pool,
                   const UnlearnConfig& cfg, const StepObserver& observer = {});

/// Cross-entropy training on the retain set, starting from theta0.
Model finetune(const Model& theta0, const DataSplits& splits, const Dataset& pool,
               const UnlearnConfig& cfg);

/// finetune with an l1 penalty of weight cfg.gamma.
Model l1_sparse(const Model& theta0, const DataSplits& splits, const Dataset& pool,
                const UnlearnConfig& cfg);

/// Dispatches on cfg.method.
Model unlearn(const Model& theta0, const DataSplits& splits, const Dataset& pool,
              const UnlearnConfig& cfg, const Model* reference = nullptr);

}  // namespace ulab
