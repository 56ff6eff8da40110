#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ulab/matrix.hpp"

namespace ulab {

enum class ArchKind { linear, mlp1 };
enum class Activation { tanh, relu };

std::string to_string(ArchKind k);
std::string to_string(Activation a);
ArchKind parse_arch_kind(const std::string& s);
Activation parse_activation(const std::string& s);

/// Classifier shape. hidden_dim and activation only matter for mlp1.
struct ArchitectureSpec {
    ArchKind kind = ArchKind::linear;
    std::size_t input_dim = 1;
    std::size_t hidden_dim = 0;
    std::size_t num_classes = 2;
    Activation activation = Activation::tanh;

    void validate() const;
    std::size_t param_count() const;

    bool operator==(const ArchitectureSpec&) const = default;
};

/// Architecture plus flat parameter vector.
///
/// Layout is row-major per layer, weights before biases, layers in forward order:
///   linear: W[K x d], b[K]
///   mlp1:   W1[h x d], b1[h], W2[K x h], b2[K]
struct Model {
    ArchitectureSpec arch;
    std::vector<double> theta;
    std::uint64_t init_seed = 0;

    /// Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)), zero biases.
    static Model initialize(const ArchitectureSpec& arch, std::uint64_t seed);
    static Model zeros(const ArchitectureSpec& arch);

    void validate() const;
    std::size_t num_classes() const noexcept { return arch.num_classes; }

    bool operator==(const Model&) const = default;
};

/// A point on the probability simplex.
struct ProbVector {
    std::vector<double> probs;

    ProbVector() = default;
    explicit ProbVector(std::vector<double> p) : probs(std::move(p)) {}

    std::size_t size() const noexcept { return probs.size(); }
    double operator[](std::size_t k) const { return probs[k]; }

    /// Nonnegative entries summing to one within tol.
    bool is_valid(double tol = 1e-9) const;
    static ProbVector uniform(std::size_t k);

    bool operator==(const ProbVector&) const = default;
};

enum class LossKind { ce_hard, ce_soft, kl_to_target, neg_ce_hard };

std::string to_string(LossKind k);

struct LossSpec {
    LossKind kind = LossKind::ce_hard;
    std::optional<ProbVector> soft_target;
    double l1_weight = 0.0;

    static LossSpec hard(double l1 = 0.0) { return {LossKind::ce_hard, std::nullopt, l1}; }
    static LossSpec negated_hard() { return {LossKind::neg_ce_hard, std::nullopt, 0.0}; }
    static LossSpec soft(ProbVector q) { return {LossKind::ce_soft, std::move(q), 0.0}; }
    static LossSpec kl(ProbVector q) { return {LossKind::kl_to_target, std::move(q), 0.0}; }

    bool needs_target() const noexcept {
        return kind == LossKind::ce_soft || kind == LossKind::kl_to_target;
    }
    bool needs_labels() const noexcept { return !needs_target(); }
    void validate(std::size_t num_classes) const;
};

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

struct OptState {
    double lr = 0.01;
    double momentum = 0.0;
    std::vector<double> velocity;

    static OptState fresh(double lr, double momentum, std::size_t n) {
        return {lr, momentum, std::vector<double>(n, 0.0)};
    }
};

/// Pre-softmax scores, one row per input row.
Matrix forward_logits(const Model& model, const Matrix& batch);

/// Softmax probabilities (max-logit shifted), one row per input row.
Matrix forward_probs_matrix(const Model& model, const Matrix& batch);
std::vector<ProbVector> forward_probs(const Model& model, const Matrix& batch);

/// Stable softmax of one logit row.
std::vector<double> softmax(std::span<const double> logits);

/// KL(q || p) in nats. Zero-mass entries of q contribute 0; p must be strictly positive.
double kl_divergence(const ProbVector& q, const ProbVector& p);

/// Batch-mean loss and its gradient with respect to theta.
///
/// Labels are 1-based class ids and are required for the hard kinds; the soft kinds
/// ignore them. A positive l1_weight adds l1_weight * ||theta||_1, with subgradient 0 at 0.
LossGrad loss_and_grad(const Model& model, const Matrix& batch, std::span<const int> labels,
                       const LossSpec& spec);

/// velocity = momentum * velocity + grad; theta -= lr * velocity.
void sgd_step_inplace(std::vector<double>& theta, std::span<const double> grad, OptState& opt);
std::pair<Model, OptState> sgd_step(const Model& model, std::span<const double> grad,
                                    const OptState& opt);

}  // namespace ulab
