#include "ulab/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ulab/rng.hpp"

namespace ulab {

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= m.rows()) throw ShapeError("row index out of range");
        const auto src = m.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

std::string to_string(ArchKind k) { return k == ArchKind::linear ? "linear" : "mlp1"; }
std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

ArchKind parse_arch_kind(const std::string& s) {
    if (s == "linear") return ArchKind::linear;
    if (s == "mlp1") return ArchKind::mlp1;
    throw ConfigError("unknown architecture kind '" + s + "'");
}

Activation parse_activation(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    throw ConfigError("unknown activation '" + s + "'");
}

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::ce_hard: return "ce_hard";
        case LossKind::ce_soft: return "ce_soft";
        case LossKind::kl_to_target: return "kl_to_target";
        case LossKind::neg_ce_hard: return "neg_ce_hard";
    }
    return "?";
}

void ArchitectureSpec::validate() const {
    if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (kind == ArchKind::mlp1 && hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
}

std::size_t ArchitectureSpec::param_count() const {
    if (kind == ArchKind::linear) return num_classes * input_dim + num_classes;
    return hidden_dim * input_dim + hidden_dim + num_classes * hidden_dim + num_classes;
}

namespace {

void fill_uniform(std::span<double> w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& x : w) x = rng.uniform(-a, a);
}

}  // namespace

Model Model::initialize(const ArchitectureSpec& arch, std::uint64_t seed) {
    arch.validate();
    Model m{arch, std::vector<double>(arch.param_count(), 0.0), seed};
    Rng rng(seed);
    std::span<double> theta(m.theta);
    const std::size_t d = arch.input_dim;
    const std::size_t k = arch.num_classes;
    if (arch.kind == ArchKind::linear) {
        fill_uniform(theta.subspan(0, k * d), d, k, rng);
    } else {
        const std::size_t h = arch.hidden_dim;
        fill_uniform(theta.subspan(0, h * d), d, h, rng);
        fill_uniform(theta.subspan(h * d + h, k * h), h, k, rng);
    }
    return m;
}

Model Model::zeros(const ArchitectureSpec& arch) {
    arch.validate();
    return Model{arch, std::vector<double>(arch.param_count(), 0.0), 0};
}

void Model::validate() const {
    arch.validate();
    if (theta.size() != arch.param_count()) {
        throw ShapeError("theta length " + std::to_string(theta.size()) +
                         " does not match parameter count " +
                         std::to_string(arch.param_count()));
    }
    for (double v : theta) {
        if (!std::isfinite(v)) throw NumericError("model parameters contain non-finite values");
    }
}

bool ProbVector::is_valid(double tol) const {
    if (probs.empty()) return false;
    double s = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0) || !std::isfinite(p)) return false;
        s += p;
    }
    return std::abs(s - 1.0) <= tol;
}

ProbVector ProbVector::uniform(std::size_t k) {
    return ProbVector(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

void LossSpec::validate(std::size_t num_classes) const {
    if (!(l1_weight >= 0.0) || !std::isfinite(l1_weight)) {
        throw ConfigError("l1 weight must be finite and >= 0");
    }
    if (needs_target()) {
        if (!soft_target) throw ConfigError(to_string(kind) + " requires a soft target");
        if (soft_target->size() != num_classes) {
            throw ShapeError("soft target has " + std::to_string(soft_target->size()) +
                             " classes, model has " + std::to_string(num_classes));
        }
        if (!soft_target->is_valid()) throw DomainError("soft target is not a probability vector");
    } else if (soft_target) {
        throw ConfigError(to_string(kind) + " does not take a soft target");
    }
}

namespace {

void check_batch(const Model& model, const Matrix& batch) {
    if (batch.cols() != model.arch.input_dim) {
        throw ShapeError("input rows have " + std::to_string(batch.cols()) +
                         " columns, model expects " + std::to_string(model.arch.input_dim));
    }
    if (model.theta.size() != model.arch.param_count()) {
        throw ShapeError("theta length does not match architecture");
    }
}

double activate(Activation a, double x) { return a == Activation::tanh ? std::tanh(x) : (x > 0.0 ? x : 0.0); }

// Derivative expressed through the activation output (tanh) or pre-activation (relu).
double activate_grad(Activation a, double pre, double post) {
    if (a == Activation::tanh) return 1.0 - post * post;
    return pre > 0.0 ? 1.0 : 0.0;
}

// z[k] = b[k] + sum_j W[k, j] x[j]
void affine(std::span<const double> w, std::span<const double> b, std::span<const double> x,
            std::span<double> z) {
    const std::size_t in = x.size();
    for (std::size_t k = 0; k < z.size(); ++k) {
        double acc = b[k];
        const double* wr = w.data() + k * in;
        for (std::size_t j = 0; j < in; ++j) acc += wr[j] * x[j];
        z[k] = acc;
    }
}

struct Layers {
    std::span<const double> w1, b1, w2, b2;
};

Layers split(const Model& m) {
    std::span<const double> t(m.theta);
    const std::size_t d = m.arch.input_dim, k = m.arch.num_classes;
    if (m.arch.kind == ArchKind::linear) return {t.subspan(0, k * d), t.subspan(k * d, k), {}, {}};
    const std::size_t h = m.arch.hidden_dim;
    return {t.subspan(0, h * d), t.subspan(h * d, h), t.subspan(h * d + h, k * h),
            t.subspan(h * d + h + k * h, k)};
}

double log_sum_exp(std::span<const double> z) {
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - mx);
    return mx + std::log(s);
}

}  // namespace

Matrix forward_logits(const Model& model, const Matrix& batch) {
    check_batch(model, batch);
    const auto L = split(model);
    const std::size_t k = model.arch.num_classes;
    Matrix out(batch.rows(), k);
    std::vector<double> hidden(model.arch.hidden_dim);
    for (std::size_t i = 0; i < batch.rows(); ++i) {
        if (model.arch.kind == ArchKind::linear) {
            affine(L.w1, L.b1, batch.row(i), out.row(i));
        } else {
            affine(L.w1, L.b1, batch.row(i), hidden);
            for (double& v : hidden) v = activate(model.arch.activation, v);
            affine(L.w2, L.b2, hidden, out.row(i));
        }
    }
    return out;
}

std::vector<double> softmax(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double s = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        p[k] = std::exp(logits[k] - mx);
        s += p[k];
    }
    for (double& v : p) v /= s;
    return p;
}

Matrix forward_probs_matrix(const Model& model, const Matrix& batch) {
    Matrix z = forward_logits(model, batch);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const auto p = softmax(z.row(i));
        std::copy(p.begin(), p.end(), z.row(i).begin());
    }
    return z;
}

std::vector<ProbVector> forward_probs(const Model& model, const Matrix& batch) {
    const Matrix p = forward_probs_matrix(model, batch);
    std::vector<ProbVector> out;
    out.reserve(p.rows());
    for (std::size_t i = 0; i < p.rows(); ++i) {
        const auto r = p.row(i);
        out.emplace_back(std::vector<double>(r.begin(), r.end()));
    }
    return out;
}

double kl_divergence(const ProbVector& q, const ProbVector& p) {
    if (q.size() != p.size()) throw ShapeError("kl_divergence: class counts differ");
    double s = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
        if (!(p[k] > 0.0)) throw DomainError("kl_divergence: p must be strictly positive");
        if (q[k] > 0.0) s += q[k] * std::log(q[k] / p[k]);
    }
    return s < 0.0 ? 0.0 : s;
}

LossGrad loss_and_grad(const Model& model, const Matrix& batch, std::span<const int> labels,
                       const LossSpec& spec) {
    check_batch(model, batch);
    const std::size_t n = batch.rows();
    const std::size_t K = model.arch.num_classes;
    if (n == 0) throw EmptyBatchError("loss_and_grad: empty batch");
    spec.validate(K);
    if (spec.needs_labels()) {
        if (labels.size() != n) throw ShapeError("loss_and_grad: labels/batch size mismatch");
        for (int y : labels) {
            if (y < 1 || static_cast<std::size_t>(y) > K) {
                throw LabelError("label " + std::to_string(y) + " outside [1, " +
                                 std::to_string(K) + "]");
            }
        }
    }

    // The target entropy term of KL(q||p) is constant in theta.
    double target_entropy = 0.0;
    if (spec.kind == LossKind::kl_to_target) {
        for (double qk : spec.soft_target->probs) {
            if (qk > 0.0) target_entropy -= qk * std::log(qk);
        }
    }

    const auto L = split(model);
    const bool mlp = model.arch.kind == ArchKind::mlp1;
    const std::size_t d = model.arch.input_dim;
    const std::size_t h = model.arch.hidden_dim;
    const double inv_n = 1.0 / static_cast<double>(n);

    LossGrad out{0.0, std::vector<double>(model.theta.size(), 0.0)};
    std::span<double> g(out.grad);
    std::span<double> gw1, gb1, gw2, gb2;
    if (mlp) {
        gw1 = g.subspan(0, h * d);
        gb1 = g.subspan(h * d, h);
        gw2 = g.subspan(h * d + h, K * h);
        gb2 = g.subspan(h * d + h + K * h, K);
    } else {
        gw1 = g.subspan(0, K * d);
        gb1 = g.subspan(K * d, K);
    }

    std::vector<double> pre(h), act(h), dact(h), z(K), dz(K);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = batch.row(i);
        if (mlp) {
            affine(L.w1, L.b1, x, pre);
            for (std::size_t j = 0; j < h; ++j) act[j] = activate(model.arch.activation, pre[j]);
            affine(L.w2, L.b2, act, z);
        } else {
            affine(L.w1, L.b1, x, z);
        }
        const double lse = log_sum_exp(z);

        // dz = p - target; per-example loss = -sum target_k log p_k.
        double ex = 0.0;
        for (std::size_t k = 0; k < K; ++k) dz[k] = std::exp(z[k] - lse);
        if (spec.needs_labels()) {
            const std::size_t y = static_cast<std::size_t>(labels[i] - 1);
            ex = lse - z[y];
            dz[y] -= 1.0;
        } else {
            const auto& q = spec.soft_target->probs;
            for (std::size_t k = 0; k < K; ++k) {
                if (q[k] > 0.0) ex += q[k] * (lse - z[k]);
                dz[k] -= q[k];
            }
        }
        total += ex;
        for (double& v : dz) v *= inv_n;

        if (mlp) {
            for (std::size_t k = 0; k < K; ++k) {
                gb2[k] += dz[k];
                double* row = gw2.data() + k * h;
                for (std::size_t j = 0; j < h; ++j) row[j] += dz[k] * act[j];
            }
            for (std::size_t j = 0; j < h; ++j) {
                double back = 0.0;
                for (std::size_t k = 0; k < K; ++k) back += L.w2[k * h + j] * dz[k];
                dact[j] = back * activate_grad(model.arch.activation, pre[j], act[j]);
            }
            for (std::size_t j = 0; j < h; ++j) {
                gb1[j] += dact[j];
                double* row = gw1.data() + j * d;
                for (std::size_t c = 0; c < d; ++c) row[c] += dact[j] * x[c];
            }
        } else {
            for (std::size_t k = 0; k < K; ++k) {
                gb1[k] += dz[k];
                double* row = gw1.data() + k * d;
                for (std::size_t c = 0; c < d; ++c) row[c] += dz[k] * x[c];
            }
        }
    }
    out.loss = total * inv_n;
    if (spec.kind == LossKind::kl_to_target) {
        out.loss -= target_entropy;
        if (out.loss < 0.0) out.loss = 0.0;
    }

    if (spec.kind == LossKind::neg_ce_hard) {
        out.loss = -out.loss;
        for (double& v : out.grad) v = -v;
    }

    if (spec.l1_weight > 0.0) {
        double norm = 0.0;
        for (std::size_t i = 0; i < model.theta.size(); ++i) {
            const double t = model.theta[i];
            norm += std::abs(t);
            if (t > 0.0) out.grad[i] += spec.l1_weight;
            else if (t < 0.0) out.grad[i] -= spec.l1_weight;
        }
        out.loss += spec.l1_weight * norm;
    }
    return out;
}

void sgd_step_inplace(std::vector<double>& theta, std::span<const double> grad, OptState& opt) {
    if (grad.size() != theta.size()) throw ShapeError("sgd_step: gradient length mismatch");
    if (!(opt.lr >= 0.0) || !std::isfinite(opt.lr)) throw ConfigError("sgd_step: learning rate must be >= 0");
    if (!(opt.momentum >= 0.0 && opt.momentum < 1.0)) throw ConfigError("sgd_step: momentum must be in [0, 1)");
    if (opt.velocity.empty()) opt.velocity.assign(theta.size(), 0.0);
    if (opt.velocity.size() != theta.size()) throw ShapeError("sgd_step: velocity length mismatch");
    for (double v : grad) {
        if (!std::isfinite(v)) throw NumericError("sgd_step: non-finite gradient entry");
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
        opt.velocity[i] = opt.momentum * opt.velocity[i] + grad[i];
        theta[i] -= opt.lr * opt.velocity[i];
    }
}

std::pair<Model, OptState> sgd_step(const Model& model, std::span<const double> grad,
                                    const OptState& opt) {
    std::pair<Model, OptState> out{model, opt};
    sgd_step_inplace(out.first.theta, grad, out.second);
    return out;
}

}  // namespace ulab
