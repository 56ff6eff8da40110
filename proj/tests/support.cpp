#include "support.hpp"

#include <numeric>

namespace ulab::testing {

namespace {

// Per-row logits built from the layout with plain loops (no library forward pass).
std::vector<double> naive_logits(const Model& m, std::span<const double> x) {
    if (m.arch.kind == ArchKind::linear) return naive_linear_logits(m, x);
    const std::size_t d = m.arch.input_dim, h = m.arch.hidden_dim, k = m.arch.num_classes;
    std::vector<double> a = naive_hidden_pre(m, x);
    for (double& v : a) v = m.arch.activation == Activation::tanh ? std::tanh(v) : std::max(0.0, v);
    const std::size_t off = h * d + h;
    std::vector<double> z(k);
    for (std::size_t c = 0; c < k; ++c) {
        double s = m.theta[off + k * h + c];
        for (std::size_t u = 0; u < h; ++u) s += m.theta[off + c * h + u] * a[u];
        z[c] = s;
    }
    return z;
}

}  // namespace

double reference_loss(const Model& m, const Matrix& x, std::span<const int> y, const LossSpec& spec) {
    long double total = 0.0L;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto z = naive_logits(m, x.row(i));
        long double mx = *std::max_element(z.begin(), z.end());
        long double s = 0.0L;
        for (double v : z) s += std::exp(static_cast<long double>(v) - mx);
        const long double lse = mx + std::log(s);
        long double ex = 0.0L;
        switch (spec.kind) {
            case LossKind::ce_hard: ex = lse - z[static_cast<std::size_t>(y[i] - 1)]; break;
            case LossKind::neg_ce_hard: ex = -(lse - z[static_cast<std::size_t>(y[i] - 1)]); break;
            case LossKind::ce_soft:
            case LossKind::kl_to_target:
                for (std::size_t k = 0; k < z.size(); ++k) {
                    const double q = spec.soft_target->probs[k];
                    if (q > 0.0) {
                        ex += q * (lse - z[k]);
                        if (spec.kind == LossKind::kl_to_target) ex += q * std::log(static_cast<long double>(q));
                    }
                }
                break;
        }
        total += ex;
    }
    long double loss = total / static_cast<long double>(x.rows());
    if (spec.l1_weight > 0.0) {
        long double l1 = 0.0L;
        for (double v : m.theta) l1 += std::abs(static_cast<long double>(v));
        loss += spec.l1_weight * l1;
    }
    return static_cast<double>(loss);
}

std::vector<double> finite_difference_grad(const Model& m, const Matrix& x, std::span<const int> y,
                                           const LossSpec& spec, double h) {
    Model probe = m;
    std::vector<double> g(m.theta.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double t = m.theta[i];
        probe.theta[i] = t + h;
        const double up = reference_loss(probe, x, y, spec);
        probe.theta[i] = t - h;
        const double dn = reference_loss(probe, x, y, spec);
        probe.theta[i] = t;
        g[i] = (up - dn) / (2.0 * h);
    }
    return g;
}

bool away_from_kinks(const Model& m, const Matrix& x, const LossSpec& spec, double margin) {
    if (spec.l1_weight > 0.0) {
        for (double v : m.theta) {
            if (std::abs(v) < margin) return false;
        }
    }
    if (m.arch.kind == ArchKind::mlp1 && m.arch.activation == Activation::relu) {
        for (std::size_t i = 0; i < x.rows(); ++i) {
            double reach = 1.0;
            for (double v : x.row(i)) reach = std::max(reach, std::abs(v));
            for (double a : naive_hidden_pre(m, x.row(i))) {
                if (std::abs(a) < margin * reach) return false;
            }
        }
    }
    return true;
}

Dataset toy_blobs(std::size_t k, std::size_t d, std::size_t per_class, double scale, double sigma,
                  std::uint64_t seed) {
    GenSpec g;
    g.num_classes = k;
    g.input_dim = d;
    g.samples_per_class = per_class;
    g.centroid_scale = scale;
    g.noise_sigma = sigma;
    g.seed = seed;
    return generate_gaussian_mixture(g);
}

ToyTask toy_task(std::size_t k, std::size_t d, std::size_t per_class, double scale, double sigma,
                 double forget_fraction, std::uint64_t seed) {
    Dataset pool = toy_blobs(k, d, per_class, scale, sigma, seed);
    GenSpec g;
    g.num_classes = k;
    g.input_dim = d;
    g.samples_per_class = per_class;
    g.centroid_scale = scale;
    g.noise_sigma = sigma;
    g.seed = seed;
    Dataset test = generate_gaussian_mixture(g, derive_seed(seed, 77));
    // Retry split seeds until held-out covers every class (tiny pools can miss one).
    for (std::uint64_t s = 0;; ++s) {
        try {
            DataSplits splits = make_splits(pool, test, forget_fraction, derive_seed(seed, 100 + s));
            return {std::move(pool), std::move(splits)};
        } catch (const SplitError&) {
            if (s > 1000) throw;
        }
    }
}

std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("ulab_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace ulab::testing

namespace ulab::testing {

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.data.gen = GenSpec{3, 4, 40, 2.5, 1.0, 11};
    c.arch = {ArchKind::mlp1, 0, 8, 0, Activation::relu};
    c.base_training = {15, 16, 0.05, 0.9, 0, 0.0};
    c.seeds = {0, 1};
    c.rmia_references = 2;
    c.unlearn_epochs = 2;
    c.unlearn_batch_size = 8;
    c.methods = {{Method::regun, {0.05, 0.01}, {0.3, 0.7}, {}, 4},
                 {Method::neggrad, {0.01}, {}, {}, 0},
                 {Method::neggrad_plus, {0.01}, {0.5, 0.9}, {}, 0},
                 {Method::finetune, {0.05}, {}, {}, 0},
                 {Method::l1_sparse, {0.05}, {}, {1e-4, 1e-2}, 0}};
    c.sweep_methods = {Method::regun, Method::neggrad_plus};
    c.sweep_w = {0.2, 0.8};
    c.output_dir = scratch_dir("small_default");
    return c;
}

}  // namespace ulab::testing
