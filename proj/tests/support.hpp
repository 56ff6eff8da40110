#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "ulab/datakit.hpp"
#include "ulab/model.hpp"
#include "ulab/rng.hpp"

namespace ulab::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = scale * rng.normal();
    return m;
}

inline std::vector<int> random_labels(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<int> y(n);
    for (int& v : y) v = static_cast<int>(rng.below(k)) + 1;
    return y;
}

inline ProbVector random_simplex(std::size_t k, Rng& rng, bool allow_zeros = true) {
    std::vector<double> p(k);
    double s = 0.0;
    for (double& v : p) {
        v = -std::log(1.0 - rng.uniform());
        if (allow_zeros && rng.uniform() < 0.2) v = 0.0;
        s += v;
    }
    if (s == 0.0) {
        p[rng.below(k)] = 1.0;
        return ProbVector(p);
    }
    for (double& v : p) v /= s;
    return ProbVector(p);
}

/// Model with every parameter N(0, scale^2); biases are nonzero, unlike initialize().
inline Model random_model(const ArchitectureSpec& arch, Rng& rng, double scale = 0.5) {
    Model m = Model::zeros(arch);
    for (double& v : m.theta) v = scale * rng.normal();
    return m;
}

/// Softmax written out independently of the library: exp / sum in long double.
inline std::vector<double> naive_softmax(const std::vector<double>& z) {
    long double mx = *std::max_element(z.begin(), z.end());
    long double s = 0.0L;
    std::vector<long double> e(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
        e[k] = std::exp(static_cast<long double>(z[k]) - mx);
        s += e[k];
    }
    std::vector<double> out(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) out[k] = static_cast<double>(e[k] / s);
    return out;
}

/// Logits of a linear model computed directly from the documented parameter layout.
inline std::vector<double> naive_linear_logits(const Model& m, std::span<const double> x) {
    const std::size_t d = m.arch.input_dim, k = m.arch.num_classes;
    std::vector<double> z(k);
    for (std::size_t c = 0; c < k; ++c) {
        double s = m.theta[k * d + c];
        for (std::size_t j = 0; j < d; ++j) s += m.theta[c * d + j] * x[j];
        z[c] = s;
    }
    return z;
}

/// Hidden pre-activations of an mlp1 model, straight from the layout.
inline std::vector<double> naive_hidden_pre(const Model& m, std::span<const double> x) {
    const std::size_t d = m.arch.input_dim, h = m.arch.hidden_dim;
    std::vector<double> a(h);
    for (std::size_t u = 0; u < h; ++u) {
        double s = m.theta[h * d + u];
        for (std::size_t j = 0; j < d; ++j) s += m.theta[u * d + j] * x[j];
        a[u] = s;
    }
    return a;
}

/// Batch-mean loss of spec evaluated independently of loss_and_grad (used by finite differences).
double reference_loss(const Model& m, const Matrix& x, std::span<const int> y, const LossSpec& spec);

/// Central differences with step h on every coordinate.
std::vector<double> finite_difference_grad(const Model& m, const Matrix& x, std::span<const int> y,
                                           const LossSpec& spec, double h = 1e-5);

/// |a - f| / max(|a|, |f|, floor): relative error with a floor for near-zero coordinates.
inline double rel_error(double a, double f, double floor = 1e-4) {
    return std::abs(a - f) / std::max({std::abs(a), std::abs(f), floor});
}

/// True when no relu pre-activation or l1 coordinate sits within `margin` of its kink.
bool away_from_kinks(const Model& m, const Matrix& x, const LossSpec& spec, double margin);

/// Gaussian blobs with far-apart centroids; handy toy data.
Dataset toy_blobs(std::size_t k, std::size_t d, std::size_t per_class, double scale, double sigma,
                  std::uint64_t seed);

/// A small pool plus splits with every class present in held-out.
struct ToyTask {
    Dataset pool;
    DataSplits splits;
};
ToyTask toy_task(std::size_t k, std::size_t d, std::size_t per_class, double scale, double sigma,
                 double forget_fraction, std::uint64_t seed);

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace ulab::testing

#include "ulab/harness.hpp"

namespace ulab::testing {

/// A tiny end-to-end experiment (seconds to run) with every method and a short sweep.
ExperimentConfig small_config();

}  // namespace ulab::testing
