#include "ulab/refdist.hpp"

#include <algorithm>
#include <numeric>

namespace ulab {

std::vector<std::size_t> match_histogram(const ClassHistogram& c, std::size_t b, std::size_t m) {
    if (b == 0) throw DomainError("match_histogram: batch size must be >= 1");
    if (m == 0) throw DomainError("match_histogram: m must be >= 1");
    if (c.total() != b) throw DomainError("match_histogram: histogram does not sum to b");

    const std::size_t K = c.counts.size();
    std::vector<std::size_t> out(K), rem(K);
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t scaled = m * c.counts[k];
        out[k] = scaled / b;
        rem[k] = scaled % b;
        assigned += out[k];
    }
    std::vector<std::size_t> order;
    for (std::size_t k = 0; k < K; ++k) {
        if (c.counts[k] > 0) order.push_back(k);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t z) { return rem[a] > rem[z]; });
    // The fractional parts sum to the deficit, so it never exceeds the number of
    // classes with a nonzero remainder.
    for (std::size_t i = 0; assigned < m; ++i) {
        ++out[order[i]];
        ++assigned;
    }
    return out;
}

ReferencePool::ReferencePool(const Dataset& data, std::span<const std::size_t> held_out)
    : data_(&data), by_class_(data.num_classes) {
    for (std::size_t i : held_out) {
        const int y = data.labels.at(i);
        if (y < 1 || static_cast<std::size_t>(y) > data.num_classes) {
            throw LabelError("held-out label out of range");
        }
        by_class_[static_cast<std::size_t>(y - 1)].push_back(i);
    }
}

ProbVector build_refdist(std::span<const int> forget_batch_labels, const ReferencePool& pool,
                         const Model& reference, std::size_t m, Rng& rng) {
    const std::size_t b = forget_batch_labels.size();
    if (b == 0) throw EmptyBatchError("build_refdist: empty forget batch");
    const std::size_t K = pool.num_classes();
    if (reference.arch.num_classes != K) throw ShapeError("build_refdist: reference class count mismatch");
    if (m == 0) m = b;

    const auto hist = class_histogram(forget_batch_labels, K);
    const auto want = match_histogram(hist, b, m);

    IndexSet chosen;
    chosen.reserve(m);
    for (std::size_t k = 0; k < K; ++k) {
        if (want[k] == 0) continue;
        const IndexSet& members = pool.members(k + 1);
        if (members.empty()) {
            throw CoverageError("held-out set has no samples of class " + std::to_string(k + 1));
        }
        const auto draw = sample_minibatch(members, want[k], rng);
        chosen.insert(chosen.end(), draw.begin(), draw.end());
    }

    const Matrix probs = forward_probs_matrix(reference, pool.data().rows(chosen));
    std::vector<double> q(K, 0.0);
    for (std::size_t j = 0; j < probs.rows(); ++j) {
        const auto row = probs.row(j);
        for (std::size_t k = 0; k < K; ++k) q[k] += row[k];
    }
    const double inv = 1.0 / static_cast<double>(probs.rows());
    for (double& v : q) v *= inv;
    return ProbVector(std::move(q));
}

ProbVector build_refdist(std::span<const int> forget_batch_labels, const ReferencePool& pool,
                         const Model& reference, const RefDistConfig& cfg) {
    Rng rng(cfg.seed);
    return build_refdist(forget_batch_labels, pool, reference, cfg.m, rng);
}

}  // namespace ulab
