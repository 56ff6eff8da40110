#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ulab/datakit.hpp"
#include "ulab/model.hpp"

namespace ulab {

/// Scales a class histogram of a size-b batch to m samples.
///
/// Largest-remainder rounding: start from floor(m * c_k / b), then hand the missing
/// units one at a time to classes with c_k > 0 in order of descending fractional
/// remainder, ties to the lower class index. The result sums to m, keeps zero classes
/// at zero, and each entry is within one unit of m * c_k / b.
std::vector<std::size_t> match_histogram(const ClassHistogram& c, std::size_t b, std::size_t m);

/// Held-out rows grouped by label; the lookup RefDist draws from.
class ReferencePool {
public:
    ReferencePool(const Dataset& data, std::span<const std::size_t> held_out);

    const Dataset& data() const noexcept { return *data_; }
    std::size_t num_classes() const noexcept { return by_class_.size(); }
    /// Pool indices (into data()) carrying 1-based label k.
    const IndexSet& members(std::size_t k) const { return by_class_.at(k - 1); }

private:
    const Dataset* data_;
    std::vector<IndexSet> by_class_;
};

struct RefDistConfig {
    /// Held-out sample size; 0 means "same as the forget batch".
    std::size_t m = 0;
    std::uint64_t seed = 0;
};

/// Reference target for one forget batch: the mean of the reference model's
/// probabilities on m held-out inputs whose class counts follow match_histogram.
/// Each class is drawn without replacement when its pool is large enough, with
/// replacement otherwise.
ProbVector build_refdist(std::span<const int> forget_batch_labels, const ReferencePool& pool,
                         const Model& reference, std::size_t m, Rng& rng);
ProbVector build_refdist(std::span<const int> forget_batch_labels, const ReferencePool& pool,
                         const Model& reference, const RefDistConfig& cfg);

}  // namespace ulab
