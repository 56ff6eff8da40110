#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ulab/matrix.hpp"
#include "ulab/rng.hpp"

namespace ulab {

using IndexSet = std::vector<std::size_t>;

/// Feature rows with 1-based labels in [1, num_classes].
struct Dataset {
    Matrix features;
    std::vector<int> labels;
    std::size_t num_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return features.cols(); }

    void validate() const;

    Matrix rows(std::span<const std::size_t> idx) const { return gather_rows(features, idx); }
    std::vector<int> labels_of(std::span<const std::size_t> idx) const;
    /// The same universe restricted to idx, in order.
    Dataset subset(std::span<const std::size_t> idx) const;
    /// All row indices 0..n-1.
    IndexSet all_indices() const;

    bool operator==(const Dataset&) const = default;
};

/// Index sets into a training pool plus the separately supplied test set.
struct DataSplits {
    IndexSet held_out;
    IndexSet retain;
    IndexSet forget;
    IndexSet validation;
    Dataset test;

    /// retain and forget together, sorted.
    IndexSet train_indices() const;
    /// Pairwise disjointness, coverage of [0, pool_size), nonempty sets.
    void validate(std::size_t pool_size) const;
};

struct ClassHistogram {
    std::vector<std::size_t> counts;

    std::size_t total() const noexcept;
    bool operator==(const ClassHistogram&) const = default;
};

/// Isotropic Gaussian mixture description. Centroids come from `seed`; samples can
/// be drawn from any stream so train, test and reference draws share one task.
struct GenSpec {
    std::size_t num_classes = 10;
    std::size_t input_dim = 32;
    std::size_t samples_per_class = 600;
    double centroid_scale = 3.0;
    double noise_sigma = 1.5;
    std::uint64_t seed = 0;

    void validate() const;
};

/// K x d centroid matrix, each row of norm centroid_scale.
Matrix gaussian_mixture_centroids(const GenSpec& spec);

/// K * samples_per_class rows, class-major order. Samples use a stream derived from spec.seed.
Dataset generate_gaussian_mixture(const GenSpec& spec);
/// Same centroids as generate_gaussian_mixture(spec), samples drawn from sample_seed.
Dataset generate_gaussian_mixture(const GenSpec& spec, std::uint64_t sample_seed);

struct CsvOptions {
    bool has_header = false;
};

/// d feature columns followed by one integer label column; K is the largest label.
Dataset load_csv(const std::filesystem::path& path, CsvOptions opts = {});
/// Writes 17 significant digits so load_csv recovers every value exactly.
void write_csv(const Dataset& data, const std::filesystem::path& path, bool header = false);

/// Held-out fraction of the original pool.
inline constexpr double kHeldOutFraction = 0.1;
/// Validation fraction of the training pool.
inline constexpr double kValidationFraction = 0.1;

/// round-half-up(fraction * n).
std::size_t round_half_up(double fraction, std::size_t n);

/// Held-out (10% of pool), then forget (forget_fraction of the rest), then validation
/// (10% of the rest of the pool), remainder to retain. Every class must appear in held-out.
DataSplits make_splits(const Dataset& pool, Dataset test, double forget_fraction,
                       std::uint64_t seed);

ClassHistogram class_histogram(std::span<const int> labels, std::size_t num_classes);

/// b indices from `indices`: without replacement when b <= |indices|, with replacement otherwise.
IndexSet sample_minibatch(std::span<const std::size_t> indices, std::size_t b, Rng& rng);

/// In-place Fisher-Yates shuffle.
void shuffle(std::span<std::size_t> v, Rng& rng);

}  // namespace ulab
