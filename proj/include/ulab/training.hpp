#pragma once

#include <cstdint>
#include <span>

#include "ulab/datakit.hpp"
#include "ulab/model.hpp"

namespace ulab {

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 64;
    double lr = 0.05;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    /// Optional l1 penalty weight added to the hard cross-entropy.
    double l1_weight = 0.0;

    void validate() const;
};

/// Minibatch hard-label SGD: epochs x ceil(|indices| / batch_size) steps, one seeded
/// reshuffle of `indices` per epoch, momentum carried across epochs.
Model train(const Model& model, const Dataset& data, std::span<const std::size_t> indices,
            const TrainConfig& cfg);

}  // namespace ulab
