#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsnn/numerics/tensor.hpp"

namespace sparsnn {

// Activity of one weight layer over a set of samples and T steps.
struct LayerActivity {
    std::size_t layer = 0;
    std::string name;
    bool spiking = false;
    // Output spikes summed over neurons, steps and samples (0 for the head).
    std::uint64_t spikes = 0;
    // Output neurons per sample.
    std::size_t neurons = 0;
    // Per-sample input geometry and the number of nonzero input events at
    // every input position, summed over steps and samples.
    Shape input_shape;
    std::vector<std::uint64_t> input_events;
};

struct SpikeRecord {
    std::size_t timesteps = 0;
    std::size_t samples = 0;
    std::vector<LayerActivity> layers;

    // Adds another record over the same model and T. Integer sums, so merge
    // order does not matter.
    void merge(const SpikeRecord& other);
};

}  // namespace sparsnn
