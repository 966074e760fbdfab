#pragma once

#include <cstdint>
#include <vector>

#include "sparsnn/numerics/tensor.hpp"

namespace sparsnn {

// Non-owning view of a labelled set: images [N, C, H, W] and one label each.
struct DataView {
    const Tensor* images = nullptr;
    const std::vector<int>* labels = nullptr;
    std::size_t size() const { return images ? images->dim(0) : 0; }
};

// Samples idx[begin, end) of `images` as one batch.
Tensor gather_batch(const Tensor& images, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end);
std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<std::size_t>& idx, std::size_t begin,
                               std::size_t end);

// Permutation of [0, n) for one epoch; depends only on (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

// Identity order for evaluation.
std::vector<std::size_t> identity_order(std::size_t n);

}  // namespace sparsnn
