#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsnn/numerics/tensor.hpp"

namespace sparsnn {

enum class Encoding { Direct, Poisson };

const char* encoding_name(Encoding e);
Encoding parse_encoding(const std::string& s);

// T input frames. A direct window keeps one frame and a repeat count; a
// Poisson window keeps every frame. Frames carry whatever shape the source
// had ([C,H,W] for one image, [N,C,H,W] for a batch).
struct InputWindow {
    Encoding encoding = Encoding::Direct;
    std::size_t timesteps = 0;
    std::uint64_t seed = 0;
    std::vector<Tensor> frames;

    const Tensor& frame(std::size_t t) const;
    const Shape& frame_shape() const { return frames.at(0).shape(); }
    // Materialized [T, ...] tensor.
    Tensor stacked() const;
};

// frame[t][i] = 1 with probability image[i], independently over t. Pixels
// must lie in [0,1].
InputWindow poisson_encode(const Tensor& image, std::size_t timesteps, std::uint64_t seed);

// T identical analog frames (stored once).
InputWindow direct_encode(const Tensor& image, std::size_t timesteps);

InputWindow encode(const Tensor& image, Encoding encoding, std::size_t timesteps, std::uint64_t seed);

}  // namespace sparsnn
