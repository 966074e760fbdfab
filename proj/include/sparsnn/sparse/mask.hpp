#pragma once

#include <cstdint>
#include <vector>

#include "sparsnn/numerics/tensor.hpp"

namespace sparsnn {

enum class PruneMode { Irregular, Channel };

const char* prune_mode_name(PruneMode mode);
PruneMode parse_prune_mode(const std::string& s);

// Binary mask congruent to one weight tensor. In channel mode a conv mask is
// constant across each input-channel slice W[:, c, :, :].
class PruneMask {
public:
    PruneMask() = default;
    explicit PruneMask(Shape shape, bool on = true)
        : shape_(std::move(shape)), bits_(shape_size(shape_), on ? 1 : 0) {}

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return bits_.size(); }

    bool operator[](std::size_t i) const { return bits_[i] != 0; }
    void set(std::size_t i, bool on) { bits_[i] = on ? 1 : 0; }

    std::size_t nnz() const;
    double density() const { return size() ? static_cast<double>(nnz()) / static_cast<double>(size()) : 0.0; }

    // Conv layout helpers: channel c of a [Co, Ci, k, k] mask.
    std::size_t channels() const { return shape_.size() == 4 ? shape_[1] : 0; }
    bool channel_on(std::size_t c) const;
    void set_channel(std::size_t c, bool on);
    std::size_t active_channels() const;
    std::size_t channel_slice_size() const { return shape_.size() == 4 ? shape_[0] * shape_[2] * shape_[3] : 0; }
    // True when every channel slice is wholly on or wholly off.
    bool channel_constant() const;

    template <typename T>
    void apply(BasicTensor<T>& weight) const {
        if (weight.shape() != shape_)
            throw DimensionError("mask shape " + shape_string(shape_) + " does not match weight " +
                                 shape_string(weight.shape()));
        auto w = weight.data();
        for (std::size_t i = 0; i < bits_.size(); ++i)
            if (!bits_[i]) w[i] = T{0};
    }

    template <typename T>
    BasicTensor<T> as_tensor() const {
        BasicTensor<T> t(shape_);
        for (std::size_t i = 0; i < bits_.size(); ++i) t[i] = bits_[i] ? T{1} : T{0};
        return t;
    }

    // 8 flags per byte, least significant bit first.
    std::vector<std::uint8_t> packed() const;
    static PruneMask unpack(Shape shape, const std::vector<std::uint8_t>& bytes);

    bool operator==(const PruneMask& o) const { return shape_ == o.shape_ && bits_ == o.bits_; }

private:
    Shape shape_;
    std::vector<std::uint8_t> bits_;
};

}  // namespace sparsnn
