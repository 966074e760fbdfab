#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sparsnn/numerics/error.hpp"

namespace sparsnn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

// Dense row-major array. Activations use NCHW, conv weights OIHW, linear
// weights [out, in].
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape, T fill = T{0})
        : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
        check_shape();
    }

    BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (data_.size() != shape_size(shape_))
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string(shape_));
    }

    static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }
    static BasicTensor full(Shape shape, T v) { return BasicTensor(std::move(shape), v); }

    template <typename U>
    static BasicTensor cast(const BasicTensor<U>& other) {
        std::vector<T> d(other.size());
        std::transform(other.data().begin(), other.data().end(), d.begin(),
                       [](U v) { return static_cast<T>(v); });
        return BasicTensor(other.shape(), std::move(d));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    BasicTensor reshaped(Shape shape) const {
        if (shape_size(shape) != size())
            throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
        return BasicTensor(std::move(shape), data_);
    }

    // Sample n of a batch tensor, as a tensor without the leading axis.
    BasicTensor slice(std::size_t n) const {
        Shape inner(shape_.begin() + 1, shape_.end());
        const std::size_t stride = shape_size(inner);
        return BasicTensor(std::move(inner),
                           std::vector<T>(data_.begin() + n * stride, data_.begin() + (n + 1) * stride));
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    T sum() const { return std::accumulate(data_.begin(), data_.end(), T{0}); }

    bool operator==(const BasicTensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    void check_shape() const {
        for (std::size_t i = 0; i < shape_.size(); ++i)
            if (shape_[i] == 0)
                throw DimensionError("axis " + std::to_string(i) + " of shape " + shape_string(shape_) +
                                     " is zero");
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

}  // namespace sparsnn
