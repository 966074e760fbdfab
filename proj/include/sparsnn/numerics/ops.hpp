#pragma once

#include <cstddef>
#include <span>

#include "sparsnn/numerics/rng.hpp"
#include "sparsnn/numerics/tensor.hpp"

// Raw kernels with their vector-Jacobian products. The tape composes these;
// the SNN engine calls them directly per time step.
namespace sparsnn::ops {

struct ConvGeometry {
    std::size_t stride = 1;
    std::size_t pad = 0;
};

// floor((in + 2*pad - k) / stride) + 1; throws if the kernel does not fit.
std::size_t conv_output_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad);

// Cross-correlation, no bias. x [N,Ci,H,W], w [Co,Ci,k,k] -> [N,Co,Ho,Wo].
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, ConvGeometry g);
template <typename T>
BasicTensor<T> conv2d_grad_input(const BasicTensor<T>& gy, const BasicTensor<T>& w, const Shape& x_shape,
                                 ConvGeometry g);
template <typename T>
BasicTensor<T> conv2d_grad_weight(const BasicTensor<T>& gy, const BasicTensor<T>& x, const Shape& w_shape,
                                  ConvGeometry g);

// x [N, ...] is read as [N, in]; w [out, in] -> [N, out]. No bias.
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w);
template <typename T>
BasicTensor<T> linear_grad_input(const BasicTensor<T>& gy, const BasicTensor<T>& w, const Shape& x_shape);
template <typename T>
BasicTensor<T> linear_grad_weight(const BasicTensor<T>& gy, const BasicTensor<T>& x, const Shape& w_shape);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> relu_grad(const BasicTensor<T>& gy, const BasicTensor<T>& x);

// Non-overlapping k x k average pooling (stride k); trailing rows/cols that
// do not fill a window are dropped.
template <typename T>
BasicTensor<T> avgpool2d(const BasicTensor<T>& x, std::size_t k);
template <typename T>
BasicTensor<T> avgpool2d_grad(const BasicTensor<T>& gy, const Shape& x_shape, std::size_t k);

// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
// 1/(1-rate). Applying it is an elementwise multiply.
template <typename T>
BasicTensor<T> dropout_mask(const Shape& shape, double rate, Rng& rng);

// Mean softmax cross-entropy over the batch. logits [N,K].
template <typename T>
T softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels);
template <typename T>
BasicTensor<T> softmax_cross_entropy_grad(const BasicTensor<T>& logits, std::span<const int> labels);

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s);

// a += s * b
template <typename T>
void axpy(BasicTensor<T>& a, T s, const BasicTensor<T>& b);

// Index of the largest logit per row.
template <typename T>
std::vector<int> argmax_rows(const BasicTensor<T>& logits);

}  // namespace sparsnn::ops
