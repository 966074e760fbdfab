#include "sparsnn/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sparsnn/numerics/parallel.hpp"

namespace sparsnn::ops {

namespace {

void require_rank(const Shape& s, std::size_t rank, const char* what) {
    if (s.size() != rank)
        throw DimensionError(std::string(what) + " must have rank " + std::to_string(rank) + ", got shape " +
                             shape_string(s));
}

void require_same(const Shape& a, const Shape& b, const char* what) {
    if (a != b) throw DimensionError(std::string(what) + ": shapes " + shape_string(a) + " and " + shape_string(b) + " differ");
}

// Output index range [lo, hi) for which in = o*stride + k - pad lies in [0, n).
void valid_range(std::size_t n, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad,
                 std::size_t& lo, std::size_t& hi) {
    const long kk = static_cast<long>(k) - static_cast<long>(pad);
    long first = 0;
    if (kk < 0) first = (-kk + static_cast<long>(stride) - 1) / static_cast<long>(stride);
    long last = (static_cast<long>(n) - 1 - kk);
    last = last < 0 ? -1 : last / static_cast<long>(stride);
    lo = static_cast<std::size_t>(std::min<long>(first, static_cast<long>(out)));
    hi = static_cast<std::size_t>(std::clamp<long>(last + 1, static_cast<long>(lo), static_cast<long>(out)));
}

struct ConvDims {
    std::size_t n, ci, h, w, co, k, ho, wo;
};

ConvDims conv_dims(const Shape& x, const Shape& wt, ConvGeometry g) {
    require_rank(x, 4, "conv2d input");
    require_rank(wt, 4, "conv2d weight");
    if (x[1] != wt[1])
        throw DimensionError("conv2d: input axis 1 (channels=" + std::to_string(x[1]) +
                             ") does not match weight axis 1 (in-channels=" + std::to_string(wt[1]) + ")");
    if (wt[2] != wt[3])
        throw DimensionError("conv2d: weight axes 2 and 3 must be equal (square kernel), got " + shape_string(wt));
    if (g.stride == 0) throw DimensionError("conv2d: stride must be positive");
    ConvDims d{x[0], x[1], x[2], x[3], wt[0], wt[2], 0, 0};
    d.ho = conv_output_size(d.h, d.k, g.stride, g.pad);
    d.wo = conv_output_size(d.w, d.k, g.stride, g.pad);
    return d;
}

}  // namespace

std::size_t conv_output_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    if (k > in + 2 * pad)
        throw DimensionError("conv2d: kernel size " + std::to_string(k) + " exceeds padded input extent " +
                             std::to_string(in + 2 * pad) + " on a spatial axis");
    return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, ConvGeometry g) {
    const ConvDims d = conv_dims(x.shape(), w.shape(), g);
    BasicTensor<T> y({d.n, d.co, d.ho, d.wo});
    const T* xp = x.data().data();
    const T* wp = w.data().data();
    T* yp = y.data().data();
    parallel_chunks(d.n, [&](std::size_t, std::size_t nb, std::size_t ne) {
        for (std::size_t n = nb; n < ne; ++n)
            for (std::size_t co = 0; co < d.co; ++co) {
                T* out = yp + (n * d.co + co) * d.ho * d.wo;
                for (std::size_t ci = 0; ci < d.ci; ++ci) {
                    const T* in = xp + (n * d.ci + ci) * d.h * d.w;
                    for (std::size_t kh = 0; kh < d.k; ++kh) {
                        std::size_t oh0, oh1;
                        valid_range(d.h, d.ho, kh, g.stride, g.pad, oh0, oh1);
                        for (std::size_t kw = 0; kw < d.k; ++kw) {
                            const T wv = wp[((co * d.ci + ci) * d.k + kh) * d.k + kw];
                            if (wv == T{0}) continue;
                            std::size_t ow0, ow1;
                            valid_range(d.w, d.wo, kw, g.stride, g.pad, ow0, ow1);
                            for (std::size_t oh = oh0; oh < oh1; ++oh) {
                                const T* row = in + (oh * g.stride + kh - g.pad) * d.w;
                                T* orow = out + oh * d.wo;
                                for (std::size_t ow = ow0; ow < ow1; ++ow)
                                    orow[ow] += wv * row[ow * g.stride + kw - g.pad];
                            }
                        }
                    }
                }
            }
    });
    return y;
}

template <typename T>
BasicTensor<T> conv2d_grad_input(const BasicTensor<T>& gy, const BasicTensor<T>& w, const Shape& x_shape,
                                 ConvGeometry g) {
    const ConvDims d = conv_dims(x_shape, w.shape(), g);
    require_same(gy.shape(), Shape{d.n, d.co, d.ho, d.wo}, "conv2d backward: upstream gradient");
    BasicTensor<T> gx(x_shape);
    const T* gp = gy.data().data();
    const T* wp = w.data().data();
    T* xp = gx.data().data();
    parallel_chunks(d.n, [&](std::size_t, std::size_t nb, std::size_t ne) {
        for (std::size_t n = nb; n < ne; ++n)
            for (std::size_t co = 0; co < d.co; ++co) {
                const T* gout = gp + (n * d.co + co) * d.ho * d.wo;
                for (std::size_t ci = 0; ci < d.ci; ++ci) {
                    T* gin = xp + (n * d.ci + ci) * d.h * d.w;
                    for (std::size_t kh = 0; kh < d.k; ++kh) {
                        std::size_t oh0, oh1;
                        valid_range(d.h, d.ho, kh, g.stride, g.pad, oh0, oh1);
                        for (std::size_t kw = 0; kw < d.k; ++kw) {
                            const T wv = wp[((co * d.ci + ci) * d.k + kh) * d.k + kw];
                            if (wv == T{0}) continue;
                            std::size_t ow0, ow1;
                            valid_range(d.w, d.wo, kw, g.stride, g.pad, ow0, ow1);
                            for (std::size_t oh = oh0; oh < oh1; ++oh) {
                                T* row = gin + (oh * g.stride + kh - g.pad) * d.w;
                                const T* grow = gout + oh * d.wo;
                                for (std::size_t ow = ow0; ow < ow1; ++ow)
                                    row[ow * g.stride + kw - g.pad] += wv * grow[ow];
                            }
                        }
                    }
                }
            }
    });
    return gx;
}

template <typename T>
BasicTensor<T> conv2d_grad_weight(const BasicTensor<T>& gy, const BasicTensor<T>& x, const Shape& w_shape,
                                  ConvGeometry g) {
    const ConvDims d = conv_dims(x.shape(), w_shape, g);
    require_same(gy.shape(), Shape{d.n, d.co, d.ho, d.wo}, "conv2d backward: upstream gradient");
    const std::size_t chunks = chunk_count(d.n);
    std::vector<BasicTensor<T>> partial(chunks, BasicTensor<T>(w_shape));
    const T* gp = gy.data().data();
    const T* xp = x.data().data();
    parallel_chunks(d.n, [&](std::size_t c, std::size_t nb, std::size_t ne) {
        T* wp = partial[c].data().data();
        for (std::size_t n = nb; n < ne; ++n)
            for (std::size_t co = 0; co < d.co; ++co) {
                const T* gout = gp + (n * d.co + co) * d.ho * d.wo;
                for (std::size_t ci = 0; ci < d.ci; ++ci) {
                    const T* in = xp + (n * d.ci + ci) * d.h * d.w;
                    for (std::size_t kh = 0; kh < d.k; ++kh) {
                        std::size_t oh0, oh1;
                        valid_range(d.h, d.ho, kh, g.stride, g.pad, oh0, oh1);
                        for (std::size_t kw = 0; kw < d.k; ++kw) {
                            std::size_t ow0, ow1;
                            valid_range(d.w, d.wo, kw, g.stride, g.pad, ow0, ow1);
                            T acc{0};
                            for (std::size_t oh = oh0; oh < oh1; ++oh) {
                                const T* row = in + (oh * g.stride + kh - g.pad) * d.w;
                                const T* grow = gout + oh * d.wo;
                                for (std::size_t ow = ow0; ow < ow1; ++ow) acc += grow[ow] * row[ow * g.stride + kw - g.pad];
                            }
                            wp[((co * d.ci + ci) * d.k + kh) * d.k + kw] += acc;
                        }
                    }
                }
            }
    });
    for (std::size_t c = 1; c < chunks; ++c) axpy(partial[0], T{1}, partial[c]);
    return std::move(partial[0]);
}

namespace {

std::pair<std::size_t, std::size_t> linear_dims(const Shape& x, const Shape& w) {
    if (x.empty()) throw DimensionError("linear: input must have a batch axis");
    require_rank(w, 2, "linear weight");
    const std::size_t in = shape_size(x) / x[0];
    if (in != w[1])
        throw DimensionError("linear: input features (product of axes 1.. of " + shape_string(x) + " = " +
                             std::to_string(in) + ") do not match weight axis 1 (" + std::to_string(w[1]) + ")");
    return {x[0], in};
}

}  // namespace

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w) {
    const auto [n, in] = linear_dims(x.shape(), w.shape());
    const std::size_t out = w.dim(0);
    BasicTensor<T> y({n, out});
    const T* xp = x.data().data();
    const T* wp = w.data().data();
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < out; ++o) {
            T acc{0};
            const T* xr = xp + b * in;
            const T* wr = wp + o * in;
            for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
            y.at(b, o) = acc;
        }
    return y;
}

template <typename T>
BasicTensor<T> linear_grad_input(const BasicTensor<T>& gy, const BasicTensor<T>& w, const Shape& x_shape) {
    const auto [n, in] = linear_dims(x_shape, w.shape());
    const std::size_t out = w.dim(0);
    require_same(gy.shape(), Shape{n, out}, "linear backward: upstream gradient");
    BasicTensor<T> gx(x_shape);
    T* gp = gx.data().data();
    const T* wp = w.data().data();
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < out; ++o) {
            const T g = gy.at(b, o);
            if (g == T{0}) continue;
            const T* wr = wp + o * in;
            T* gr = gp + b * in;
            for (std::size_t i = 0; i < in; ++i) gr[i] += g * wr[i];
        }
    return gx;
}

template <typename T>
BasicTensor<T> linear_grad_weight(const BasicTensor<T>& gy, const BasicTensor<T>& x, const Shape& w_shape) {
    const auto [n, in] = linear_dims(x.shape(), w_shape);
    const std::size_t out = w_shape[0];
    require_same(gy.shape(), Shape{n, out}, "linear backward: upstream gradient");
    BasicTensor<T> gw(w_shape);
    const T* xp = x.data().data();
    T* wp = gw.data().data();
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < out; ++o) {
            const T g = gy.at(b, o);
            if (g == T{0}) continue;
            const T* xr = xp + b * in;
            T* wr = wp + o * in;
            for (std::size_t i = 0; i < in; ++i) wr[i] += g * xr[i];
        }
    return gw;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
    BasicTensor<T> y(x.shape());
    std::transform(x.data().begin(), x.data().end(), y.data().begin(), [](T v) { return v > T{0} ? v : T{0}; });
    return y;
}

template <typename T>
BasicTensor<T> relu_grad(const BasicTensor<T>& gy, const BasicTensor<T>& x) {
    require_same(gy.shape(), x.shape(), "relu backward");
    BasicTensor<T> gx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > T{0} ? gy[i] : T{0};
    return gx;
}

template <typename T>
BasicTensor<T> avgpool2d(const BasicTensor<T>& x, std::size_t k) {
    require_rank(x.shape(), 4, "avgpool2d input");
    if (k == 0 || k > x.dim(2) || k > x.dim(3))
        throw DimensionError("avgpool2d: window " + std::to_string(k) + " does not fit spatial axes of " +
                             shape_string(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), ho = x.dim(2) / k, wo = x.dim(3) / k;
    BasicTensor<T> y({n, c, ho, wo});
    const T inv = T{1} / static_cast<T>(k * k);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t oh = 0; oh < ho; ++oh)
                for (std::size_t ow = 0; ow < wo; ++ow) {
                    T acc{0};
                    for (std::size_t i = 0; i < k; ++i)
                        for (std::size_t j = 0; j < k; ++j) acc += x.at(b, ch, oh * k + i, ow * k + j);
                    y.at(b, ch, oh, ow) = acc * inv;
                }
    return y;
}

template <typename T>
BasicTensor<T> avgpool2d_grad(const BasicTensor<T>& gy, const Shape& x_shape, std::size_t k) {
    require_rank(x_shape, 4, "avgpool2d input");
    const std::size_t n = x_shape[0], c = x_shape[1], ho = x_shape[2] / k, wo = x_shape[3] / k;
    require_same(gy.shape(), Shape{n, c, ho, wo}, "avgpool2d backward: upstream gradient");
    BasicTensor<T> gx(x_shape);
    const T inv = T{1} / static_cast<T>(k * k);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t oh = 0; oh < ho; ++oh)
                for (std::size_t ow = 0; ow < wo; ++ow) {
                    const T g = gy.at(b, ch, oh, ow) * inv;
                    for (std::size_t i = 0; i < k; ++i)
                        for (std::size_t j = 0; j < k; ++j) gx.at(b, ch, oh * k + i, ow * k + j) = g;
                }
    return gx;
}

template <typename T>
BasicTensor<T> dropout_mask(const Shape& shape, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    BasicTensor<T> m(shape, T{1});
    if (rate == 0.0) return m;
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    for (auto& v : m.data()) v = rng.uniform() < rate ? T{0} : keep_scale;
    return m;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
    require_rank(logits.shape(), 2, "softmax logits");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    BasicTensor<T> p(logits.shape());
    for (std::size_t b = 0; b < n; ++b) {
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, logits.at(b, j));
        T z{0};
        for (std::size_t j = 0; j < k; ++j) z += (p.at(b, j) = std::exp(logits.at(b, j) - mx));
        for (std::size_t j = 0; j < k; ++j) p.at(b, j) /= z;
    }
    return p;
}

namespace {

void check_labels(std::span<const int> labels, std::size_t n, std::size_t k) {
    if (labels.size() != n)
        throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch axis " +
                             std::to_string(n));
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= k)
            throw DimensionError("softmax_cross_entropy: label " + std::to_string(y) + " outside class axis of size " +
                                 std::to_string(k));
}

}  // namespace

template <typename T>
T softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels) {
    require_rank(logits.shape(), 2, "softmax_cross_entropy logits");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    check_labels(labels, n, k);
    T total{0};
    for (std::size_t b = 0; b < n; ++b) {
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, logits.at(b, j));
        T z{0};
        for (std::size_t j = 0; j < k; ++j) z += std::exp(logits.at(b, j) - mx);
        total += std::log(z) + mx - logits.at(b, static_cast<std::size_t>(labels[b]));
    }
    return total / static_cast<T>(n);
}

template <typename T>
BasicTensor<T> softmax_cross_entropy_grad(const BasicTensor<T>& logits, std::span<const int> labels) {
    BasicTensor<T> g = softmax(logits);
    const std::size_t n = logits.dim(0);
    check_labels(labels, n, logits.dim(1));
    const T inv = T{1} / static_cast<T>(n);
    for (std::size_t b = 0; b < n; ++b) g.at(b, static_cast<std::size_t>(labels[b])) -= T{1};
    for (auto& v : g.data()) v *= inv;
    return g;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same(a.shape(), b.shape(), "add");
    BasicTensor<T> y(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
    return y;
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same(a.shape(), b.shape(), "mul");
    BasicTensor<T> y(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
    return y;
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s) {
    BasicTensor<T> y(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * s;
    return y;
}

template <typename T>
void axpy(BasicTensor<T>& a, T s, const BasicTensor<T>& b) {
    require_same(a.shape(), b.shape(), "axpy");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
}

template <typename T>
std::vector<int> argmax_rows(const BasicTensor<T>& logits) {
    require_rank(logits.shape(), 2, "argmax logits");
    std::vector<int> out(logits.dim(0));
    for (std::size_t b = 0; b < logits.dim(0); ++b) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.dim(1); ++j)
            if (logits.at(b, j) > logits.at(b, best)) best = j;
        out[b] = static_cast<int>(best);
    }
    return out;
}

#define SPARSNN_INSTANTIATE_OPS(T)                                                                           \
    template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, ConvGeometry);              \
    template BasicTensor<T> conv2d_grad_input(const BasicTensor<T>&, const BasicTensor<T>&, const Shape&,    \
                                              ConvGeometry);                                                 \
    template BasicTensor<T> conv2d_grad_weight(const BasicTensor<T>&, const BasicTensor<T>&, const Shape&,   \
                                               ConvGeometry);                                                \
    template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&);                            \
    template BasicTensor<T> linear_grad_input(const BasicTensor<T>&, const BasicTensor<T>&, const Shape&);   \
    template BasicTensor<T> linear_grad_weight(const BasicTensor<T>&, const BasicTensor<T>&, const Shape&);  \
    template BasicTensor<T> relu(const BasicTensor<T>&);                                                     \
    template BasicTensor<T> relu_grad(const BasicTensor<T>&, const BasicTensor<T>&);                         \
    template BasicTensor<T> avgpool2d(const BasicTensor<T>&, std::size_t);                                   \
    template BasicTensor<T> avgpool2d_grad(const BasicTensor<T>&, const Shape&, std::size_t);                \
    template BasicTensor<T> dropout_mask(const Shape&, double, Rng&);                                        \
    template T softmax_cross_entropy(const BasicTensor<T>&, std::span<const int>);                           \
    template BasicTensor<T> softmax_cross_entropy_grad(const BasicTensor<T>&, std::span<const int>);         \
    template BasicTensor<T> softmax(const BasicTensor<T>&);                                                  \
    template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                               \
    template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                               \
    template BasicTensor<T> scale(const BasicTensor<T>&, T);                                                 \
    template void axpy(BasicTensor<T>&, T, const BasicTensor<T>&);                                           \
    template std::vector<int> argmax_rows(const BasicTensor<T>&);

SPARSNN_INSTANTIATE_OPS(float)
SPARSNN_INSTANTIATE_OPS(double)

}  // namespace sparsnn::ops
