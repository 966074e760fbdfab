#include "sparsnn/models/data.hpp"

#include <cstring>
#include <numeric>

#include "sparsnn/numerics/rng.hpp"

namespace sparsnn {

Tensor gather_batch(const Tensor& images, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) {
    SPARSNN_CHECK(begin < end && end <= idx.size(), "batch range outside the index list");
    Shape s = images.shape();
    const std::size_t per = images.size() / s[0];
    s[0] = end - begin;
    Tensor out(s);
    for (std::size_t i = begin; i < end; ++i) {
        SPARSNN_CHECK(idx[i] < images.dim(0), "sample index out of range");
        std::memcpy(out.data().data() + (i - begin) * per, images.data().data() + idx[i] * per, per * sizeof(float));
    }
    return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<std::size_t>& idx, std::size_t begin,
                               std::size_t end) {
    std::vector<int> out;
    out.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) out.push_back(labels.at(idx[i]));
    return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order = identity_order(n);
    Rng rng = make_rng(splitmix64(seed) ^ static_cast<std::uint64_t>(epoch)).split("shuffle");
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    return order;
}

std::vector<std::size_t> identity_order(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

}  // namespace sparsnn
