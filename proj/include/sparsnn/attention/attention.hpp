#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "sparsnn/models/model.hpp"

namespace sparsnn {

// Which activations of the compressed model are matched against which
// activations of the meta model, and how strongly.
struct AttentionPairing {
    // (layer index in the compressed model, layer index in the meta model);
    // the output of each named layer is the activation block.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    int power = 2;
    double alpha = 100.0;
    std::size_t cutoff_epoch = 100;
    // Use the squared distance instead of the plain L2 distance.
    bool squared = false;

    // Requires power >= 1, alpha >= 0 and equal H x W for every pair.
    void validate(const ModelSpec& compressed, const ModelSpec& meta) const;
};

// Post-ReLU output of the last conv of each same-resolution stage, paired by
// equal spatial size.
std::vector<std::pair<std::size_t, std::size_t>> default_attention_pairs(const ModelSpec& compressed,
                                                                         const ModelSpec& meta);

// out[h,w] = sum_c |A[c,h,w]|^p for one sample's [C,H,W] block.
template <typename T>
BasicTensor<T> attention_map(const BasicTensor<T>& activation, int p);

// Batched form: [N,C,H,W] -> [N, H*W] (flattened per sample).
template <typename T>
BasicTensor<T> attention_maps(const BasicTensor<T>& activations, int p);

struct AgDiagnostics {
    // Maps whose L2 norm was zero and fell back to the 1e-12 floor.
    std::size_t degenerate_maps = 0;
};

inline constexpr double kAttentionNormFloor = 1e-12;

// (alpha/2) * sum over pairs of the batch mean of
//   || Qc/||Qc|| - Qm/||Qm|| ||_2   (or its square when `squared`).
// Each map is [N, H*W].
template <typename T>
T ag_loss(const std::vector<BasicTensor<T>>& maps_c, const std::vector<BasicTensor<T>>& maps_m, double alpha,
          bool squared = false, AgDiagnostics* diag = nullptr);

template <typename T>
struct AgLossResult {
    T loss{0};
    // d loss / d activation of the compressed model, one per pair, same shape
    // as the activation block.
    std::vector<BasicTensor<T>> grads;
};

// Loss and its gradient with respect to the compressed model's activation
// blocks. The meta activations are constants.
template <typename T>
AgLossResult<T> ag_loss_with_grad(const std::vector<BasicTensor<T>>& acts_c,
                                  const std::vector<BasicTensor<T>>& acts_m, int p, double alpha, bool squared,
                                  AgDiagnostics* diag = nullptr);

// alpha while epoch < cutoff, 0 afterwards.
double effective_alpha(double alpha, std::size_t epoch, std::size_t cutoff_epoch);

// ce + ag while epoch < cutoff, exactly ce afterwards.
double combined_loss(double ce, double ag, std::size_t epoch, std::size_t cutoff_epoch);

}  // namespace sparsnn
