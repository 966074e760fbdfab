#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsnn/models/model.hpp"
#include "sparsnn/sparse/mask.hpp"

namespace sparsnn {

struct SparsitySchedule {
    double density = 1.0;
    double initial_prune_rate = 0.5;
    std::size_t epochs = 1;
    PruneMode mode = PruneMode::Irregular;

    void validate() const;
};

// Counters for the fallback paths; surfaced in logs.
struct SparsityDiagnostics {
    // Layers whose initial budget rounded to zero and were floored at one
    // weight (or one channel).
    std::size_t floored_layers = 0;
    // Prune steps that would have emptied a layer and kept its largest entry.
    std::size_t retained_layers = 0;
    // Redistributions with zero total momentum that fell back to uniform.
    std::size_t cold_starts = 0;
};

// One row of the per-epoch sparsity report.
struct SparsityRecord {
    std::size_t epoch = 0;
    std::string layer;
    double density = 0.0;
    std::size_t pruned = 0;
    std::size_t regrown = 0;
};

// Irregular mode prunes every conv/linear layer; channel mode only convs.
bool is_prunable(const ModelSpec& spec, std::size_t layer, PruneMode mode);

// Random budgeted masks: round(d * n) weights per prunable layer (irregular)
// or round(d * C_in) whole channels per conv layer (channel). Weights are
// zeroed where the mask is off.
void init_masks(ModelState& state, const ModelSpec& spec, double density, PruneMode mode, std::uint64_t seed,
                SparsityDiagnostics* diag = nullptr);

// out[c] = sum of W[:, c, :, :]^2 (squared Frobenius norm of each input
// channel slice).
template <typename T>
std::vector<double> channel_fnorm(const BasicTensor<T>& weight);

struct PruneResult {
    // Weights freed per parameter layer.
    std::vector<std::size_t> pruned;
    std::size_t total = 0;
};

// Drops ceil(rate * nnz) smallest-magnitude active weights per prunable layer
// (irregular) or ceil(rate * active channels) lowest-F-norm channels (channel).
// A layer never drops to zero: its largest entry is retained.
PruneResult prune_step(ModelState& state, const ModelSpec& spec, double rate, PruneMode mode,
                       SparsityDiagnostics* diag = nullptr);

// Share of total momentum mass (sum of |mu| over active positions) held by
// each parameter layer; zero for layers that are not prunable.
std::vector<double> momentum_shares(const ModelState& state, const ModelSpec& spec, PruneMode mode,
                                    SparsityDiagnostics* diag = nullptr);

// Largest-remainder rounding of shares * total; the result sums to total.
// Ties go to the lower layer index.
std::vector<std::size_t> allocate_quotas(const std::vector<double>& shares, std::size_t total);

// Regrow quotas (in weights) for the pT freed weights.
std::vector<std::size_t> momentum_redistribution(const ModelState& state, const ModelSpec& spec, std::size_t pruned_total,
                                                 PruneMode mode, SparsityDiagnostics* diag = nullptr);

// Enables masked positions with the largest |mu| (irregular) or masked
// channels with the largest momentum F-norm (channel). Regrown weights start
// at zero and keep their momentum. Quota a layer cannot absorb spills to the
// next layer in quota order. Returns weights regrown per parameter layer.
std::vector<std::size_t> regrow(ModelState& state, const ModelSpec& spec, const std::vector<std::size_t>& quotas,
                                PruneMode mode);

// p0 * (1 - epoch/total_epochs), floored at 0.
double linear_decay(double initial_rate, std::size_t epoch, std::size_t total_epochs);

struct EpochMaskUpdate {
    double rate = 0.0;
    PruneResult pruned;
    std::vector<std::size_t> quotas;
    std::vector<std::size_t> regrown;
    std::size_t active_before = 0;
    std::size_t active_after = 0;
};

// End-of-epoch step: momentum shares (on the pre-prune masks), prune at
// `rate`, regrow the freed budget by momentum, reapply masks. Irregular mode
// regrows exactly what was freed. Channel mode regrows whole channels whose
// sizes differ between layers; with `target_active` > 0 it regrows towards
// that global count instead of the freed count, so the rounding error stays
// within half a channel slice rather than accumulating over epochs.
EpochMaskUpdate sparse_epoch_update(ModelState& state, const ModelSpec& spec, double rate, PruneMode mode,
                                    SparsityDiagnostics* diag = nullptr, std::size_t target_active = 0);

// Weights a model at density d should keep active: every non-prunable
// weight plus round(d * prunable weights).
std::size_t active_budget(const ModelState& state, const ModelSpec& spec, double density, PruneMode mode);

// Active / total weights over the prunable layers.
double prunable_density(const ModelState& state, const ModelSpec& spec, PruneMode mode);

std::vector<SparsityRecord> sparsity_report(const ModelState& state, std::size_t epoch,
                                            const EpochMaskUpdate* update = nullptr);

}  // namespace sparsnn
