#pragma once

#include <cstdint>
#include <vector>

#include "sparsnn/attention/attention.hpp"
#include "sparsnn/models/data.hpp"
#include "sparsnn/models/optimizer.hpp"
#include "sparsnn/sparse/sparse_learning.hpp"

namespace sparsnn {

// Attention-guided sparse training of the ANN.
struct AgcConfig {
    OptimizerConfig optimizer{OptimizerKind::SgdMomentum, 0.01, 0.9, 5e-4, {{150, 0.1}, {180, 0.1}, {210, 0.1}}};
    std::size_t epochs = 240;
    std::size_t batch_size = 64;
    SparsitySchedule sparsity;
    AttentionPairing attention;

    void validate() const;
};

// The frozen guide network whose attention maps steer early training.
struct MetaModel {
    const ModelSpec* spec = nullptr;
    const ModelState* state = nullptr;
};

struct AgcEpochLog {
    std::size_t epoch = 0;
    double lr = 0.0;
    double ce = 0.0;
    double ag = 0.0;
    double train_accuracy = 0.0;
    double prune_rate = 0.0;
    double density = 1.0;
    std::vector<SparsityRecord> sparsity;
    EpochMaskUpdate update;
};

// One epoch: per batch CE (+ AG while epoch < cutoff) backward, masked SGD
// with momentum; then, when the target density is below 1, the end-of-epoch
// prune/regrow at the linearly decayed rate.
AgcEpochLog agc_train_epoch(ModelState& state, const ModelSpec& spec, const DataView& train, const AgcConfig& cfg,
                            std::size_t epoch, std::uint64_t seed, const MetaModel& meta = {},
                            SparsityDiagnostics* sdiag = nullptr, AgDiagnostics* adiag = nullptr);

// Plain SGD training epoch (no masks beyond the current ones, no AG); used
// for the dense meta model.
AgcEpochLog dense_train_epoch(ModelState& state, const ModelSpec& spec, const DataView& train, const AgcConfig& cfg,
                              std::size_t epoch, std::uint64_t seed);

struct AnnEvalResult {
    double accuracy = 0.0;
    double loss = 0.0;
};

AnnEvalResult ann_evaluate(const ModelState& state, const ModelSpec& spec, const DataView& data,
                           std::size_t batch_size = 256);

}  // namespace sparsnn
