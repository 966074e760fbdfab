#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "sparsnn/io/checkpoint.hpp"
#include "sparsnn/io/config.hpp"
#include "sparsnn/io/dataset.hpp"

namespace sparsnn {

struct RunData {
    Dataset train;
    Dataset test;
    Normalization norm;
};

// Loads the train/test sets named by the config. The normalization is fitted
// on the training set when data.normalize is on.
RunData load_run_data(const RunConfig& cfg);

// Network input for the ANN and the direct-coded SNN (normalized) or for
// Poisson coding (raw [0,1] pixels).
Tensor model_input(const Tensor& images, const Normalization& norm, bool normalize);
Tensor snn_input(const Tensor& images, const Normalization& norm, const SnnTrainConfig& snn);

struct AnnRun {
    Checkpoint checkpoint;
    std::vector<AgcEpochLog> epochs;
    std::vector<double> test_accuracy;
    SparsityDiagnostics sparsity_diag;
    AgDiagnostics attention_diag;
};

// Attention-guided sparse training from scratch. `meta` is required when
// attention.alpha > 0.
AnnRun run_train_ann(const RunConfig& cfg, const RunData& data, const Checkpoint* meta, std::ostream* log = nullptr);

struct ConvertRun {
    Checkpoint checkpoint;
    CalibrationReport calibration;
    // Test accuracy of the converted network at the configured T.
    double test_accuracy = 0.0;
};

ConvertRun run_convert(const Checkpoint& ann, const RunConfig& cfg, const RunData& data, std::ostream* log = nullptr);

struct SnnRun {
    Checkpoint checkpoint;
    std::vector<EpochStats> epochs;
    std::vector<double> test_accuracy;
};

SnnRun run_train_snn(const Checkpoint& in, const RunConfig& cfg, const RunData& data, std::ostream* log = nullptr);

struct ProfileRun {
    std::vector<MetricsRow> rows;
    // Ordered summary metrics (accuracy, energies, compression ratios).
    std::vector<std::pair<std::string, double>> summary;
    SpikeRecord record;
};

// Read-only: never modifies the checkpoint. ANN-stage checkpoints get the
// ANN FLOPs only; converted and SNN checkpoints are run over `data` to
// collect spike statistics.
ProfileRun run_profile(const Checkpoint& ckpt, const Dataset& data, const RunConfig& cfg);

std::string ann_log_csv(const AnnRun& run);
std::string sparsity_csv(const AnnRun& run);
std::string snn_log_csv(const SnnRun& run);
std::string summary_csv(const ProfileRun& run);

// Command-line entry point: train-ann, convert, train-snn, profile, make-toy.
// Returns 0 on success, 1 on user errors and 2 on internal invariant
// failures; every error prints one "error: kind=... message=..." line.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sparsnn
