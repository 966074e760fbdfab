#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sparsnn/encoding/encoding.hpp"
#include "sparsnn/metrics/spike_record.hpp"
#include "sparsnn/models/data.hpp"
#include "sparsnn/models/model.hpp"
#include "sparsnn/models/optimizer.hpp"

namespace sparsnn {

enum class NeuronModel { IF, LIF };

const char* neuron_model_name(NeuronModel m);
NeuronModel parse_neuron_model(const std::string& s);

struct NeuronConfig {
    NeuronModel model = NeuronModel::LIF;
    // Surrogate damping.
    double gamma = 0.3;

    void validate() const;
};

template <typename T>
struct LifStep {
    // lambda*u + input, before the threshold test.
    BasicTensor<T> u_acc;
    // After the soft reset.
    BasicTensor<T> u_next;
    BasicTensor<T> spikes;
};

// u_acc = leak*u + input; spike where u_acc > vth (strict); u_next = u_acc - vth*spike.
template <typename T>
LifStep<T> lif_step(const BasicTensor<T>& u, const BasicTensor<T>& input, T leak, T vth);

// gamma * max(0, 1 - |z|), z = u/vth - 1.
double surrogate_grad(double z, double gamma);

// Everything backward needs from one forward window.
template <typename T>
struct SnnTrace {
    std::size_t timesteps = 0;
    // values[t][i]: input of layer i at step t; values[t][L] is the head
    // output at step t.
    std::vector<std::vector<BasicTensor<T>>> values;
    // For the ReLU slot of a spiking layer: u_acc at step t and the membrane
    // after the previous step (zero at t = 0). Empty elsewhere.
    std::vector<std::vector<BasicTensor<T>>> u_acc;
    std::vector<std::vector<BasicTensor<T>>> u_prev;
    // Per dropout layer, the mask shared by all steps of the window.
    std::vector<BasicTensor<T>> dropout_masks;
};

template <typename T>
struct SnnForward {
    // Head inputs accumulated over T, [N, classes].
    BasicTensor<T> scores;
    SnnTrace<T> trace;
    SpikeRecord record;
};

template <typename T>
struct SnnForwardOptions {
    // Keep the trace for backward.
    bool keep_trace = false;
    bool record_spikes = false;
    // Sample dropout masks (training); needs `dropout_rng`.
    bool train_mode = false;
    Rng* dropout_rng = nullptr;
    // Stop after this layer (calibration); the scores are then empty.
    std::size_t stop_after = static_cast<std::size_t>(-1);
    // Called with (layer index, t, pre-activation) for every weight layer.
    std::function<void(std::size_t, std::size_t, const BasicTensor<T>&)>* on_preactivation = nullptr;
};

// Runs the network for the window's T steps (frames are cast to T). Spiking
// layers are weight layers followed by ReLU (the ReLU becomes the neuron);
// pooling and dropout act on the spike maps; the head accumulates its raw
// input over T. Membranes start at zero for every window.
template <typename T>
SnnForward<T> snn_forward(const BasicModelState<T>& state, const ModelSpec& spec, const InputWindow& window,
                          const SnnForwardOptions<T>& opts = {});

template <typename T>
struct SnnGradients {
    // Masked weight gradients, one per parameter layer.
    std::vector<BasicTensor<T>> weights;
    // Per parameter layer; zero for the head.
    std::vector<T> thresholds;
    std::vector<T> leaks;
};

// BPTT through the recorded window given dL/dscores. The reset term is not
// differentiated; the surrogate replaces dO/du at every neuron and step.
template <typename T>
SnnGradients<T> snn_backward(const BasicModelState<T>& state, const ModelSpec& spec, const SnnTrace<T>& trace,
                             const BasicTensor<T>& grad_scores, double gamma);

// Linear-interpolated percentile (q in [0,100]) of the values; reorders them.
double percentile(std::vector<float>& values, double q);

struct CalibrationConfig {
    std::size_t timesteps = 10;
    double percentile = 99.7;
    double scale = 0.4;
};

struct CalibrationReport {
    std::vector<double> thresholds;
    // Layers whose distribution had no positive percentile and fell back to 1.
    std::vector<std::string> warnings;
};

// vth for one layer from its pre-activation samples.
double threshold_from_samples(std::vector<float>& samples, double percentile, double scale, bool* fallback = nullptr);

// Sets each spiking layer's threshold in order, running the partially
// calibrated network (leak 1) over the calibration window. Leaks are reset to
// 1 afterwards.
CalibrationReport calibrate_thresholds(ModelState& state, const ModelSpec& spec, const InputWindow& calib,
                                       const CalibrationConfig& cfg);

struct SnnTrainConfig {
    std::size_t timesteps = 10;
    Encoding encoding = Encoding::Direct;
    NeuronConfig neuron;
    OptimizerConfig optimizer{OptimizerKind::Adam, 1e-4, 0.0, 0.0, {{12, 0.5}, {16, 0.5}, {18, 0.5}}};
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    bool train_weights = true;
    bool train_threshold = true;
    bool train_leak = true;
    double min_threshold = 1e-3;
    // Abort when a batch loss exceeds this multiple of the first batch loss.
    double divergence_factor = 10.0;

    void validate() const;
};

struct EpochStats {
    std::size_t epoch = 0;
    double loss = 0.0;
    double accuracy = 0.0;
    std::size_t samples = 0;
};

// Optimizer state carried across epochs.
struct SnnTrainer {
    Adam<float> adam;
    double initial_loss = -1.0;
};

// One epoch of Adam over masked weights, thresholds and leaks with shuffled
// mini-batches. Masks do not change.
EpochStats snn_train_epoch(ModelState& state, const ModelSpec& spec, const DataView& data, const SnnTrainConfig& cfg,
                           SnnTrainer& trainer, std::size_t epoch, std::uint64_t seed);

struct SnnEvalResult {
    double accuracy = 0.0;
    double loss = 0.0;
    SpikeRecord record;
};

SnnEvalResult snn_evaluate(const ModelState& state, const ModelSpec& spec, const DataView& data,
                           std::size_t timesteps, Encoding encoding, std::size_t batch_size, std::uint64_t seed,
                           bool record_spikes = false);

}  // namespace sparsnn
