#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsnn/numerics/rng.hpp"
#include "sparsnn/numerics/tape.hpp"
#include "sparsnn/sparse/mask.hpp"

namespace sparsnn {

// Layer kinds a conversion-friendly network may use. There is deliberately
// no batch-norm, max-pool or bias.
enum class LayerKind { Conv, Linear, Relu, AvgPool, Dropout };

const char* layer_kind_name(LayerKind kind);

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    // Conv: output channels. Linear: output features.
    std::size_t units = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t pad = 0;
    // AvgPool window (stride equals window).
    std::size_t pool = 2;
    double dropout = 0.0;

    static LayerSpec conv(std::size_t out, std::size_t k, std::size_t stride = 1, std::size_t pad = 1);
    static LayerSpec linear(std::size_t out);
    static LayerSpec relu();
    static LayerSpec avgpool(std::size_t k = 2);
    static LayerSpec dropout_layer(double rate);

    bool has_weight() const { return kind == LayerKind::Conv || kind == LayerKind::Linear; }
};

// Sequential network description. `input` is per-sample [C, H, W].
struct ModelSpec {
    std::string name = "custom";
    Shape input;
    std::size_t num_classes = 0;
    std::vector<LayerSpec> layers;

    // Throws DimensionError / ConfigError on inconsistent geometry or when the
    // network does not end in exactly one classifier head.
    void validate() const;

    // Per-sample output shape of every layer.
    std::vector<Shape> output_shapes() const;
    // Per-sample input shape of every layer.
    std::vector<Shape> input_shapes() const;

    // Layer indices of conv/linear layers, in order.
    std::vector<std::size_t> weight_layers() const;
    Shape weight_shape(std::size_t layer) const;
    // A weight layer followed directly by ReLU becomes a spiking layer in the
    // SNN; the classifier head is the only weight layer that is not.
    bool is_spiking(std::size_t layer) const;

    // Compact one-line form: "input=1x8x8;classes=10;conv:16:3:1:1,relu,...".
    std::string serialize() const;
    static ModelSpec parse(const std::string& text);
};

struct PresetOptions {
    Shape input{3, 32, 32};
    std::size_t num_classes = 10;
    double conv_dropout = 0.2;
    double linear_dropout = 0.5;
};

// "vgg-mini", "vgg9-meta" or "vgg16".
ModelSpec preset_model(const std::string& name, const PresetOptions& opts);

// Parameters of one conv/linear layer.
template <typename T>
struct ParamLayer {
    std::size_t layer = 0;
    std::string name;
    BasicTensor<T> weight;
    PruneMask mask;
    BasicTensor<T> momentum;
    // Spiking-neuron parameters; unused by the ANN.
    T threshold{1};
    T leak{1};
};

template <typename T>
struct BasicModelState {
    std::vector<ParamLayer<T>> params;
    PruneMode mode = PruneMode::Irregular;
    std::uint64_t step = 0;
    std::uint64_t epoch = 0;

    ParamLayer<T>& param_for_layer(std::size_t layer);
    const ParamLayer<T>& param_for_layer(std::size_t layer) const;

    std::size_t total_weights() const;
    std::size_t active_weights() const;
    void apply_masks();

    template <typename U>
    BasicModelState<U> cast() const {
        BasicModelState<U> out;
        out.mode = mode;
        out.step = step;
        out.epoch = epoch;
        for (const auto& p : params)
            out.params.push_back({p.layer, p.name, BasicTensor<U>::cast(p.weight), p.mask,
                                  BasicTensor<U>::cast(p.momentum), static_cast<U>(p.threshold),
                                  static_cast<U>(p.leak)});
        return out;
    }
};

using ModelState = BasicModelState<float>;

// He-normal fan-in initialization, all-ones masks, zero momentum.
template <typename T>
BasicModelState<T> build_model(const ModelSpec& spec, std::uint64_t seed);

template <typename T>
struct AnnForward {
    Tape<T> tape;
    Var logits;
    // Output of every layer, indexed like spec.layers.
    std::vector<Var> activations;
    // Masked weight leaf of every parameter layer, indexed like state.params.
    std::vector<Var> weights;
};

// Forward pass recorded on a tape. Masks are applied to the weights before
// use; the weight leaves are the masked weights, so their gradients are dense
// (the sparse optimizer needs momentum at pruned positions for regrowth).
// `dropout_rng` is required when train_mode is true.
template <typename T>
AnnForward<T> ann_forward(const BasicModelState<T>& state, const ModelSpec& spec, const BasicTensor<T>& batch,
                          bool train_mode, Rng* dropout_rng = nullptr);

// Inference without a tape: the output of every layer (last one = logits).
template <typename T>
std::vector<BasicTensor<T>> ann_infer(const BasicModelState<T>& state, const ModelSpec& spec,
                                      const BasicTensor<T>& batch);

// Check a batch tensor against the model input geometry.
void check_batch_shape(const ModelSpec& spec, const Shape& batch_shape);

}  // namespace sparsnn
