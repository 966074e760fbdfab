#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "sparsnn/encoding/encoding.hpp"
#include "sparsnn/metrics/spike_record.hpp"
#include "sparsnn/models/model.hpp"

namespace sparsnn {

// Energy per accumulate and per multiply-accumulate, in abstract units by
// default (E_AC = 1). Absolute values such as pJ work the same way.
struct EnergyModel {
    double e_ac = 1.0;
    double e_mac = 32.0;

    void validate() const;
};

// Output spikes per neuron over the window, averaged over samples.
double spike_activity(const LayerActivity& layer, std::size_t samples);
std::vector<double> spike_activity(const SpikeRecord& rec);

// Mean input events per input position per sample (the zeta that scales
// FL_SNN for this layer).
double input_activity(const LayerActivity& layer, std::size_t samples);

enum class FlopsVariant { Ann, AnnCompressed, Snn, SnnCompressed };

const char* flops_variant_name(FlopsVariant v);

// Conv geometry of one weight layer. Linear layers use k = 1, Ho = Wo = 1 and
// Hi = Wi = 1 with C_in input features.
struct LayerGeometry {
    std::size_t kernel = 1;
    std::size_t c_in = 0, c_out = 0;
    std::size_t h_in = 1, w_in = 1;
    std::size_t h_out = 1, w_out = 1;
    std::size_t stride = 1, pad = 0;
};

LayerGeometry layer_geometry(const ModelSpec& spec, std::size_t layer);

// k^2 * Ho * Wo * Co * Ci.
double flops_ann(const LayerGeometry& g);
// FL_ANN * d.
double flops_ann_compressed(const LayerGeometry& g, double density);
// FL_ANN * zeta.
double flops_snn(const LayerGeometry& g, double zeta);

// sum over output positions (x,y), output channels p, input channels n and
// kernel offsets (i,j) of events[n, x*s+i-pad, y*s+j-pad] * m[p,n,i,j], with
// events outside the input counted as zero. Integer when events are counts.
std::uint64_t snn_compressed_ops(const LayerGeometry& g, const PruneMask& mask,
                                 const std::vector<std::uint64_t>& input_events);
// FL_SNN_C: the operation count above per sample.
double flops_snn_compressed(const LayerGeometry& g, const PruneMask& mask, const std::vector<std::uint64_t>& input_events,
                            std::size_t samples);

struct LayerEnergy {
    std::string layer;
    double flops = 0.0;
    double energy = 0.0;
    // Billed per multiply-accumulate rather than per accumulate.
    bool mac = false;
};

struct EnergyReport {
    std::vector<LayerEnergy> layers;
    double total = 0.0;
};

// SNN: with direct input the first layer costs FL_ANN_C multiply-accumulates
// and every later layer FL_SNN_C accumulates; with rate input every layer
// costs FL_SNN_C accumulates.
EnergyReport snn_energy(const ModelSpec& spec, const ModelState& state, const SpikeRecord& rec, Encoding encoding,
                        const EnergyModel& em);
// ANN: FL_ANN (dense) or FL_ANN_C (compressed) multiply-accumulates.
EnergyReport ann_energy(const ModelSpec& spec, const ModelState& state, bool compressed, const EnergyModel& em);

struct CompressionRatios {
    double weight = 1.0;
    double channel = 1.0;
};

// total weights / nonzero-mask weights; total conv input channels / channels
// whose masked weight slice has a nonzero F-norm.
CompressionRatios compression_ratios(const ModelState& state, const ModelSpec& spec);

struct MetricsRow {
    std::string layer;
    double density = 0.0;
    double zeta = 0.0;
    FlopsVariant variant = FlopsVariant::Ann;
    double flops = 0.0;
    double energy_units = 0.0;
};

// Per-layer rows. Spike-based variants are emitted only when `rec` is given.
std::vector<MetricsRow> metrics_rows(const ModelSpec& spec, const ModelState& state, const SpikeRecord* rec,
                                     const EnergyModel& em);

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows);

}  // namespace sparsnn
