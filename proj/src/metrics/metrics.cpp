#include "sparsnn/metrics/metrics.hpp"

#include <iomanip>

#include "sparsnn/sparse/sparse_learning.hpp"

namespace sparsnn {

void SpikeRecord::merge(const SpikeRecord& o) {
    if (layers.empty() && samples == 0) {
        *this = o;
        return;
    }
    if (o.timesteps != timesteps || o.layers.size() != layers.size())
        throw InvariantError("cannot merge spike records of different models or window lengths");
    samples += o.samples;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& a = layers[i];
        const auto& b = o.layers[i];
        if (a.layer != b.layer || a.input_events.size() != b.input_events.size())
            throw InvariantError("cannot merge spike records: layer " + std::to_string(i) + " differs");
        a.spikes += b.spikes;
        for (std::size_t k = 0; k < a.input_events.size(); ++k) a.input_events[k] += b.input_events[k];
    }
}

void EnergyModel::validate() const {
    if (!(e_ac > 0.0 && e_mac > e_ac)) throw ConfigError("energy model needs E_MAC > E_AC > 0");
}

double spike_activity(const LayerActivity& l, std::size_t samples) {
    if (l.neurons == 0 || samples == 0) return 0.0;
    return static_cast<double>(l.spikes) / (static_cast<double>(l.neurons) * static_cast<double>(samples));
}

std::vector<double> spike_activity(const SpikeRecord& rec) {
    std::vector<double> out;
    for (const auto& l : rec.layers) out.push_back(spike_activity(l, rec.samples));
    return out;
}

double input_activity(const LayerActivity& l, std::size_t samples) {
    if (l.input_events.empty() || samples == 0) return 0.0;
    double s = 0.0;
    for (auto v : l.input_events) s += static_cast<double>(v);
    return s / (static_cast<double>(l.input_events.size()) * static_cast<double>(samples));
}

const char* flops_variant_name(FlopsVariant v) {
    switch (v) {
        case FlopsVariant::Ann: return "FL_ANN";
        case FlopsVariant::AnnCompressed: return "FL_ANN_C";
        case FlopsVariant::Snn: return "FL_SNN";
        case FlopsVariant::SnnCompressed: return "FL_SNN_C";
    }
    return "?";
}

LayerGeometry layer_geometry(const ModelSpec& spec, std::size_t layer) {
    const LayerSpec& l = spec.layers.at(layer);
    const Shape in = spec.input_shapes().at(layer);
    const Shape out = spec.output_shapes().at(layer);
    LayerGeometry g;
    if (l.kind == LayerKind::Conv) {
        g.kernel = l.kernel;
        g.c_in = in[0];
        g.h_in = in[1];
        g.w_in = in[2];
        g.c_out = out[0];
        g.h_out = out[1];
        g.w_out = out[2];
        g.stride = l.stride;
        g.pad = l.pad;
    } else if (l.kind == LayerKind::Linear) {
        g.c_in = shape_size(in);
        g.c_out = l.units;
    } else {
        throw InvariantError("layer " + std::to_string(layer) + " has no weight");
    }
    return g;
}

double flops_ann(const LayerGeometry& g) {
    return static_cast<double>(g.kernel * g.kernel) * static_cast<double>(g.h_out * g.w_out) *
           static_cast<double>(g.c_out) * static_cast<double>(g.c_in);
}

double flops_ann_compressed(const LayerGeometry& g, double density) { return flops_ann(g) * density; }

double flops_snn(const LayerGeometry& g, double zeta) { return flops_ann(g) * zeta; }

std::uint64_t snn_compressed_ops(const LayerGeometry& g, const PruneMask& mask,
                                 const std::vector<std::uint64_t>& ev) {
    const std::size_t k = g.kernel;
    if (mask.size() != g.c_out * g.c_in * k * k)
        throw DimensionError("FL_SNN_C: mask " + shape_string(mask.shape()) + " does not match the layer geometry");
    if (ev.size() != g.c_in * g.h_in * g.w_in)
        throw DimensionError("FL_SNN_C needs per-position input counts for all " +
                             std::to_string(g.c_in * g.h_in * g.w_in) + " input positions, got " +
                             std::to_string(ev.size()));
    // Active output channels per (n, i, j).
    std::vector<std::uint64_t> fan(g.c_in * k * k, 0);
    for (std::size_t p = 0; p < g.c_out; ++p)
        for (std::size_t r = 0; r < g.c_in * k * k; ++r) fan[r] += mask[p * g.c_in * k * k + r];
    std::uint64_t total = 0;
    for (std::size_t n = 0; n < g.c_in; ++n)
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                const std::uint64_t f = fan[(n * k + i) * k + j];
                if (f == 0) continue;
                std::uint64_t s = 0;
                for (std::size_t x = 0; x < g.h_out; ++x) {
                    const long hi = static_cast<long>(x * g.stride + i) - static_cast<long>(g.pad);
                    if (hi < 0 || hi >= static_cast<long>(g.h_in)) continue;
                    for (std::size_t y = 0; y < g.w_out; ++y) {
                        const long wi = static_cast<long>(y * g.stride + j) - static_cast<long>(g.pad);
                        if (wi < 0 || wi >= static_cast<long>(g.w_in)) continue;
                        s += ev[(n * g.h_in + static_cast<std::size_t>(hi)) * g.w_in + static_cast<std::size_t>(wi)];
                    }
                }
                total += f * s;
            }
    return total;
}

double flops_snn_compressed(const LayerGeometry& g, const PruneMask& mask, const std::vector<std::uint64_t>& ev,
                            std::size_t samples) {
    if (samples == 0) throw InvariantError("FL_SNN_C needs at least one recorded sample");
    return static_cast<double>(snn_compressed_ops(g, mask, ev)) / static_cast<double>(samples);
}

EnergyReport snn_energy(const ModelSpec& spec, const ModelState& state, const SpikeRecord& rec, Encoding encoding,
                        const EnergyModel& em) {
    em.validate();
    if (rec.layers.size() != state.params.size())
        throw InvariantError("spike record covers " + std::to_string(rec.layers.size()) + " layers, model has " +
                             std::to_string(state.params.size()));
    EnergyReport r;
    for (std::size_t i = 0; i < state.params.size(); ++i) {
        const auto& p = state.params[i];
        const LayerGeometry g = layer_geometry(spec, p.layer);
        LayerEnergy e;
        e.layer = p.name;
        if (i == 0 && encoding == Encoding::Direct) {
            e.mac = true;
            e.flops = flops_ann_compressed(g, p.mask.density());
            e.energy = e.flops * em.e_mac;
        } else {
            e.flops = flops_snn_compressed(g, p.mask, rec.layers[i].input_events, rec.samples);
            e.energy = e.flops * em.e_ac;
        }
        r.total += e.energy;
        r.layers.push_back(e);
    }
    return r;
}

EnergyReport ann_energy(const ModelSpec& spec, const ModelState& state, bool compressed, const EnergyModel& em) {
    em.validate();
    EnergyReport r;
    for (const auto& p : state.params) {
        const LayerGeometry g = layer_geometry(spec, p.layer);
        LayerEnergy e;
        e.layer = p.name;
        e.mac = true;
        e.flops = compressed ? flops_ann_compressed(g, p.mask.density()) : flops_ann(g);
        e.energy = e.flops * em.e_mac;
        r.total += e.energy;
        r.layers.push_back(e);
    }
    return r;
}

CompressionRatios compression_ratios(const ModelState& state, const ModelSpec& spec) {
    CompressionRatios r;
    std::size_t total = 0, nnz = 0, channels = 0, live = 0;
    for (const auto& p : state.params) {
        total += p.mask.size();
        nnz += p.mask.nnz();
        if (spec.layers.at(p.layer).kind != LayerKind::Conv) continue;
        Tensor w = p.weight;
        p.mask.apply(w);
        for (double f : channel_fnorm(w)) {
            ++channels;
            live += f > 0.0;
        }
    }
    r.weight = nnz ? static_cast<double>(total) / static_cast<double>(nnz) : 0.0;
    r.channel = live ? static_cast<double>(channels) / static_cast<double>(live) : (channels ? 0.0 : 1.0);
    return r;
}

std::vector<MetricsRow> metrics_rows(const ModelSpec& spec, const ModelState& state, const SpikeRecord* rec,
                                     const EnergyModel& em) {
    em.validate();
    std::vector<MetricsRow> rows;
    bool dense = true;
    for (const auto& p : state.params) dense = dense && p.mask.nnz() == p.mask.size();
    for (std::size_t i = 0; i < state.params.size(); ++i) {
        const auto& p = state.params[i];
        const LayerGeometry g = layer_geometry(spec, p.layer);
        const double d = p.mask.density();
        const double zeta = rec ? spike_activity(rec->layers.at(i), rec->samples) : 0.0;
        auto add = [&](FlopsVariant v, double fl, double unit) {
            rows.push_back({p.name, d, zeta, v, fl, fl * unit});
        };
        add(FlopsVariant::Ann, flops_ann(g), em.e_mac);
        if (!dense) add(FlopsVariant::AnnCompressed, flops_ann_compressed(g, d), em.e_mac);
        if (rec) {
            const auto& la = rec->layers.at(i);
            add(FlopsVariant::Snn, flops_snn(g, input_activity(la, rec->samples)), em.e_ac);
            add(FlopsVariant::SnnCompressed, flops_snn_compressed(g, p.mask, la.input_events, rec->samples), em.e_ac);
        }
    }
    return rows;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
    os << "layer,density,zeta,flops_variant,flops,energy_units\n";
    os << std::setprecision(10);
    for (const auto& r : rows)
        os << r.layer << ',' << r.density << ',' << r.zeta << ',' << flops_variant_name(r.variant) << ',' << r.flops
           << ',' << r.energy_units << '\n';
}

}  // namespace sparsnn
