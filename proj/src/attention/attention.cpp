#include "sparsnn/attention/attention.hpp"

#include <cmath>
#include <string>

namespace sparsnn {

namespace {

void check_power(int p) {
    if (p < 1) throw ConfigError("attention power p must be >= 1, got " + std::to_string(p));
}

template <typename T>
T abs_pow(T v, int p) {
    const T a = std::abs(v);
    return p == 1 ? a : p == 2 ? a * a : static_cast<T>(std::pow(a, p));
}

// Stage ends: output index of the ReLU following the last conv before each
// pooling layer or before the first linear layer.
std::vector<std::size_t> stage_ends(const ModelSpec& spec) {
    std::vector<std::size_t> out;
    std::size_t last_conv_relu = 0;
    bool open = false;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerKind k = spec.layers[i].kind;
        if (k == LayerKind::Conv && spec.is_spiking(i)) {
            last_conv_relu = i + 1;
            open = true;
        } else if ((k == LayerKind::AvgPool || k == LayerKind::Linear) && open) {
            out.push_back(last_conv_relu);
            open = false;
        }
    }
    if (open) out.push_back(last_conv_relu);
    return out;
}

}  // namespace

void AttentionPairing::validate(const ModelSpec& compressed, const ModelSpec& meta) const {
    check_power(power);
    if (alpha < 0.0) throw ConfigError("attention alpha must be >= 0");
    const auto sc = compressed.output_shapes();
    const auto sm = meta.output_shapes();
    for (const auto& [c, m] : pairs) {
        if (c >= sc.size() || m >= sm.size())
            throw ConfigError("attention pair (" + std::to_string(c) + "," + std::to_string(m) +
                              ") names a layer outside the model");
        if (sc[c].size() != 3 || sm[m].size() != 3)
            throw DimensionError("attention pair (" + std::to_string(c) + "," + std::to_string(m) +
                                 ") must name convolutional activation blocks");
        if (sc[c][1] != sm[m][1] || sc[c][2] != sm[m][2])
            throw DimensionError("attention pair (" + std::to_string(c) + "," + std::to_string(m) +
                                 "): spatial sizes " + shape_string(sc[c]) + " and " + shape_string(sm[m]) +
                                 " differ on axes H,W");
    }
}

std::vector<std::pair<std::size_t, std::size_t>> default_attention_pairs(const ModelSpec& compressed,
                                                                         const ModelSpec& meta) {
    const auto sc = compressed.output_shapes();
    const auto sm = meta.output_shapes();
    const auto ec = stage_ends(compressed);
    const auto em = stage_ends(meta);
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t j = 0;
    for (std::size_t c : ec) {
        while (j < em.size() && (sm[em[j]][1] > sc[c][1] || sm[em[j]][2] > sc[c][2])) ++j;
        if (j < em.size() && sm[em[j]][1] == sc[c][1] && sm[em[j]][2] == sc[c][2]) out.emplace_back(c, em[j++]);
    }
    return out;
}

template <typename T>
BasicTensor<T> attention_map(const BasicTensor<T>& a, int p) {
    check_power(p);
    if (a.rank() != 3) throw DimensionError("attention_map expects one [C,H,W] block, got " + shape_string(a.shape()));
    const std::size_t c = a.dim(0), hw = a.dim(1) * a.dim(2);
    BasicTensor<T> out({a.dim(1), a.dim(2)});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) out[i] += abs_pow(a[ch * hw + i], p);
    return out;
}

template <typename T>
BasicTensor<T> attention_maps(const BasicTensor<T>& a, int p) {
    check_power(p);
    if (a.rank() != 4) throw DimensionError("attention_maps expects [N,C,H,W], got " + shape_string(a.shape()));
    const std::size_t n = a.dim(0), c = a.dim(1), hw = a.dim(2) * a.dim(3);
    BasicTensor<T> out({n, hw});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < hw; ++i) out[b * hw + i] += abs_pow(a[(b * c + ch) * hw + i], p);
    return out;
}

namespace {

template <typename T>
T norm_or_floor(const T* q, std::size_t len, AgDiagnostics* diag) {
    T s{0};
    for (std::size_t i = 0; i < len; ++i) s += q[i] * q[i];
    const T n = std::sqrt(s);
    if (n == T{0}) {
        if (diag) ++diag->degenerate_maps;
        return static_cast<T>(kAttentionNormFloor);
    }
    return n;
}

template <typename T>
void check_pair(const BasicTensor<T>& qc, const BasicTensor<T>& qm, std::size_t j) {
    if (qc.shape() != qm.shape() || qc.rank() != 2)
        throw DimensionError("attention pair " + std::to_string(j) + ": vectorized maps " + shape_string(qc.shape()) +
                             " and " + shape_string(qm.shape()) + " differ");
}

}  // namespace

template <typename T>
T ag_loss(const std::vector<BasicTensor<T>>& maps_c, const std::vector<BasicTensor<T>>& maps_m, double alpha,
          bool squared, AgDiagnostics* diag) {
    if (maps_c.size() != maps_m.size()) throw DimensionError("ag_loss: map lists differ in length");
    double total = 0.0;
    for (std::size_t j = 0; j < maps_c.size(); ++j) {
        check_pair(maps_c[j], maps_m[j], j);
        const std::size_t n = maps_c[j].dim(0), len = maps_c[j].dim(1);
        double pair_sum = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            const T* qc = maps_c[j].data().data() + b * len;
            const T* qm = maps_m[j].data().data() + b * len;
            const T nc = norm_or_floor(qc, len, diag), nm = norm_or_floor(qm, len, diag);
            double d2 = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
                const double d = static_cast<double>(qc[i] / nc) - static_cast<double>(qm[i] / nm);
                d2 += d * d;
            }
            pair_sum += squared ? d2 : std::sqrt(d2);
        }
        total += pair_sum / static_cast<double>(n);
    }
    return static_cast<T>(0.5 * alpha * total);
}

template <typename T>
AgLossResult<T> ag_loss_with_grad(const std::vector<BasicTensor<T>>& acts_c,
                                  const std::vector<BasicTensor<T>>& acts_m, int p, double alpha, bool squared,
                                  AgDiagnostics* diag) {
    check_power(p);
    if (acts_c.size() != acts_m.size()) throw DimensionError("ag_loss: activation lists differ in length");
    AgLossResult<T> r;
    double total = 0.0;
    for (std::size_t j = 0; j < acts_c.size(); ++j) {
        const BasicTensor<T>& a = acts_c[j];
        const BasicTensor<T> qc_all = attention_maps(a, p);
        const BasicTensor<T> qm_all = attention_maps(acts_m[j], p);
        check_pair(qc_all, qm_all, j);
        const std::size_t n = a.dim(0), c = a.dim(1), len = qc_all.dim(1);
        BasicTensor<T> ga(a.shape());
        double pair_sum = 0.0;
        std::vector<double> dn(len), gq(len);
        for (std::size_t b = 0; b < n; ++b) {
            const T* qc = qc_all.data().data() + b * len;
            const T* qm = qm_all.data().data() + b * len;
            const double nc = norm_or_floor(qc, len, diag), nm = norm_or_floor(qm, len, diag);
            double d2 = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
                dn[i] = qc[i] / nc - qm[i] / nm;
                d2 += dn[i] * dn[i];
            }
            const double dist = std::sqrt(d2);
            pair_sum += squared ? d2 : dist;
            // d(per-sample term)/d(normalized map), scaled by alpha/(2N).
            const double outer = 0.5 * alpha / static_cast<double>(n);
            double coef;
            if (squared) coef = 2.0 * outer;
            else coef = dist > 0.0 ? outer / dist : 0.0;
            if (coef == 0.0) continue;
            // Through the normalization: (g - nhat (nhat . g)) / ||Q||.
            double dot = 0.0;
            for (std::size_t i = 0; i < len; ++i) dot += (qc[i] / nc) * dn[i];
            for (std::size_t i = 0; i < len; ++i) gq[i] = coef * (dn[i] - (qc[i] / nc) * dot) / nc;
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i < len; ++i) {
                    const T v = a[(b * c + ch) * len + i];
                    if (v == T{0}) continue;
                    const double sgn = v > T{0} ? 1.0 : -1.0;
                    const double dq = p == 1 ? sgn : p * std::pow(std::abs(static_cast<double>(v)), p - 1) * sgn;
                    ga[(b * c + ch) * len + i] = static_cast<T>(gq[i] * dq);
                }
        }
        total += pair_sum / static_cast<double>(n);
        r.grads.push_back(std::move(ga));
    }
    r.loss = static_cast<T>(0.5 * alpha * total);
    return r;
}

double effective_alpha(double alpha, std::size_t epoch, std::size_t cutoff_epoch) {
    return epoch < cutoff_epoch ? alpha : 0.0;
}

double combined_loss(double ce, double ag, std::size_t epoch, std::size_t cutoff_epoch) {
    return epoch < cutoff_epoch ? ce + ag : ce;
}

template BasicTensor<float> attention_map(const BasicTensor<float>&, int);
template BasicTensor<double> attention_map(const BasicTensor<double>&, int);
template BasicTensor<float> attention_maps(const BasicTensor<float>&, int);
template BasicTensor<double> attention_maps(const BasicTensor<double>&, int);
template float ag_loss(const std::vector<Tensor>&, const std::vector<Tensor>&, double, bool, AgDiagnostics*);
template double ag_loss(const std::vector<Tensor64>&, const std::vector<Tensor64>&, double, bool, AgDiagnostics*);
template AgLossResult<float> ag_loss_with_grad(const std::vector<Tensor>&, const std::vector<Tensor>&, int, double,
                                               bool, AgDiagnostics*);
template AgLossResult<double> ag_loss_with_grad(const std::vector<Tensor64>&, const std::vector<Tensor64>&, int,
                                                double, bool, AgDiagnostics*);

}  // namespace sparsnn
