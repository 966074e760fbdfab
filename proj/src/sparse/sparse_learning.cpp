#include "sparsnn/sparse/sparse_learning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sparsnn {

namespace {

// ceil that ignores representation noise such as 0.4*5 = 2.0000000000000004.
std::size_t safe_ceil(double v) { return static_cast<std::size_t>(std::ceil(v - 1e-9)); }

std::size_t safe_round(double v) { return static_cast<std::size_t>(std::floor(v + 0.5)); }

// k distinct indices of [0, n), uniformly at random.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(k);
    return idx;
}

// Positions sorted by key ascending, lower index first on ties.
std::vector<std::size_t> order_by(const std::vector<std::size_t>& positions, const std::vector<double>& key,
                                  bool descending) {
    std::vector<std::size_t> out = positions;
    std::stable_sort(out.begin(), out.end(), [&](std::size_t a, std::size_t b) {
        if (key[a] != key[b]) return descending ? key[a] > key[b] : key[a] < key[b];
        return a < b;
    });
    return out;
}

}  // namespace

void SparsitySchedule::validate() const {
    if (!(density > 0.0 && density <= 1.0)) throw ConfigError("target density must lie in (0,1]");
    if (initial_prune_rate < 0.0 || initial_prune_rate > 1.0) throw ConfigError("prune rate must lie in [0,1]");
}

bool is_prunable(const ModelSpec& spec, std::size_t layer, PruneMode mode) {
    const LayerKind k = spec.layers.at(layer).kind;
    if (mode == PruneMode::Channel) return k == LayerKind::Conv;
    return k == LayerKind::Conv || k == LayerKind::Linear;
}

void init_masks(ModelState& state, const ModelSpec& spec, double density, PruneMode mode, std::uint64_t seed,
                SparsityDiagnostics* diag) {
    if (!(density > 0.0 && density <= 1.0)) throw ConfigError("target density must lie in (0,1]");
    Rng rng = make_rng(seed).split("mask");
    state.mode = mode;

    if (mode == PruneMode::Irregular) {
        std::vector<std::size_t> keep(state.params.size(), 0);
        std::size_t total = 0, planned = 0;
        for (std::size_t i = 0; i < state.params.size(); ++i) {
            const std::size_t n = state.params[i].weight.size();
            total += n;
            std::size_t k = safe_round(density * static_cast<double>(n));
            if (k == 0) {
                k = 1;
                if (diag) ++diag->floored_layers;
            }
            keep[i] = std::min(k, n);
            planned += keep[i];
        }
        // Floored layers push the total over budget; take the excess back from
        // the largest layers.
        const std::size_t budget = std::max<std::size_t>(safe_round(density * static_cast<double>(total)), keep.size());
        while (planned > budget) {
            const auto it = std::max_element(keep.begin(), keep.end());
            if (*it <= 1) break;
            --*it;
            --planned;
        }
        for (std::size_t i = 0; i < state.params.size(); ++i) {
            auto& p = state.params[i];
            p.mask = PruneMask(p.weight.shape(), false);
            for (std::size_t pos : sample_without_replacement(p.weight.size(), keep[i], rng)) p.mask.set(pos, true);
        }
    } else {
        for (auto& p : state.params) {
            p.mask = PruneMask(p.weight.shape(), true);
            if (!is_prunable(spec, p.layer, mode)) continue;
            const std::size_t ch = p.mask.channels();
            std::size_t k = safe_round(density * static_cast<double>(ch));
            if (k == 0) {
                k = 1;
                if (diag) ++diag->floored_layers;
            }
            for (std::size_t c = 0; c < ch; ++c) p.mask.set_channel(c, false);
            for (std::size_t c : sample_without_replacement(ch, std::min(k, ch), rng)) p.mask.set_channel(c, true);
        }
    }
    state.apply_masks();
}

template <typename T>
std::vector<double> channel_fnorm(const BasicTensor<T>& w) {
    if (w.rank() != 4) throw DimensionError("channel_fnorm expects a [Co,Ci,k,k] weight, got " + shape_string(w.shape()));
    const std::size_t co = w.dim(0), ci = w.dim(1), kk = w.dim(2) * w.dim(3);
    std::vector<double> out(ci, 0.0);
    for (std::size_t o = 0; o < co; ++o)
        for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t j = 0; j < kk; ++j) {
                const double v = w[(o * ci + c) * kk + j];
                out[c] += v * v;
            }
    return out;
}

PruneResult prune_step(ModelState& state, const ModelSpec& spec, double rate, PruneMode mode,
                       SparsityDiagnostics* diag) {
    PruneResult r;
    r.pruned.assign(state.params.size(), 0);
    if (rate <= 0.0) return r;
    for (std::size_t li = 0; li < state.params.size(); ++li) {
        auto& p = state.params[li];
        if (!is_prunable(spec, p.layer, mode)) continue;
        if (mode == PruneMode::Irregular) {
            std::vector<std::size_t> active;
            std::vector<double> mag(p.weight.size());
            for (std::size_t i = 0; i < p.weight.size(); ++i) {
                mag[i] = std::abs(static_cast<double>(p.weight[i]));
                if (p.mask[i]) active.push_back(i);
            }
            std::size_t k = safe_ceil(rate * static_cast<double>(active.size()));
            if (k >= active.size() && !active.empty()) {
                k = active.size() - 1;
                if (diag) ++diag->retained_layers;
            }
            const auto order = order_by(active, mag, false);
            for (std::size_t i = 0; i < k; ++i) p.mask.set(order[i], false);
            r.pruned[li] = k;
        } else {
            const auto norms = channel_fnorm(p.weight);
            std::vector<std::size_t> active;
            for (std::size_t c = 0; c < p.mask.channels(); ++c)
                if (p.mask.channel_on(c)) active.push_back(c);
            std::size_t k = safe_ceil(rate * static_cast<double>(active.size()));
            if (k >= active.size() && !active.empty()) {
                k = active.size() - 1;
                if (diag) ++diag->retained_layers;
            }
            const auto order = order_by(active, norms, false);
            for (std::size_t i = 0; i < k; ++i) p.mask.set_channel(order[i], false);
            r.pruned[li] = k * p.mask.channel_slice_size();
        }
        p.mask.apply(p.weight);
        r.total += r.pruned[li];
    }
    return r;
}

std::vector<double> momentum_shares(const ModelState& state, const ModelSpec& spec, PruneMode mode,
                                    SparsityDiagnostics* diag) {
    std::vector<double> mass(state.params.size(), 0.0);
    double total = 0.0;
    std::size_t prunable = 0;
    for (std::size_t li = 0; li < state.params.size(); ++li) {
        const auto& p = state.params[li];
        if (!is_prunable(spec, p.layer, mode)) continue;
        ++prunable;
        for (std::size_t i = 0; i < p.momentum.size(); ++i)
            if (p.mask[i]) mass[li] += std::abs(static_cast<double>(p.momentum[i]));
        total += mass[li];
    }
    std::vector<double> shares(state.params.size(), 0.0);
    if (total > 0.0) {
        for (std::size_t li = 0; li < shares.size(); ++li) shares[li] = mass[li] / total;
    } else {
        if (diag) ++diag->cold_starts;
        for (std::size_t li = 0; li < shares.size(); ++li)
            if (is_prunable(spec, state.params[li].layer, mode)) shares[li] = 1.0 / static_cast<double>(prunable);
    }
    return shares;
}

std::vector<std::size_t> allocate_quotas(const std::vector<double>& shares, std::size_t total) {
    std::vector<std::size_t> q(shares.size(), 0);
    const double sum = std::accumulate(shares.begin(), shares.end(), 0.0);
    if (shares.empty() || total == 0 || sum <= 0.0) {
        if (!shares.empty() && total > 0) q[0] = total;
        return q;
    }
    std::vector<double> rem(shares.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < shares.size(); ++i) {
        const double exact = shares[i] / sum * static_cast<double>(total);
        q[i] = static_cast<std::size_t>(std::floor(exact));
        rem[i] = exact - static_cast<double>(q[i]);
        assigned += q[i];
    }
    std::vector<std::size_t> idx(shares.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    idx = order_by(idx, rem, true);
    for (std::size_t i = 0; assigned < total; i = (i + 1) % idx.size()) {
        if (shares[idx[i]] <= 0.0) continue;
        ++q[idx[i]];
        ++assigned;
    }
    return q;
}

std::vector<std::size_t> momentum_redistribution(const ModelState& state, const ModelSpec& spec, std::size_t pruned_total,
                                                 PruneMode mode, SparsityDiagnostics* diag) {
    return allocate_quotas(momentum_shares(state, spec, mode, diag), pruned_total);
}

std::vector<std::size_t> regrow(ModelState& state, const ModelSpec& spec, const std::vector<std::size_t>& quotas,
                                PruneMode mode) {
    SPARSNN_CHECK(quotas.size() == state.params.size(), "one regrow quota per parameter layer");
    std::vector<std::size_t> grown(state.params.size(), 0);

    // Layers in quota order (largest first); spill-over follows this order.
    std::vector<std::size_t> rank;
    std::vector<double> qkey(quotas.size());
    for (std::size_t li = 0; li < quotas.size(); ++li) {
        qkey[li] = static_cast<double>(quotas[li]);
        if (is_prunable(spec, state.params[li].layer, mode)) rank.push_back(li);
    }
    rank = order_by(rank, qkey, true);

    if (mode == PruneMode::Irregular) {
        // Candidates per layer, best first.
        std::vector<std::vector<std::size_t>> cand(state.params.size());
        std::vector<std::size_t> next(state.params.size(), 0);
        for (std::size_t li : rank) {
            const auto& p = state.params[li];
            std::vector<std::size_t> off;
            std::vector<double> mom(p.momentum.size());
            for (std::size_t i = 0; i < p.momentum.size(); ++i) {
                mom[i] = std::abs(static_cast<double>(p.momentum[i]));
                if (!p.mask[i]) off.push_back(i);
            }
            cand[li] = order_by(off, mom, true);
        }
        std::size_t carry = 0;
        for (int pass = 0; pass < 2; ++pass)
            for (std::size_t li : rank) {
                std::size_t want = (pass == 0 ? quotas[li] : 0) + carry;
                auto& p = state.params[li];
                while (want > 0 && next[li] < cand[li].size()) {
                    const std::size_t pos = cand[li][next[li]++];
                    p.mask.set(pos, true);
                    p.weight[pos] = 0.0f;
                    ++grown[li];
                    --want;
                }
                carry = want;
            }
    } else {
        // Whole channels; weight quotas are converted to channels with a
        // running remainder so the regrown total tracks the freed total.
        std::vector<std::vector<std::size_t>> cand(state.params.size());
        std::vector<std::size_t> next(state.params.size(), 0);
        for (std::size_t li : rank) {
            const auto& p = state.params[li];
            const auto norms = channel_fnorm(p.momentum);
            std::vector<std::size_t> off;
            for (std::size_t c = 0; c < p.mask.channels(); ++c)
                if (!p.mask.channel_on(c)) off.push_back(c);
            cand[li] = order_by(off, norms, true);
        }
        auto grow_channel = [&](std::size_t li) {
            auto& p = state.params[li];
            const std::size_t c = cand[li][next[li]++];
            p.mask.set_channel(c, true);
            const std::size_t co = p.weight.dim(0), ci = p.weight.dim(1), kk = p.weight.dim(2) * p.weight.dim(3);
            for (std::size_t o = 0; o < co; ++o)
                for (std::size_t j = 0; j < kk; ++j) p.weight[(o * ci + c) * kk + j] = 0.0f;
            grown[li] += p.mask.channel_slice_size();
        };
        long carry = 0;
        for (std::size_t li : rank) {
            const long slice = static_cast<long>(state.params[li].mask.channel_slice_size());
            long want = static_cast<long>(quotas[li]) + carry;
            while (want * 2 >= slice && next[li] < cand[li].size()) {
                grow_channel(li);
                want -= slice;
            }
            carry = want;
        }
        // Leftover budget of at least half a slice goes to any layer that can
        // still take a channel.
        bool progress = true;
        while (carry > 0 && progress) {
            progress = false;
            for (std::size_t li : rank) {
                const long slice = static_cast<long>(state.params[li].mask.channel_slice_size());
                if (carry * 2 >= slice && next[li] < cand[li].size()) {
                    grow_channel(li);
                    carry -= slice;
                    progress = true;
                    break;
                }
            }
        }
    }
    return grown;
}

double linear_decay(double initial_rate, std::size_t epoch, std::size_t total_epochs) {
    if (total_epochs == 0) return 0.0;
    const double r = initial_rate * (1.0 - static_cast<double>(epoch) / static_cast<double>(total_epochs));
    return std::max(0.0, r);
}

EpochMaskUpdate sparse_epoch_update(ModelState& state, const ModelSpec& spec, double rate, PruneMode mode,
                                    SparsityDiagnostics* diag, std::size_t target_active) {
    EpochMaskUpdate u;
    u.rate = rate;
    u.active_before = state.active_weights();
    const auto shares = momentum_shares(state, spec, mode, diag);
    u.pruned = prune_step(state, spec, rate, mode, diag);
    std::size_t budget = u.pruned.total;
    if (mode == PruneMode::Channel && target_active > 0) {
        const std::size_t left = u.active_before - u.pruned.total;
        budget = target_active > left ? target_active - left : 0;
    }
    u.quotas = allocate_quotas(shares, budget);
    u.regrown = regrow(state, spec, u.quotas, mode);
    state.apply_masks();
    u.active_after = state.active_weights();
    return u;
}

std::size_t active_budget(const ModelState& state, const ModelSpec& spec, double density, PruneMode mode) {
    std::size_t fixed = 0, prunable = 0;
    for (const auto& p : state.params) (is_prunable(spec, p.layer, mode) ? prunable : fixed) += p.mask.size();
    return fixed + static_cast<std::size_t>(std::llround(density * static_cast<double>(prunable)));
}

double prunable_density(const ModelState& state, const ModelSpec& spec, PruneMode mode) {
    std::size_t total = 0, active = 0;
    for (const auto& p : state.params) {
        if (!is_prunable(spec, p.layer, mode)) continue;
        total += p.mask.size();
        active += p.mask.nnz();
    }
    return total ? static_cast<double>(active) / static_cast<double>(total) : 1.0;
}

std::vector<SparsityRecord> sparsity_report(const ModelState& state, std::size_t epoch, const EpochMaskUpdate* update) {
    std::vector<SparsityRecord> out;
    for (std::size_t li = 0; li < state.params.size(); ++li) {
        const auto& p = state.params[li];
        SparsityRecord r;
        r.epoch = epoch;
        r.layer = p.name;
        r.density = p.mask.density();
        if (update) {
            r.pruned = update->pruned.pruned[li];
            r.regrown = update->regrown[li];
        }
        out.push_back(r);
    }
    return out;
}

template std::vector<double> channel_fnorm(const BasicTensor<float>&);
template std::vector<double> channel_fnorm(const BasicTensor<double>&);

}  // namespace sparsnn
