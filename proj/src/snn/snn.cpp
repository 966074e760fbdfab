#include "sparsnn/snn/snn.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include "sparsnn/numerics/ops.hpp"

namespace sparsnn {

const char* neuron_model_name(NeuronModel m) { return m == NeuronModel::IF ? "if" : "lif"; }

NeuronModel parse_neuron_model(const std::string& s) {
    if (s == "if" || s == "IF") return NeuronModel::IF;
    if (s == "lif" || s == "LIF") return NeuronModel::LIF;
    throw ConfigError("unknown neuron model '" + s + "' (expected if or lif)");
}

void NeuronConfig::validate() const {
    if (!(gamma > 0.0)) throw ConfigError("surrogate damping gamma must be positive");
}

template <typename T>
LifStep<T> lif_step(const BasicTensor<T>& u, const BasicTensor<T>& input, T leak, T vth) {
    if (u.shape() != input.shape())
        throw DimensionError("lif_step: membrane " + shape_string(u.shape()) + " and input " +
                             shape_string(input.shape()) + " differ");
    if (!(vth > T{0})) throw ConfigError("lif_step: threshold must be positive");
    LifStep<T> r{BasicTensor<T>(u.shape()), BasicTensor<T>(u.shape()), BasicTensor<T>(u.shape())};
    for (std::size_t i = 0; i < u.size(); ++i) {
        const T acc = leak * u[i] + input[i];
        const bool fire = acc > vth;
        r.u_acc[i] = acc;
        r.spikes[i] = fire ? T{1} : T{0};
        r.u_next[i] = fire ? acc - vth : acc;
    }
    return r;
}

double surrogate_grad(double z, double gamma) { return gamma * std::max(0.0, 1.0 - std::abs(z)); }

namespace {

std::string at_label(std::size_t layer, std::size_t t) {
    return "layer " + std::to_string(layer) + ", t=" + std::to_string(t);
}

std::vector<std::size_t> param_index(const ModelSpec& spec) {
    std::vector<std::size_t> idx(spec.layers.size(), static_cast<std::size_t>(-1));
    std::size_t p = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i)
        if (spec.layers[i].has_weight()) idx[i] = p++;
    return idx;
}

bool is_neuron_slot(const ModelSpec& spec, std::size_t i) {
    return spec.layers[i].kind == LayerKind::Relu && i > 0 && spec.is_spiking(i - 1);
}

Shape batch_shape(std::size_t n, const Shape& per_sample) {
    Shape s{n};
    s.insert(s.end(), per_sample.begin(), per_sample.end());
    return s;
}

}  // namespace

template <typename T>
SnnForward<T> snn_forward(const BasicModelState<T>& state, const ModelSpec& spec, const InputWindow& window,
                          const SnnForwardOptions<T>& opts) {
    check_batch_shape(spec, window.frame_shape());
    const std::size_t L = spec.layers.size();
    const std::size_t steps = window.timesteps;
    const std::size_t n = window.frame_shape()[0];
    const auto pidx = param_index(spec);
    const auto in_shapes = spec.input_shapes();
    const auto out_shapes = spec.output_shapes();
    SPARSNN_CHECK(state.params.size() == spec.weight_layers().size(), "state does not match the model");

    std::vector<BasicTensor<T>> wm;
    wm.reserve(state.params.size());
    for (const auto& p : state.params) {
        BasicTensor<T> w = p.weight;
        p.mask.apply(w);
        wm.push_back(std::move(w));
    }

    SnnForward<T> f;
    f.trace.timesteps = steps;
    f.trace.dropout_masks.resize(L);
    if (opts.train_mode) {
        for (std::size_t i = 0; i < L; ++i)
            if (spec.layers[i].kind == LayerKind::Dropout && spec.layers[i].dropout > 0.0) {
                SPARSNN_CHECK(opts.dropout_rng != nullptr, "train-mode forward needs a dropout generator");
                f.trace.dropout_masks[i] =
                    ops::dropout_mask<T>(batch_shape(n, in_shapes[i]), spec.layers[i].dropout, *opts.dropout_rng);
            }
    }
    if (opts.keep_trace) {
        f.trace.values.assign(steps, std::vector<BasicTensor<T>>(L + 1));
        f.trace.u_acc.assign(steps, std::vector<BasicTensor<T>>(L));
        f.trace.u_prev.assign(steps, std::vector<BasicTensor<T>>(L));
    }
    std::vector<std::size_t> record_slot(L, static_cast<std::size_t>(-1));
    if (opts.record_spikes) {
        f.record.timesteps = steps;
        f.record.samples = n;
        for (std::size_t i = 0; i < L; ++i) {
            if (!spec.layers[i].has_weight()) continue;
            LayerActivity a;
            a.layer = i;
            a.name = state.params[pidx[i]].name;
            a.spiking = spec.is_spiking(i);
            a.neurons = shape_size(out_shapes[i]);
            a.input_shape = in_shapes[i];
            a.input_events.assign(shape_size(in_shapes[i]), 0);
            record_slot[i] = f.record.layers.size();
            f.record.layers.push_back(std::move(a));
        }
    }

    std::vector<BasicTensor<T>> u(L);
    for (std::size_t i = 0; i < L; ++i)
        if (is_neuron_slot(spec, i)) u[i] = BasicTensor<T>(batch_shape(n, in_shapes[i]));
    const bool full = opts.stop_after >= L;
    if (full) f.scores = BasicTensor<T>({n, spec.num_classes});

    for (std::size_t t = 0; t < steps; ++t) {
        BasicTensor<T> x = BasicTensor<T>::cast(window.frame(t));
        for (std::size_t i = 0; i < L; ++i) {
            const LayerSpec& l = spec.layers[i];
            if (opts.keep_trace) f.trace.values[t][i] = x;
            BasicTensor<T> y;
            switch (l.kind) {
                case LayerKind::Conv:
                case LayerKind::Linear: {
                    if (opts.record_spikes) {
                        auto& ev = f.record.layers[record_slot[i]].input_events;
                        const std::size_t per = ev.size();
                        for (std::size_t k = 0; k < x.size(); ++k)
                            if (x[k] != T{0}) ++ev[k % per];
                    }
                    const auto& w = wm[pidx[i]];
                    y = l.kind == LayerKind::Conv ? ops::conv2d(x, w, {l.stride, l.pad}) : ops::linear(x, w);
                    if (opts.on_preactivation) (*opts.on_preactivation)(i, t, y);
                    break;
                }
                case LayerKind::Relu:
                    if (is_neuron_slot(spec, i)) {
                        const auto& p = state.params[pidx[i - 1]];
                        if (opts.keep_trace) f.trace.u_prev[t][i] = u[i];
                        LifStep<T> s = lif_step(u[i], x, p.leak, p.threshold);
                        if (!s.u_acc.all_finite()) throw NumericError("non-finite membrane at " + at_label(i - 1, t));
                        if (opts.keep_trace) f.trace.u_acc[t][i] = std::move(s.u_acc);
                        u[i] = std::move(s.u_next);
                        if (opts.record_spikes) {
                            std::uint64_t c = 0;
                            for (std::size_t k = 0; k < s.spikes.size(); ++k) c += s.spikes[k] != T{0};
                            f.record.layers[record_slot[i - 1]].spikes += c;
                        }
                        y = std::move(s.spikes);
                    } else {
                        y = ops::relu(x);
                    }
                    break;
                case LayerKind::AvgPool: y = ops::avgpool2d(x, l.pool); break;
                case LayerKind::Dropout:
                    y = f.trace.dropout_masks[i].empty() ? x : ops::mul(x, f.trace.dropout_masks[i]);
                    break;
            }
            x = std::move(y);
            if (i == opts.stop_after) break;
        }
        if (!full) continue;
        if (!x.all_finite()) throw NumericError("non-finite head output at " + at_label(L - 1, t));
        ops::axpy(f.scores, T{1}, x);
        if (opts.keep_trace) f.trace.values[t][L] = std::move(x);
    }
    if (!opts.keep_trace) f.trace.dropout_masks.clear();
    return f;
}

template <typename T>
SnnGradients<T> snn_backward(const BasicModelState<T>& state, const ModelSpec& spec, const SnnTrace<T>& trace,
                             const BasicTensor<T>& grad_scores, double gamma) {
    const std::size_t L = spec.layers.size();
    const std::size_t steps = trace.timesteps;
    if (steps == 0 || trace.values.size() != steps || trace.u_acc.size() != steps || trace.u_prev.size() != steps)
        throw InvariantError("snn_backward: trace holds " + std::to_string(trace.values.size()) +
                             " steps, expected T=" + std::to_string(steps));
    for (const auto& v : trace.values)
        if (v.size() != L + 1 || v[L].empty())
            throw InvariantError("snn_backward: trace was not recorded for the full network");
    if (grad_scores.shape() != trace.values[0][L].shape())
        throw DimensionError("snn_backward: score gradient " + shape_string(grad_scores.shape()) +
                             " does not match scores " + shape_string(trace.values[0][L].shape()));
    const auto pidx = param_index(spec);

    SnnGradients<T> g;
    for (const auto& p : state.params) g.weights.emplace_back(p.weight.shape());
    g.thresholds.assign(state.params.size(), T{0});
    g.leaks.assign(state.params.size(), T{0});

    // Gradient with respect to the output of the current layer, per step. The
    // head output enters the scores at every step with weight 1.
    std::vector<BasicTensor<T>> go(steps, grad_scores);
    for (std::size_t ii = L; ii-- > 0;) {
        const LayerSpec& l = spec.layers[ii];
        switch (l.kind) {
            case LayerKind::Conv:
            case LayerKind::Linear: {
                const std::size_t pi = pidx[ii];
                BasicTensor<T> w = state.params[pi].weight;
                state.params[pi].mask.apply(w);
                for (std::size_t t = 0; t < steps; ++t) {
                    const auto& x = trace.values[t][ii];
                    ops::axpy(g.weights[pi], T{1},
                              l.kind == LayerKind::Conv ? ops::conv2d_grad_weight(go[t], x, w.shape(), {l.stride, l.pad})
                                                        : ops::linear_grad_weight(go[t], x, w.shape()));
                    if (ii > 0)
                        go[t] = l.kind == LayerKind::Conv ? ops::conv2d_grad_input(go[t], w, x.shape(), {l.stride, l.pad})
                                                          : ops::linear_grad_input(go[t], w, x.shape());
                }
                break;
            }
            case LayerKind::Relu:
                if (is_neuron_slot(spec, ii)) {
                    const std::size_t pi = pidx[ii - 1];
                    const double vth = state.params[pi].threshold;
                    const double leak = state.params[pi].leak;
                    const std::size_t size = go[0].size();
                    std::vector<double> gu_next(size, 0.0);
                    double dvth = 0.0, dleak = 0.0;
                    for (std::size_t t = steps; t-- > 0;) {
                        const auto& uacc = trace.u_acc[t][ii];
                        const auto& uprev = trace.u_prev[t][ii];
                        if (uacc.size() != size)
                            throw InvariantError("snn_backward: membrane trace missing at " + at_label(ii - 1, t));
                        for (std::size_t k = 0; k < size; ++k) {
                            const double ua = uacc[k];
                            const double s = surrogate_grad(ua / vth - 1.0, gamma);
                            const double gout = go[t][k];
                            const double gu = gout * s / vth + leak * gu_next[k];
                            dvth += gout * s * (-ua / (vth * vth));
                            dleak += gu * uprev[k];
                            gu_next[k] = gu;
                            go[t][k] = static_cast<T>(gu);
                        }
                    }
                    g.thresholds[pi] = static_cast<T>(dvth);
                    g.leaks[pi] = static_cast<T>(dleak);
                } else {
                    for (std::size_t t = 0; t < steps; ++t) go[t] = ops::relu_grad(go[t], trace.values[t][ii]);
                }
                break;
            case LayerKind::AvgPool:
                for (std::size_t t = 0; t < steps; ++t)
                    go[t] = ops::avgpool2d_grad(go[t], trace.values[t][ii].shape(), l.pool);
                break;
            case LayerKind::Dropout:
                if (ii < trace.dropout_masks.size() && !trace.dropout_masks[ii].empty())
                    for (std::size_t t = 0; t < steps; ++t) go[t] = ops::mul(go[t], trace.dropout_masks[ii]);
                break;
        }
    }
    for (std::size_t pi = 0; pi < state.params.size(); ++pi) state.params[pi].mask.apply(g.weights[pi]);
    return g;
}

double percentile(std::vector<float>& v, double q) {
    if (v.empty()) throw InvariantError("percentile of an empty sample");
    if (q < 0.0 || q > 100.0) throw ConfigError("percentile must lie in [0,100]");
    const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
    const double a = v[lo];
    if (lo + 1 >= v.size()) return a;
    const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
    return a + (b - a) * (pos - static_cast<double>(lo));
}

double threshold_from_samples(std::vector<float>& samples, double pct, double scale, bool* fallback) {
    if (fallback) *fallback = false;
    const double v = samples.empty() ? 0.0 : scale * percentile(samples, pct);
    if (!(v > 0.0)) {
        if (fallback) *fallback = true;
        return 1.0;
    }
    return v;
}

CalibrationReport calibrate_thresholds(ModelState& state, const ModelSpec& spec, const InputWindow& calib,
                                       const CalibrationConfig& cfg) {
    if (!(cfg.scale > 0.0)) throw ConfigError("calibration scale must be positive");
    CalibrationReport rep;
    for (auto& p : state.params) p.leak = 1.0f;
    for (auto& p : state.params) {
        if (!spec.is_spiking(p.layer)) continue;
        std::vector<float> samples;
        std::function<void(std::size_t, std::size_t, const Tensor&)> cb = [&](std::size_t layer, std::size_t,
                                                                             const Tensor& pre) {
            if (layer == p.layer) samples.insert(samples.end(), pre.data().begin(), pre.data().end());
        };
        SnnForwardOptions<float> opts;
        opts.stop_after = p.layer;
        opts.on_preactivation = &cb;
        snn_forward(state, spec, calib, opts);
        bool fb = false;
        p.threshold = static_cast<float>(threshold_from_samples(samples, cfg.percentile, cfg.scale, &fb));
        if (fb) {
            rep.warnings.push_back(p.name + ": no positive pre-activation percentile, threshold set to 1.0");
            std::cerr << "warning: calibration: " << rep.warnings.back() << '\n';
        }
        rep.thresholds.push_back(p.threshold);
    }
    for (auto& p : state.params) p.leak = 1.0f;
    return rep;
}

void SnnTrainConfig::validate() const {
    if (timesteps == 0) throw ConfigError("SNN needs T >= 1");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    neuron.validate();
    if (optimizer.lr < 0.0) throw ConfigError("learning rate must be non-negative");
    for (std::size_t i = 1; i < optimizer.milestones.size(); ++i)
        if (optimizer.milestones[i].epoch <= optimizer.milestones[i - 1].epoch)
            throw ConfigError("learning-rate milestones must be strictly increasing");
}

namespace {

std::uint64_t batch_seed(std::uint64_t seed, std::size_t epoch, std::size_t batch) {
    return splitmix64(splitmix64(seed ^ 0x9e3779b97f4a7c15ULL) + (static_cast<std::uint64_t>(epoch) << 32) + batch);
}

std::size_t count_correct(const Tensor& scores, const std::vector<int>& labels) {
    const auto pred = ops::argmax_rows(scores);
    std::size_t c = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) c += pred[i] == labels[i];
    return c;
}

}  // namespace

EpochStats snn_train_epoch(ModelState& state, const ModelSpec& spec, const DataView& data, const SnnTrainConfig& cfg,
                           SnnTrainer& trainer, std::size_t epoch, std::uint64_t seed) {
    cfg.validate();
    const std::size_t n = data.size();
    if (n == 0) throw ConfigError("SNN training set is empty");
    const auto order = epoch_order(n, seed, epoch);
    Rng dropout_rng = make_rng(batch_seed(seed, epoch, 0)).split("dropout");
    const double lr = cfg.optimizer.lr_at(epoch);
    const bool is_if = cfg.neuron.model == NeuronModel::IF;
    if (is_if)
        for (auto& p : state.params) p.leak = 1.0f;

    EpochStats st;
    st.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0, begin = 0; begin < n; ++b, begin += cfg.batch_size) {
        const std::size_t end = std::min(n, begin + cfg.batch_size);
        const Tensor x = gather_batch(*data.images, order, begin, end);
        const std::vector<int> y = gather_labels(*data.labels, order, begin, end);
        const InputWindow window = encode(x, cfg.encoding, cfg.timesteps, batch_seed(seed, epoch, b + 1));
        SnnForwardOptions<float> opts;
        opts.keep_trace = true;
        opts.train_mode = true;
        opts.dropout_rng = &dropout_rng;
        const SnnForward<float> f = snn_forward(state, spec, window, opts);
        const double loss = ops::softmax_cross_entropy(f.scores, y);
        if (!std::isfinite(loss))
            throw NumericError("non-finite SNN loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
        if (trainer.initial_loss < 0.0) {
            trainer.initial_loss = loss;
        } else if (loss > cfg.divergence_factor * trainer.initial_loss) {
            std::ostringstream os;
            os << "SNN training diverged at epoch " << epoch << ", batch " << b << ": loss " << loss << " exceeds "
               << cfg.divergence_factor << "x the initial loss " << trainer.initial_loss << " (lr " << lr << ')';
            throw DivergenceError(os.str());
        }
        loss_sum += loss * static_cast<double>(end - begin);
        correct += count_correct(f.scores, y);

        const Tensor gs = ops::softmax_cross_entropy_grad(f.scores, y);
        SnnGradients<float> g = snn_backward(state, spec, f.trace, gs, cfg.neuron.gamma);

        // Slot layout: weights, then thresholds, then leaks of spiking layers.
        std::vector<Tensor*> slots;
        std::vector<Tensor> grads;
        std::vector<Tensor> scalars;
        scalars.reserve(2 * state.params.size());
        if (cfg.train_weights)
            for (std::size_t i = 0; i < state.params.size(); ++i) {
                slots.push_back(&state.params[i].weight);
                grads.push_back(std::move(g.weights[i]));
            }
        std::vector<std::pair<float*, std::size_t>> scalar_targets;
        auto add_scalar = [&](float* target, float grad) {
            scalars.emplace_back(Shape{1}, *target);
            grads.emplace_back(Shape{1}, grad);
            scalar_targets.emplace_back(target, scalars.size() - 1);
        };
        for (std::size_t i = 0; i < state.params.size(); ++i) {
            if (!spec.is_spiking(state.params[i].layer)) continue;
            if (cfg.train_threshold) add_scalar(&state.params[i].threshold, g.thresholds[i]);
            if (cfg.train_leak && !is_if) add_scalar(&state.params[i].leak, g.leaks[i]);
        }
        for (auto& s : scalars) slots.push_back(&s);
        if (!slots.empty()) trainer.adam.step(slots, grads, lr);
        for (const auto& [target, si] : scalar_targets) *target = scalars[si][0];
        for (auto& p : state.params) {
            p.threshold = std::max(p.threshold, static_cast<float>(cfg.min_threshold));
            p.leak = std::clamp(p.leak, std::nextafter(0.0f, 1.0f), 1.0f);
        }
        state.apply_masks();
        ++state.step;
    }
    st.samples = n;
    st.loss = loss_sum / static_cast<double>(n);
    st.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return st;
}

SnnEvalResult snn_evaluate(const ModelState& state, const ModelSpec& spec, const DataView& data,
                           std::size_t timesteps, Encoding encoding, std::size_t batch_size, std::uint64_t seed,
                           bool record_spikes) {
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    const std::size_t n = data.size();
    SnnEvalResult r;
    if (n == 0) return r;
    const auto order = identity_order(n);
    std::size_t correct = 0;
    double loss_sum = 0.0;
    bool first = true;
    for (std::size_t b = 0, begin = 0; begin < n; ++b, begin += batch_size) {
        const std::size_t end = std::min(n, begin + batch_size);
        const Tensor x = gather_batch(*data.images, order, begin, end);
        const std::vector<int> y = gather_labels(*data.labels, order, begin, end);
        SnnForwardOptions<float> opts;
        opts.record_spikes = record_spikes;
        const InputWindow window = encode(x, encoding, timesteps, batch_seed(seed, 0xffff, b));
        const SnnForward<float> f = snn_forward(state, spec, window, opts);
        correct += count_correct(f.scores, y);
        loss_sum += ops::softmax_cross_entropy(f.scores, y) * static_cast<double>(end - begin);
        if (record_spikes) {
            if (first) r.record = f.record;
            else r.record.merge(f.record);
        }
        first = false;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    r.loss = loss_sum / static_cast<double>(n);
    return r;
}

template LifStep<float> lif_step(const Tensor&, const Tensor&, float, float);
template LifStep<double> lif_step(const Tensor64&, const Tensor64&, double, double);
template SnnForward<float> snn_forward(const BasicModelState<float>&, const ModelSpec&, const InputWindow&,
                                       const SnnForwardOptions<float>&);
template SnnForward<double> snn_forward(const BasicModelState<double>&, const ModelSpec&, const InputWindow&,
                                        const SnnForwardOptions<double>&);
template SnnGradients<float> snn_backward(const BasicModelState<float>&, const ModelSpec&, const SnnTrace<float>&,
                                          const Tensor&, double);
template SnnGradients<double> snn_backward(const BasicModelState<double>&, const ModelSpec&, const SnnTrace<double>&,
                                           const Tensor64&, double);

}  // namespace sparsnn
