#include <gtest/gtest.h>

#include <cmath>

#include "sparsnn/numerics/ops.hpp"
#include "sparsnn/io/dataset.hpp"
#include "sparsnn/snn/snn.hpp"
#include "sparsnn/sparse/agc.hpp"

using namespace sparsnn;

namespace {

// x -> linear(1) -> LIF -> ... -> linear(2) head, one input feature.
ModelSpec chain_spec(std::size_t spiking_layers) {
    ModelSpec s;
    s.input = {1, 1, 1};
    s.num_classes = 2;
    for (std::size_t i = 0; i < spiking_layers; ++i) {
        s.layers.push_back(LayerSpec::linear(1));
        s.layers.push_back(LayerSpec::relu());
    }
    s.layers.push_back(LayerSpec::linear(2));
    return s;
}

BasicModelState<double> chain_state(const ModelSpec& spec, const std::vector<double>& w, const std::vector<double>& vth,
                                    const std::vector<double>& leak, double h0, double h1) {
    BasicModelState<double> st;
    const auto wl = spec.weight_layers();
    for (std::size_t i = 0; i + 1 < wl.size(); ++i)
        st.params.push_back({wl[i], "s" + std::to_string(i), Tensor64({1, 1}, w[i]), PruneMask({1, 1}),
                             Tensor64({1, 1}), vth[i], leak[i]});
    st.params.push_back({wl.back(), "head", Tensor64({2, 1}, std::vector<double>{h0, h1}), PruneMask({2, 1}),
                         Tensor64({2, 1}), 1.0, 1.0});
    return st;
}

InputWindow frames_window(const std::vector<float>& xs) {
    InputWindow w;
    w.encoding = Encoding::Poisson;
    w.timesteps = xs.size();
    for (float x : xs) w.frames.push_back(Tensor({1, 1, 1, 1}, x));
    return w;
}

double surr(double u, double vth, double gamma) { return gamma * std::max(0.0, 1.0 - std::abs(u / vth - 1.0)); }

// Hand-unrolled scalar chain of spiking neurons with a 2-class head and CE
// loss against class `y`. The backward pass follows the truncated chain rule
// term by term: through the surrogate at every step, through the leak into
// the next step, never through the reset.
struct ChainOracle {
    std::vector<double> dw, dvth, dleak;
    double dh0 = 0, dh1 = 0;
    std::vector<double> scores;
};

ChainOracle chain_oracle(const std::vector<double>& x, const std::vector<double>& w, const std::vector<double>& vth,
                         const std::vector<double>& leak, double h0, double h1, int y, double gamma) {
    const std::size_t T = x.size(), L = w.size();
    // in[l][t]: input of neuron layer l; U[l][t]: membrane before the
    // threshold test; up[l][t]: membrane carried in from t-1; O[l][t]: spike.
    std::vector<std::vector<double>> in(L + 1, std::vector<double>(T)), U = in, up = in, O = in;
    in[0] = x;
    for (std::size_t l = 0; l < L; ++l) {
        double u = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            up[l][t] = u;
            U[l][t] = leak[l] * u + w[l] * in[l][t];
            O[l][t] = U[l][t] > vth[l] ? 1.0 : 0.0;
            u = U[l][t] - vth[l] * O[l][t];
            in[l + 1][t] = O[l][t];
        }
    }
    double acc = 0.0;
    for (std::size_t t = 0; t < T; ++t) acc += in[L][t];
    const double s0 = h0 * acc, s1 = h1 * acc;
    const double m = std::max(s0, s1);
    const double e0 = std::exp(s0 - m), e1 = std::exp(s1 - m);
    const double g0 = e0 / (e0 + e1) - (y == 0), g1 = e1 / (e0 + e1) - (y == 1);

    ChainOracle r;
    r.scores = {s0, s1};
    r.dh0 = g0 * acc;
    r.dh1 = g1 * acc;
    r.dw.assign(L, 0.0);
    r.dvth.assign(L, 0.0);
    r.dleak.assign(L, 0.0);
    // dL/d(output of the last neuron layer) at each t: the head adds its
    // input to the scores at every step.
    std::vector<double> gO(T, g0 * h0 + g1 * h1);
    for (std::size_t l = L; l-- > 0;) {
        std::vector<double> gU(T);
        double carry = 0.0;
        for (std::size_t t = T; t-- > 0;) {
            const double sg = surr(U[l][t], vth[l], gamma);
            gU[t] = gO[t] * sg / vth[l] + leak[l] * carry;
            carry = gU[t];
            r.dvth[l] += gO[t] * sg * (-U[l][t] / (vth[l] * vth[l]));
            r.dleak[l] += gU[t] * up[l][t];
            r.dw[l] += gU[t] * in[l][t];
        }
        for (std::size_t t = 0; t < T; ++t) gO[t] = w[l] * gU[t];
    }
    return r;
}

void check_chain(const std::vector<float>& xs, const std::vector<double>& w, const std::vector<double>& vth,
                 const std::vector<double>& leak, double h0, double h1, int y) {
    const double gamma = 0.3;
    const ModelSpec spec = chain_spec(w.size());
    const auto st = chain_state(spec, w, vth, leak, h0, h1);
    SnnForwardOptions<double> opts;
    opts.keep_trace = true;
    const auto f = snn_forward(st, spec, frames_window(xs), opts);
    std::vector<double> xd(xs.begin(), xs.end());
    const ChainOracle o = chain_oracle(xd, w, vth, leak, h0, h1, y, gamma);
    EXPECT_NEAR(f.scores[0], o.scores[0], 1e-12);
    EXPECT_NEAR(f.scores[1], o.scores[1], 1e-12);
    const std::vector<int> labels{y};
    const Tensor64 gs = ops::softmax_cross_entropy_grad(f.scores, std::span<const int>(labels));
    const auto g = snn_backward(st, spec, f.trace, gs, gamma);
    bool any_surrogate = false;
    for (std::size_t l = 0; l < w.size(); ++l) {
        EXPECT_NEAR(g.weights[l][0], o.dw[l], 1e-10) << "layer " << l;
        EXPECT_NEAR(g.thresholds[l], o.dvth[l], 1e-10) << "layer " << l;
        EXPECT_NEAR(g.leaks[l], o.dleak[l], 1e-10) << "layer " << l;
        any_surrogate |= o.dw[l] != 0.0 && o.dvth[l] != 0.0 && o.dleak[l] != 0.0;
    }
    EXPECT_TRUE(any_surrogate) << "the example should exercise every gradient path";
    EXPECT_NEAR(g.weights.back()[0], o.dh0, 1e-10);
    EXPECT_NEAR(g.weights.back()[1], o.dh1, 1e-10);
    EXPECT_EQ(g.thresholds.back(), 0.0);
}

ModelSpec small_net(double dropout = 0.0) {
    ModelSpec s;
    s.input = {1, 4, 4};
    s.num_classes = 3;
    s.layers = {LayerSpec::conv(2, 3, 1, 1), LayerSpec::relu(), LayerSpec::avgpool(2)};
    if (dropout > 0.0) s.layers.push_back(LayerSpec::dropout_layer(dropout));
    s.layers.push_back(LayerSpec::linear(5));
    s.layers.push_back(LayerSpec::relu());
    s.layers.push_back(LayerSpec::linear(3));
    return s;
}

Tensor random_images(std::size_t n, const Shape& per, std::uint64_t seed) {
    Shape s{n};
    s.insert(s.end(), per.begin(), per.end());
    Tensor t(s);
    Rng rng(seed);
    for (auto& v : t.storage()) v = static_cast<float>(rng.uniform());
    return t;
}

}  // namespace

TEST(Lif, ZeroInputNoSpike) {
    const auto s = lif_step(Tensor64({1}), Tensor64({1}), 0.9, 1.0);
    EXPECT_EQ(s.spikes[0], 0.0);
    EXPECT_EQ(s.u_next[0], 0.0);
}

TEST(Lif, ConstantInputTrace) {
    // Hand simulation with lambda = 1, vth = 1, input 0.6 per step.
    const double want_u[] = {0.6, 0.2, 0.8, 0.4, 1.0};
    const double want_o[] = {0, 1, 0, 1, 0};
    Tensor64 u({1});
    for (int t = 0; t < 5; ++t) {
        const auto s = lif_step(u, Tensor64({1}, 0.6), 1.0, 1.0);
        EXPECT_EQ(s.spikes[0], want_o[t]) << "t=" << t + 1;
        EXPECT_NEAR(s.u_next[0], want_u[t], 1e-12) << "t=" << t + 1;
        u = s.u_next;
    }
}

TEST(Lif, ThresholdIsStrict) {
    const auto s = lif_step(Tensor64({1}), Tensor64({1}, 1.0), 1.0, 1.0);
    EXPECT_EQ(s.spikes[0], 0.0);
    EXPECT_EQ(s.u_next[0], 1.0);
    const auto s2 = lif_step(Tensor64({1}), Tensor64({1}, std::nextafter(1.0, 2.0)), 1.0, 1.0);
    EXPECT_EQ(s2.spikes[0], 1.0);
}

TEST(Lif, SoftResetConservesCharge) {
    Rng rng(5);
    const double vth = 0.75;
    Tensor64 u({64});
    std::vector<double> total(64, 0.0), spikes(64, 0.0);
    for (int t = 0; t < 200; ++t) {
        Tensor64 in({64});
        // Multiples of 1/16 keep every sum exact.
        for (auto& v : in.storage()) v = static_cast<double>(rng.below(17)) / 16.0;
        const auto s = lif_step(u, in, 1.0, vth);
        for (std::size_t k = 0; k < 64; ++k) {
            total[k] += in[k];
            spikes[k] += s.spikes[k];
        }
        u = s.u_next;
    }
    for (std::size_t k = 0; k < 64; ++k) EXPECT_EQ(total[k], u[k] + vth * spikes[k]);
}

TEST(Surrogate, Values) {
    EXPECT_DOUBLE_EQ(surrogate_grad(0.0, 0.3), 0.3);
    EXPECT_DOUBLE_EQ(surrogate_grad(-0.5, 0.3), 0.15);
    EXPECT_EQ(surrogate_grad(1.0, 0.3), 0.0);
    EXPECT_EQ(surrogate_grad(-2.5, 0.3), 0.0);
}

TEST(Bptt, OneNeuronTwoSteps) {
    check_chain({1.0f, 1.0f}, {0.8}, {1.0}, {0.9}, 0.7, -0.4, 0);
    check_chain({0.5f, 1.0f}, {1.3}, {0.9}, {0.6}, -0.2, 0.5, 1);
}

TEST(Bptt, TwoNeuronChainThreeSteps) {
    check_chain({1.0f, 0.25f, 0.75f}, {1.4, 0.9}, {1.0, 0.8}, {0.7, 0.95}, 0.6, -0.3, 1);
    check_chain({0.5f, 1.0f, 1.0f}, {1.7, 1.1}, {1.2, 0.7}, {0.85, 0.5}, -0.8, 0.4, 0);
}

TEST(Bptt, ZeroGammaSeversSpikingLayers) {
    const ModelSpec spec = small_net();
    BasicModelState<double> st = build_model<double>(spec, 3);
    for (auto& p : st.params) p.threshold = 0.5;
    SnnForwardOptions<double> opts;
    opts.keep_trace = true;
    const auto f = snn_forward(st, spec, direct_encode(random_images(2, spec.input, 1), 4), opts);
    const std::vector<int> y{0, 2};
    const auto g = snn_backward(st, spec, f.trace, ops::softmax_cross_entropy_grad(f.scores, std::span<const int>(y)), 0.0);
    for (std::size_t i = 0; i + 1 < st.params.size(); ++i) {
        for (double v : g.weights[i].data()) EXPECT_EQ(v, 0.0);
        EXPECT_EQ(g.thresholds[i], 0.0);
        EXPECT_EQ(g.leaks[i], 0.0);
    }
}

TEST(Bptt, MaskedWeightGradientIsZero) {
    const ModelSpec spec = small_net();
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        BasicModelState<double> st = build_model<double>(spec, 10 + trial);
        for (auto& p : st.params) {
            for (std::size_t i = 0; i < p.mask.size(); ++i) p.mask.set(i, rng.bernoulli(0.6));
            p.threshold = 0.3;
            p.leak = 0.9;
        }
        st.apply_masks();
        SnnForwardOptions<double> opts;
        opts.keep_trace = true;
        const auto f = snn_forward(st, spec, direct_encode(random_images(3, spec.input, trial), 5), opts);
        const std::vector<int> y{0, 1, 2};
        const auto g =
            snn_backward(st, spec, f.trace, ops::softmax_cross_entropy_grad(f.scores, std::span<const int>(y)), 0.3);
        for (std::size_t pi = 0; pi < st.params.size(); ++pi)
            for (std::size_t i = 0; i < st.params[pi].mask.size(); ++i)
                if (!st.params[pi].mask[i]) {
                    EXPECT_EQ(g.weights[pi][i], 0.0);
                }
    }
}

TEST(Bptt, TraceMismatchIsRejected) {
    const ModelSpec spec = small_net();
    const BasicModelState<double> st = build_model<double>(spec, 3);
    SnnForwardOptions<double> opts;
    opts.keep_trace = true;
    auto f = snn_forward(st, spec, direct_encode(random_images(1, spec.input, 1), 3), opts);
    f.trace.timesteps = 4;
    EXPECT_THROW(snn_backward(st, spec, f.trace, Tensor64({1, 3}), 0.3), InvariantError);
    SnnTrace<double> empty;
    EXPECT_THROW(snn_backward(st, spec, empty, Tensor64({1, 3}), 0.3), InvariantError);
}

TEST(SnnForward, ZeroInputSingleStepGivesUniformScores) {
    const ModelSpec spec = small_net();
    const BasicModelState<double> st = build_model<double>(spec, 3);
    const auto f = snn_forward(st, spec, direct_encode(Tensor({2, 1, 4, 4}), 1));
    for (double v : f.scores.data()) EXPECT_EQ(v, 0.0);
    const Tensor64 p = ops::softmax(f.scores);
    for (double v : p.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(SnnForward, HugeThresholdsSilenceTheNetwork) {
    const ModelSpec spec = small_net();
    ModelState st = build_model<float>(spec, 3);
    for (auto& p : st.params) p.threshold = 1e9f;
    SnnForwardOptions<float> opts;
    opts.record_spikes = true;
    const auto f = snn_forward(st, spec, direct_encode(random_images(4, spec.input, 2), 6), opts);
    for (const auto& l : f.record.layers) {
        EXPECT_EQ(l.spikes, 0u);
        if (l.layer != 0) {
            for (auto e : l.input_events) EXPECT_EQ(e, 0u);
        }
    }
    for (float v : f.scores.data()) EXPECT_EQ(v, 0.0f);
}

TEST(SnnForward, SpikesAreBinary) {
    const ModelSpec spec = small_net();
    ModelState st = build_model<float>(spec, 3);
    for (auto& p : st.params) p.threshold = 0.2f;
    SnnForwardOptions<float> opts;
    opts.keep_trace = true;
    const auto f = snn_forward(st, spec, direct_encode(random_images(2, spec.input, 3), 5), opts);
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t i : {std::size_t{2}, std::size_t{5}})
            for (float v : f.trace.values[t][i].data()) ASSERT_TRUE(v == 0.0f || v == 1.0f);
}

TEST(SnnForward, MatchesManualUnroll) {
    // input 3 -> linear 2 -> LIF -> linear 2 -> LIF -> head 2, T = 3.
    ModelSpec spec;
    spec.input = {3, 1, 1};
    spec.num_classes = 2;
    spec.layers = {LayerSpec::linear(2), LayerSpec::relu(), LayerSpec::linear(2), LayerSpec::relu(),
                   LayerSpec::linear(2)};
    const double W1[2][3] = {{0.6, -0.2, 0.5}, {0.3, 0.4, 0.1}};
    const double W2[2][2] = {{0.9, 0.4}, {-0.5, 1.2}};
    const double H[2][2] = {{1.0, -0.5}, {0.5, 2.0}};
    const double v1 = 0.5, v2 = 0.6, l1 = 0.9, l2 = 0.8;
    BasicModelState<double> st;
    st.params.push_back({0, "a", Tensor64({2, 3}, std::vector<double>(&W1[0][0], &W1[0][0] + 6)), PruneMask({2, 3}),
                         Tensor64({2, 3}), v1, l1});
    st.params.push_back({2, "b", Tensor64({2, 2}, std::vector<double>(&W2[0][0], &W2[0][0] + 4)), PruneMask({2, 2}),
                         Tensor64({2, 2}), v2, l2});
    st.params.push_back({4, "h", Tensor64({2, 2}, std::vector<double>(&H[0][0], &H[0][0] + 4)), PruneMask({2, 2}),
                         Tensor64({2, 2}), 1.0, 1.0});
    const float x[3] = {1.0f, 0.5f, 0.75f};
    const auto f = snn_forward(st, spec, direct_encode(Tensor({1, 3, 1, 1}, std::vector<float>(x, x + 3)), 3));

    double u1[2] = {0, 0}, u2[2] = {0, 0}, score[2] = {0, 0};
    for (int t = 0; t < 3; ++t) {
        double o1[2], o2[2];
        for (int j = 0; j < 2; ++j) {
            const double a = l1 * u1[j] + W1[j][0] * x[0] + W1[j][1] * x[1] + W1[j][2] * x[2];
            o1[j] = a > v1;
            u1[j] = a - v1 * o1[j];
        }
        for (int j = 0; j < 2; ++j) {
            const double a = l2 * u2[j] + W2[j][0] * o1[0] + W2[j][1] * o1[1];
            o2[j] = a > v2;
            u2[j] = a - v2 * o2[j];
        }
        for (int k = 0; k < 2; ++k) score[k] += H[k][0] * o2[0] + H[k][1] * o2[1];
    }
    EXPECT_NEAR(f.scores[0], score[0], 1e-12);
    EXPECT_NEAR(f.scores[1], score[1], 1e-12);
    EXPECT_NE(score[0], 0.0);
}

TEST(SnnForward, DropoutMaskIsSharedAcrossSteps) {
    const ModelSpec spec = small_net(0.5);
    ModelState st = build_model<float>(spec, 4);
    for (auto& p : st.params) p.threshold = 0.1f;
    Rng rng(3);
    SnnForwardOptions<float> opts;
    opts.keep_trace = true;
    opts.train_mode = true;
    opts.dropout_rng = &rng;
    const auto f = snn_forward(st, spec, direct_encode(random_images(2, spec.input, 4), 4), opts);
    const std::size_t drop = 3;
    ASSERT_EQ(spec.layers[drop].kind, LayerKind::Dropout);
    const Tensor& m = f.trace.dropout_masks[drop];
    ASSERT_FALSE(m.empty());
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t k = 0; k < m.size(); ++k)
            if (m[k] == 0.0f) {
                    EXPECT_EQ(f.trace.values[t][drop + 1][k], 0.0f);
                }
}

TEST(Calibration, ConstantSamples) {
    std::vector<float> s(1000, 2.0f);
    EXPECT_NEAR(threshold_from_samples(s, 99.7, 0.4), 0.8, 1e-7);
}

TEST(Calibration, PercentileHundredIsMax) {
    Rng rng(2);
    std::vector<float> s(5000);
    for (auto& v : s) v = static_cast<float>(rng.normal());
    const float mx = *std::max_element(s.begin(), s.end());
    EXPECT_EQ(threshold_from_samples(s, 100.0, 1.0), static_cast<double>(mx));
}

TEST(Calibration, PercentileInterpolates) {
    std::vector<float> s{4, 1, 3, 2, 0};
    EXPECT_DOUBLE_EQ(percentile(s, 50.0), 2.0);
    EXPECT_DOUBLE_EQ(percentile(s, 87.5), 3.5);
}

TEST(Calibration, UniformSamples) {
    Rng rng(77);
    std::vector<float> s(100000);
    for (auto& v : s) v = static_cast<float>(rng.uniform());
    EXPECT_NEAR(threshold_from_samples(s, 99.7, 0.4), 0.4 * 0.997, 0.002);
}

TEST(Calibration, NonPositiveFallsBackToOne) {
    std::vector<float> s(100, 0.0f);
    bool fb = false;
    EXPECT_EQ(threshold_from_samples(s, 99.7, 0.4, &fb), 1.0);
    EXPECT_TRUE(fb);
}

TEST(Calibration, FirstLayerUsesMaxPreactivationAndResetsLeak) {
    const ModelSpec spec = small_net();
    ModelState st = build_model<float>(spec, 5);
    for (auto& p : st.params) p.leak = 0.5f;
    const Tensor x = random_images(8, spec.input, 6);
    const CalibrationConfig cfg{4, 100.0, 1.0};
    const auto rep = calibrate_thresholds(st, spec, direct_encode(x, 4), cfg);
    ASSERT_EQ(rep.thresholds.size(), 2u);
    const Tensor pre = ops::conv2d(x, st.params[0].weight, {1, 1});
    const float mx = *std::max_element(pre.data().begin(), pre.data().end());
    EXPECT_FLOAT_EQ(st.params[0].threshold, mx);
    for (const auto& p : st.params) EXPECT_EQ(p.leak, 1.0f);
}

TEST(Calibration, SilentLayerWarns) {
    const ModelSpec spec = small_net();
    ModelState st = build_model<float>(spec, 5);
    st.params[1].weight.fill(0.0f);
    const auto rep = calibrate_thresholds(st, spec, direct_encode(random_images(4, spec.input, 1), 3), {});
    EXPECT_EQ(rep.thresholds[1], 1.0);
    EXPECT_EQ(rep.warnings.size(), 1u);
}

namespace {

struct Toy {
    Tensor images;
    std::vector<int> labels;
};

// Two classes: bright top half vs bright bottom half.
Toy halves(std::size_t n, std::uint64_t seed) {
    Toy t{Tensor({n, 1, 4, 4}), std::vector<int>(n)};
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        t.labels[i] = static_cast<int>(i % 2);
        for (std::size_t p = 0; p < 16; ++p) {
            const bool top = p < 8;
            const double base = (top == (t.labels[i] == 0)) ? 0.8 : 0.1;
            t.images[i * 16 + p] = static_cast<float>(std::clamp(base + 0.1 * rng.normal(), 0.0, 1.0));
        }
    }
    return t;
}

ModelSpec halves_spec() {
    ModelSpec s = small_net();
    s.num_classes = 2;
    s.layers.back() = LayerSpec::linear(2);
    return s;
}

}  // namespace

TEST(SnnTrain, ZeroLearningRateLeavesParameters) {
    const ModelSpec spec = halves_spec();
    ModelState st = build_model<float>(spec, 1);
    const Toy d = halves(32, 1);
    calibrate_thresholds(st, spec, direct_encode(d.images, 5), {5, 99.7, 0.4});
    const ModelState before = st;
    SnnTrainConfig cfg;
    cfg.timesteps = 5;
    cfg.optimizer.lr = 0.0;
    cfg.batch_size = 8;
    SnnTrainer tr;
    snn_train_epoch(st, spec, {&d.images, &d.labels}, cfg, tr, 0, 1);
    for (std::size_t i = 0; i < st.params.size(); ++i) {
        EXPECT_EQ(st.params[i].weight, before.params[i].weight);
        EXPECT_EQ(st.params[i].threshold, before.params[i].threshold);
        EXPECT_EQ(st.params[i].leak, before.params[i].leak);
        EXPECT_EQ(st.params[i].mask, before.params[i].mask);
    }
}

TEST(SnnTrain, MasksFixedAndParametersClamped) {
    const ModelSpec spec = halves_spec();
    ModelState st = build_model<float>(spec, 2);
    Rng rng(4);
    for (auto& p : st.params)
        for (std::size_t i = 0; i < p.mask.size(); ++i) p.mask.set(i, rng.bernoulli(0.7));
    st.params.back().mask = PruneMask(st.params.back().weight.shape());
    st.apply_masks();
    const Toy d = halves(64, 2);
    calibrate_thresholds(st, spec, direct_encode(d.images, 5), {5, 99.7, 0.4});
    std::vector<PruneMask> masks;
    for (const auto& p : st.params) masks.push_back(p.mask);
    SnnTrainConfig cfg;
    cfg.timesteps = 5;
    cfg.optimizer.lr = 0.05;
    cfg.batch_size = 16;
    cfg.divergence_factor = 1e9;
    SnnTrainer tr;
    for (std::size_t e = 0; e < 3; ++e) snn_train_epoch(st, spec, {&d.images, &d.labels}, cfg, tr, e, 1);
    for (std::size_t i = 0; i < st.params.size(); ++i) {
        EXPECT_EQ(st.params[i].mask, masks[i]);
        for (std::size_t k = 0; k < masks[i].size(); ++k)
            if (!masks[i][k]) {
                    EXPECT_EQ(st.params[i].weight[k], 0.0f);
                }
        EXPECT_GE(st.params[i].threshold, 1e-3f);
        EXPECT_GT(st.params[i].leak, 0.0f);
        EXPECT_LE(st.params[i].leak, 1.0f);
    }
}

// ANN pretraining, calibration, then SNN fine-tuning on two well separated
// classes; a sanity bound rather than a benchmark.
TEST(SnnTrain, SeparableToyReachesHighTrainAccuracy) {
    ToyDatasetOptions o;
    o.classes = 2;
    o.samples = 200;
    o.size = 8;
    const Dataset d = make_toy_dataset(o);
    PresetOptions po;
    po.input = {1, 8, 8};
    po.num_classes = 2;
    po.conv_dropout = 0.0;
    po.linear_dropout = 0.0;
    const ModelSpec spec = preset_model("vgg-mini", po);
    ModelState st = build_model<float>(spec, 3);
    AgcConfig ann;
    ann.optimizer.lr = 0.05;
    ann.optimizer.milestones.clear();
    ann.epochs = 3;
    ann.batch_size = 20;
    for (std::size_t e = 0; e < 3; ++e) dense_train_epoch(st, spec, d.view(), ann, e, 3);
    Tensor calib = gather_batch(d.images, identity_order(d.size()), 0, 100);
    calibrate_thresholds(st, spec, direct_encode(calib, 10), {10, 99.7, 0.4});
    SnnTrainConfig cfg;
    cfg.timesteps = 10;
    cfg.optimizer.lr = 1e-3;
    cfg.batch_size = 20;
    SnnTrainer tr;
    for (std::size_t e = 0; e < 5; ++e) snn_train_epoch(st, spec, d.view(), cfg, tr, e, 3);
    const auto ev = snn_evaluate(st, spec, d.view(), 10, Encoding::Direct, 50, 3);
    EXPECT_GE(ev.accuracy, 0.99);
}

TEST(SnnTrain, RejectsBadConfig) {
    SnnTrainConfig cfg;
    cfg.timesteps = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.timesteps = 5;
    cfg.neuron.gamma = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(SnnEvaluate, DeterministicAndRecordsSpikes) {
    const ModelSpec spec = halves_spec();
    ModelState st = build_model<float>(spec, 3);
    const Toy d = halves(40, 5);
    calibrate_thresholds(st, spec, direct_encode(d.images, 5), {5, 99.7, 0.4});
    const auto a = snn_evaluate(st, spec, {&d.images, &d.labels}, 5, Encoding::Poisson, 16, 9, true);
    const auto b = snn_evaluate(st, spec, {&d.images, &d.labels}, 5, Encoding::Poisson, 16, 9, true);
    EXPECT_EQ(a.accuracy, b.accuracy);
    EXPECT_EQ(a.record.samples, 40u);
    ASSERT_EQ(a.record.layers.size(), 3u);
    for (std::size_t i = 0; i < a.record.layers.size(); ++i) {
        EXPECT_EQ(a.record.layers[i].spikes, b.record.layers[i].spikes);
        EXPECT_LE(a.record.layers[i].spikes, a.record.layers[i].neurons * 5 * 40);
    }
}
