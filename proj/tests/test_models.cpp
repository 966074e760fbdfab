#include <gtest/gtest.h>

#include <cmath>

#include "sparsnn/models/data.hpp"
#include "sparsnn/models/model.hpp"
#include "sparsnn/models/optimizer.hpp"

using namespace sparsnn;

namespace {

ModelSpec one_conv_spec() {
    ModelSpec s;
    s.input = {3, 4, 4};
    s.num_classes = 2;
    s.layers = {LayerSpec::conv(8, 3, 1, 1), LayerSpec::relu(), LayerSpec::linear(2)};
    return s;
}

ModelSpec mini(double conv_drop = 0.0, double lin_drop = 0.0) {
    PresetOptions o;
    o.input = {1, 8, 8};
    o.num_classes = 10;
    o.conv_dropout = conv_drop;
    o.linear_dropout = lin_drop;
    return preset_model("vgg-mini", o);
}

}  // namespace

TEST(ModelSpec, OneConvShapes) {
    const ModelSpec s = one_conv_spec();
    s.validate();
    const ModelState st = build_model<float>(s, 1);
    ASSERT_EQ(st.params.size(), 2u);
    EXPECT_EQ(st.params[0].weight.shape(), (Shape{8, 3, 3, 3}));
    EXPECT_EQ(st.params[0].mask.nnz(), st.params[0].mask.size());
    EXPECT_EQ(st.params[1].weight.shape(), (Shape{2, 128}));
    EXPECT_EQ(st.params[0].momentum.shape(), st.params[0].weight.shape());
}

TEST(ModelSpec, PresetsValidate) {
    for (const char* name : {"vgg-mini", "vgg9-meta", "vgg16"}) {
        PresetOptions o;
        const ModelSpec s = preset_model(name, o);
        EXPECT_NO_THROW(s.validate()) << name;
        EXPECT_EQ(s.output_shapes().back(), (Shape{10})) << name;
        EXPECT_FALSE(s.is_spiking(s.weight_layers().back())) << name;
    }
    EXPECT_THROW(preset_model("resnet", PresetOptions{}), ConfigError);
}

TEST(ModelSpec, VggMiniHasFourConvsAndTwoLinears) {
    const ModelSpec s = mini(0.2, 0.5);
    std::size_t convs = 0, linears = 0;
    for (const auto& l : s.layers) {
        convs += l.kind == LayerKind::Conv;
        linears += l.kind == LayerKind::Linear;
    }
    EXPECT_EQ(convs, 4u);
    EXPECT_EQ(linears, 2u);
}

TEST(ModelSpec, SerializeRoundTrip) {
    const ModelSpec s = mini(0.05, 0.5);
    const ModelSpec back = ModelSpec::parse(s.serialize());
    EXPECT_EQ(back.serialize(), s.serialize());
    EXPECT_EQ(back.input, s.input);
    EXPECT_EQ(back.num_classes, s.num_classes);
}

TEST(ModelSpec, RejectsBadGeometryAndMissingHead) {
    ModelSpec s = one_conv_spec();
    s.layers.pop_back();
    EXPECT_ANY_THROW(s.validate());
    ModelSpec t = one_conv_spec();
    t.layers.back() = LayerSpec::linear(3);
    EXPECT_ANY_THROW(t.validate());
    ModelSpec u = one_conv_spec();
    u.layers.insert(u.layers.begin(), LayerSpec::conv(4, 7, 1, 0));
    EXPECT_THROW(u.validate(), DimensionError);
}

TEST(BuildModel, SameSeedIsBitwiseIdentical) {
    const ModelSpec s = mini();
    const ModelState a = build_model<float>(s, 42), b = build_model<float>(s, 42), c = build_model<float>(s, 43);
    for (std::size_t i = 0; i < a.params.size(); ++i) EXPECT_EQ(a.params[i].weight, b.params[i].weight);
    EXPECT_FALSE(a.params[0].weight == c.params[0].weight);
}

TEST(BuildModel, HeInitStandardDeviation) {
    ModelSpec s;
    s.input = {16, 6, 6};
    s.num_classes = 10;
    s.layers = {LayerSpec::conv(32, 3, 1, 1), LayerSpec::relu(), LayerSpec::linear(10)};
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const ModelState st = build_model<float>(s, seed);
        for (float v : st.params[0].weight.data()) {
            sum += v;
            sq += double(v) * v;
            ++n;
        }
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sq / n - mean * mean);
    const double he = std::sqrt(2.0 / (16 * 9));
    EXPECT_NEAR(sd / he, 1.0, 0.05);
}

TEST(AnnForward, ZeroInputZeroWeightsGivesUniformSoftmax) {
    const ModelSpec s = mini();
    ModelState st = build_model<float>(s, 1);
    for (auto& p : st.params) p.weight.fill(0.0f);
    const Tensor x({3, 1, 8, 8});
    auto f = ann_forward(st, s, x, false);
    const Var loss = f.tape.softmax_cross_entropy(f.logits, {0, 4, 9});
    EXPECT_NEAR(f.tape.value(loss)[0], std::log(10.0), 1e-6);
}

TEST(AnnForward, MaskedHeadGivesZeroLogits) {
    const ModelSpec s = mini();
    ModelState st = build_model<float>(s, 1);
    auto& head = st.params.back();
    head.mask = PruneMask(head.weight.shape(), false);
    Rng rng(5);
    Tensor x({2, 1, 8, 8});
    for (auto& v : x.storage()) v = static_cast<float>(rng.uniform());
    const auto outs = ann_infer(st, s, x);
    for (float v : outs.back().data()) EXPECT_EQ(v, 0.0f);
    auto f = ann_forward(st, s, x, false);
    for (float v : f.tape.value(f.logits).data()) EXPECT_EQ(v, 0.0f);
}

TEST(AnnForward, ExposesEveryLayerOutput) {
    const ModelSpec s = mini(0.2, 0.5);
    const ModelState st = build_model<float>(s, 1);
    const Tensor x({2, 1, 8, 8}, 0.5f);
    const auto outs = ann_infer(st, s, x);
    ASSERT_EQ(outs.size(), s.layers.size());
    const auto shapes = s.output_shapes();
    for (std::size_t i = 0; i < outs.size(); ++i) {
        Shape want{2};
        want.insert(want.end(), shapes[i].begin(), shapes[i].end());
        EXPECT_EQ(outs[i].shape(), want) << "layer " << i;
    }
}

TEST(AnnForward, DropoutZeroTrainEqualsEval) {
    const ModelSpec s = mini(0.0, 0.0);
    const ModelState st = build_model<float>(s, 3);
    Rng rng(6);
    Tensor x({4, 1, 8, 8});
    for (auto& v : x.storage()) v = static_cast<float>(rng.uniform());
    Rng drop(1);
    auto train = ann_forward(st, s, x, true, &drop);
    auto eval = ann_forward(st, s, x, false);
    EXPECT_EQ(train.tape.value(train.logits), eval.tape.value(eval.logits));
    EXPECT_EQ(eval.tape.value(eval.logits), ann_infer(st, s, x).back());
}

TEST(AnnForward, RejectsWrongBatchShape) {
    const ModelSpec s = mini();
    const ModelState st = build_model<float>(s, 1);
    EXPECT_THROW(ann_infer(st, s, Tensor({2, 3, 8, 8})), DimensionError);
}

TEST(AnnForward, MaskedWeightGradientsAreDense) {
    const ModelSpec s = one_conv_spec();
    ModelState st = build_model<float>(s, 1);
    st.params[0].mask.set(0, false);
    st.apply_masks();
    Tensor x({1, 3, 4, 4}, 1.0f);
    auto f = ann_forward(st, s, x, false);
    const Var loss = f.tape.softmax_cross_entropy(f.logits, {1});
    const auto g = f.tape.backward(loss);
    EXPECT_EQ(f.tape.value(f.weights[0])[0], 0.0f);
    // The masked position still gets a gradient, used to rank regrowth.
    EXPECT_NE(g.of(f.weights[0])[0], 0.0f);
}

TEST(Sgd, ArithmeticExample) {
    BasicModelState<double> st;
    st.params.push_back({0, "w", Tensor64({1}, 1.0), PruneMask({1}), Tensor64({1}, 0.0), 1.0, 1.0});
    OptimizerConfig cfg;
    cfg.momentum = 0.9;
    cfg.weight_decay = 0.0;
    sgd_momentum_step(st, {Tensor64({1}, 1.0)}, cfg, 0.1);
    EXPECT_DOUBLE_EQ(st.params[0].momentum[0], 1.0);
    EXPECT_DOUBLE_EQ(st.params[0].weight[0], 0.9);
}

TEST(Sgd, ZeroGradientZeroMomentumLeavesWeights) {
    BasicModelState<double> st;
    st.params.push_back({0, "w", Tensor64({3}, 0.7), PruneMask({3}), Tensor64({3}), 1.0, 1.0});
    OptimizerConfig cfg;
    cfg.weight_decay = 0.0;
    sgd_momentum_step(st, {Tensor64({3})}, cfg, 0.1);
    for (double v : st.params[0].weight.data()) EXPECT_EQ(v, 0.7);
}

TEST(Sgd, MaskedPositionStaysZero) {
    BasicModelState<double> st;
    PruneMask m({2});
    m.set(1, false);
    st.params.push_back({0, "w", Tensor64({2}, std::vector<double>{1.0, 0.0}), m, Tensor64({2}), 1.0, 1.0});
    OptimizerConfig cfg;
    for (int i = 0; i < 5; ++i) sgd_momentum_step(st, {Tensor64({2}, std::vector<double>{0.3, -5.0})}, cfg, 0.1);
    EXPECT_EQ(st.params[0].weight[1], 0.0);
    EXPECT_NE(st.params[0].momentum[1], 0.0);
}

TEST(Optimizer, LrScheduleIsExactProduct) {
    OptimizerConfig cfg;
    cfg.lr = 0.01;
    cfg.milestones = {{150, 0.1}, {180, 0.1}, {210, 0.1}};
    EXPECT_EQ(cfg.lr_at(0), 0.01);
    EXPECT_EQ(cfg.lr_at(149), 0.01);
    EXPECT_EQ(cfg.lr_at(150), 0.01 * 0.1);
    EXPECT_EQ(cfg.lr_at(185), 0.01 * 0.1 * 0.1);
    EXPECT_EQ(cfg.lr_at(239), 0.01 * 0.1 * 0.1 * 0.1);
    OptimizerConfig bad;
    bad.milestones = {{20, 0.5}, {10, 0.5}};
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Optimizer, AdamFirstStepMovesByLr) {
    Adam<double> adam;
    Tensor64 p({2}, std::vector<double>{1.0, -1.0});
    adam.step({&p}, {Tensor64({2}, std::vector<double>{0.5, -2.0})}, 0.01);
    EXPECT_NEAR(p[0], 0.99, 1e-9);
    EXPECT_NEAR(p[1], -0.99, 1e-9);
    EXPECT_EQ(adam.steps(), 1u);
}

TEST(Data, EpochOrderIsAPermutationAndReproducible) {
    const auto a = epoch_order(100, 7, 3), b = epoch_order(100, 7, 3), c = epoch_order(100, 7, 4);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, identity_order(100));
}
