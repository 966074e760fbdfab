#include "sparsnn/sparse/agc.hpp"

#include <algorithm>
#include <cmath>

namespace sparsnn {

void AgcConfig::validate() const {
    optimizer.validate();
    sparsity.validate();
    if (epochs == 0) throw ConfigError("ANN training needs at least one epoch");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    for (const auto& m : optimizer.milestones)
        if (m.epoch >= epochs)
            throw ConfigError("learning-rate milestone " + std::to_string(m.epoch) + " lies outside the " +
                              std::to_string(epochs) + "-epoch schedule");
}

namespace {

AgcEpochLog run_epoch(ModelState& state, const ModelSpec& spec, const DataView& train, const AgcConfig& cfg,
                      std::size_t epoch, std::uint64_t seed, const MetaModel& meta, bool guided,
                      AgDiagnostics* adiag) {
    const std::size_t n = train.size();
    if (n == 0) throw ConfigError("training set is empty");
    const auto order = epoch_order(n, seed, epoch);
    Rng dropout_rng = make_rng(splitmix64(seed) + epoch).split("dropout");
    AgcEpochLog log;
    log.epoch = epoch;
    log.lr = cfg.optimizer.lr_at(epoch);
    const double alpha = guided ? effective_alpha(cfg.attention.alpha, epoch, cfg.attention.cutoff_epoch) : 0.0;
    const bool use_ag = alpha > 0.0 && !cfg.attention.pairs.empty();
    if (use_ag && (!meta.spec || !meta.state)) throw ConfigError("attention guidance with alpha > 0 needs a meta model");

    double ce_sum = 0.0, ag_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
        const std::size_t end = std::min(n, begin + cfg.batch_size);
        const Tensor x = gather_batch(*train.images, order, begin, end);
        const std::vector<int> y = gather_labels(*train.labels, order, begin, end);
        AnnForward<float> f = ann_forward(state, spec, x, true, &dropout_rng);
        const Var loss = f.tape.softmax_cross_entropy(f.logits, y);
        const double ce = f.tape.value(loss)[0];
        std::vector<std::pair<Var, Tensor>> seeds{{loss, Tensor({1}, 1.0f)}};
        if (use_ag) {
            const auto meta_out = ann_infer(*meta.state, *meta.spec, x);
            std::vector<Tensor> ac, am;
            for (const auto& [c, m] : cfg.attention.pairs) {
                ac.push_back(f.tape.value(f.activations.at(c)));
                am.push_back(meta_out.at(m));
            }
            AgLossResult<float> ag =
                ag_loss_with_grad(ac, am, cfg.attention.power, alpha, cfg.attention.squared, adiag);
            ag_sum += ag.loss * static_cast<double>(end - begin);
            for (std::size_t j = 0; j < cfg.attention.pairs.size(); ++j)
                seeds.emplace_back(f.activations[cfg.attention.pairs[j].first], std::move(ag.grads[j]));
        }
        const auto grads = f.tape.backward(seeds);
        std::vector<Tensor> g;
        g.reserve(f.weights.size());
        for (Var w : f.weights) g.push_back(grads.of(w));
        sgd_momentum_step(state, g, cfg.optimizer, log.lr);

        ce_sum += ce * static_cast<double>(end - begin);
        const auto pred = ops::argmax_rows(f.tape.value(f.logits));
        for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == y[i];
    }
    log.ce = ce_sum / static_cast<double>(n);
    log.ag = ag_sum / static_cast<double>(n);
    log.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return log;
}

}  // namespace

AgcEpochLog agc_train_epoch(ModelState& state, const ModelSpec& spec, const DataView& train, const AgcConfig& cfg,
                            std::size_t epoch, std::uint64_t seed, const MetaModel& meta, SparsityDiagnostics* sdiag,
                            AgDiagnostics* adiag) {
    AgcEpochLog log = run_epoch(state, spec, train, cfg, epoch, seed, meta, true, adiag);
    const auto& sp = cfg.sparsity;
    if (sp.density < 1.0) {
        log.prune_rate = linear_decay(sp.initial_prune_rate, epoch, cfg.epochs);
        const std::size_t target = sp.mode == PruneMode::Channel ? active_budget(state, spec, sp.density, sp.mode) : 0;
        log.update = sparse_epoch_update(state, spec, log.prune_rate, sp.mode, sdiag, target);
        if (sp.mode == PruneMode::Irregular && log.update.active_after != log.update.active_before)
            throw InvariantError("prune/regrow changed the active weight count from " +
                                 std::to_string(log.update.active_before) + " to " +
                                 std::to_string(log.update.active_after));
    }
    log.density = static_cast<double>(state.active_weights()) / static_cast<double>(state.total_weights());
    log.sparsity = sparsity_report(state, epoch, sp.density < 1.0 ? &log.update : nullptr);
    state.epoch = epoch + 1;
    return log;
}

AgcEpochLog dense_train_epoch(ModelState& state, const ModelSpec& spec, const DataView& train, const AgcConfig& cfg,
                              std::size_t epoch, std::uint64_t seed) {
    AgcEpochLog log = run_epoch(state, spec, train, cfg, epoch, seed, {}, false, nullptr);
    log.density = static_cast<double>(state.active_weights()) / static_cast<double>(state.total_weights());
    log.sparsity = sparsity_report(state, epoch);
    state.epoch = epoch + 1;
    return log;
}

AnnEvalResult ann_evaluate(const ModelState& state, const ModelSpec& spec, const DataView& data,
                           std::size_t batch_size) {
    AnnEvalResult r;
    const std::size_t n = data.size();
    if (n == 0) return r;
    const auto order = identity_order(n);
    std::size_t correct = 0;
    double loss = 0.0;
    for (std::size_t begin = 0; begin < n; begin += batch_size) {
        const std::size_t end = std::min(n, begin + batch_size);
        const Tensor x = gather_batch(*data.images, order, begin, end);
        const std::vector<int> y = gather_labels(*data.labels, order, begin, end);
        const auto outs = ann_infer(state, spec, x);
        const auto pred = ops::argmax_rows(outs.back());
        for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == y[i];
        loss += ops::softmax_cross_entropy(outs.back(), y) * static_cast<double>(end - begin);
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    r.loss = loss / static_cast<double>(n);
    return r;
}

}  // namespace sparsnn
