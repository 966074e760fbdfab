#include "sparsnn/models/optimizer.hpp"

#include <cmath>
#include <string>

namespace sparsnn {

void OptimizerConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr))
        throw ConfigError("learning rate must be finite and non-negative, got " + std::to_string(lr));
    for (std::size_t i = 1; i < milestones.size(); ++i)
        if (milestones[i].epoch <= milestones[i - 1].epoch)
            throw ConfigError("learning-rate milestones must be strictly increasing");
}

double OptimizerConfig::lr_at(std::size_t epoch) const {
    double out = lr;
    for (const auto& m : milestones)
        if (epoch >= m.epoch) out *= m.factor;
    return out;
}

template <typename T>
void sgd_momentum_step(BasicModelState<T>& state, const std::vector<BasicTensor<T>>& grads,
                       const OptimizerConfig& cfg, double lr) {
    SPARSNN_CHECK(grads.size() == state.params.size(), "one gradient per parameter layer");
    const T m = static_cast<T>(cfg.momentum);
    const T wd = static_cast<T>(cfg.weight_decay);
    const T step = static_cast<T>(lr);
    for (std::size_t li = 0; li < state.params.size(); ++li) {
        auto& p = state.params[li];
        const auto& g = grads[li];
        if (g.shape() != p.weight.shape())
            throw DimensionError("gradient " + shape_string(g.shape()) + " does not match weight " +
                                 shape_string(p.weight.shape()) + " of " + p.name);
        if (!g.all_finite()) throw NumericError("non-finite gradient for " + p.name);
        auto w = p.weight.data();
        auto mu = p.momentum.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            mu[i] = m * mu[i] + (g[i] + wd * w[i]);
            w[i] -= step * mu[i];
        }
        p.mask.apply(p.weight);
    }
    ++state.step;
}

template <typename T>
void Adam<T>::step(std::vector<BasicTensor<T>*> params, const std::vector<BasicTensor<T>>& grads, double lr) {
    SPARSNN_CHECK(params.size() == grads.size(), "one gradient per Adam slot");
    if (m_.empty()) {
        for (auto* p : params) {
            m_.emplace_back(p->shape());
            v_.emplace_back(p->shape());
        }
    }
    SPARSNN_CHECK(m_.size() == params.size(), "Adam slot layout changed between steps");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t s = 0; s < params.size(); ++s) {
        auto& p = *params[s];
        const auto& g = grads[s];
        SPARSNN_CHECK(g.shape() == p.shape() && m_[s].shape() == p.shape(), "Adam slot shape mismatch");
        if (!g.all_finite()) throw NumericError("non-finite gradient in Adam slot " + std::to_string(s));
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i];
            const double mi = beta1_ * m_[s][i] + (1.0 - beta1_) * gi;
            const double vi = beta2_ * v_[s][i] + (1.0 - beta2_) * gi * gi;
            m_[s][i] = static_cast<T>(mi);
            v_[s][i] = static_cast<T>(vi);
            const double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps_);
            p[i] = static_cast<T>(p[i] - update);
        }
    }
}

template void sgd_momentum_step(BasicModelState<float>&, const std::vector<Tensor>&, const OptimizerConfig&, double);
template void sgd_momentum_step(BasicModelState<double>&, const std::vector<Tensor64>&, const OptimizerConfig&,
                                double);
template class Adam<float>;
template class Adam<double>;

}  // namespace sparsnn
