#pragma once

#include <utility>
#include <vector>

#include "sparsnn/models/model.hpp"

namespace sparsnn {

enum class OptimizerKind { SgdMomentum, Adam };

struct LrMilestone {
    std::size_t epoch = 0;
    double factor = 1.0;
};

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::SgdMomentum;
    double lr = 0.01;
    double momentum = 0.9;
    // Not stated for the ANN schedule; 5e-4 is a guess, set 0 to disable.
    double weight_decay = 5e-4;
    std::vector<LrMilestone> milestones;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    // Throws ConfigError unless lr >= 0 and milestones strictly increase.
    void validate() const;
    // base * product of the factors of every milestone with epoch >= milestone.
    double lr_at(std::size_t epoch) const;
};

// One step of masked SGD with momentum on every parameter layer:
//   mu <- m*mu + (grad + wd*w);  w <- w - lr*mu;  w <- w (.) mask
// Momentum is kept dense; it ranks pruned positions for regrowth.
template <typename T>
void sgd_momentum_step(BasicModelState<T>& state, const std::vector<BasicTensor<T>>& grads,
                       const OptimizerConfig& cfg, double lr);

// Adam state for an arbitrary list of parameter tensors.
template <typename T>
class Adam {
public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // Updates params[i] in place with grads[i]. The first call fixes the slot
    // layout; later calls must pass the same shapes in the same order.
    void step(std::vector<BasicTensor<T>*> params, const std::vector<BasicTensor<T>>& grads, double lr);

    std::size_t steps() const noexcept { return t_; }

private:
    double beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<BasicTensor<T>> m_, v_;
};

}  // namespace sparsnn
