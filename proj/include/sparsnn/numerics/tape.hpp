#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sparsnn/numerics/ops.hpp"

namespace sparsnn {

// Handle to a value recorded on a tape.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
    bool valid() const noexcept { return id != static_cast<std::size_t>(-1); }
};

enum class OpKind {
    Leaf,
    Conv2d,
    Linear,
    Relu,
    AvgPool2d,
    Dropout,
    SoftmaxCrossEntropy,
    Add,
    Mul,
    Scale,
    Sum,
};

const char* op_name(OpKind kind);

// Linear record of a sequential computation over a closed op set. Backward
// walks the record in exact reverse order; each node keeps whatever it needs
// for its vector-Jacobian product, so nothing is recomputed.
template <typename T>
class Tape {
public:
    using TensorT = BasicTensor<T>;

    // Leaves. Parameters receive gradients; constants do not.
    Var parameter(TensorT value);
    Var constant(TensorT value);

    Var conv2d(Var x, Var w, ops::ConvGeometry g);
    Var linear(Var x, Var w);
    Var relu(Var x);
    Var avgpool2d(Var x, std::size_t k);
    // `mask` comes from ops::dropout_mask and is saved for backward.
    Var dropout(Var x, TensorT mask);
    Var softmax_cross_entropy(Var logits, std::vector<int> labels);
    Var add(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, T s);
    Var sum(Var a);

    const TensorT& value(Var v) const;
    bool is_parameter(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }
    bool empty() const noexcept { return nodes_.empty(); }

    class Gradients {
    public:
        // Gradient of a parameter leaf; zeros if nothing flowed into it.
        const TensorT& of(Var v) const;
        bool has(Var v) const;

    private:
        friend class Tape;
        std::vector<std::optional<TensorT>> grads_;
    };

    // Gradient of a scalar loss with respect to every parameter leaf.
    Gradients backward(Var loss) const;
    Gradients backward(Var loss, T loss_grad) const;

    // Backward with several upstream gradients injected at arbitrary nodes,
    // e.g. a scalar loss plus a hand-derived gradient at an activation.
    Gradients backward(std::span<const std::pair<Var, TensorT>> seeds) const;

private:
    struct Node {
        OpKind kind = OpKind::Leaf;
        std::vector<std::size_t> inputs;
        TensorT value;
        bool requires_grad = false;
        // Saved context: dropout mask or scale factor.
        std::optional<TensorT> saved;
        T scalar{0};
        ops::ConvGeometry conv{};
        std::size_t pool = 0;
        std::vector<int> labels;
    };

    Var push(Node node);
    const Node& node(Var v) const;

    std::vector<Node> nodes_;
};

}  // namespace sparsnn
