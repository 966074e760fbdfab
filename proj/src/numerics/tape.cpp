#include "sparsnn/numerics/tape.hpp"

#include <string>

namespace sparsnn {

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Conv2d: return "conv2d";
        case OpKind::Linear: return "linear";
        case OpKind::Relu: return "relu";
        case OpKind::AvgPool2d: return "avgpool2d";
        case OpKind::Dropout: return "dropout";
        case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
        case OpKind::Add: return "add";
        case OpKind::Mul: return "mul";
        case OpKind::Scale: return "scale";
        case OpKind::Sum: return "sum";
    }
    return "?";
}

template <typename T>
Var Tape<T>::push(Node n) {
    if (!n.value.all_finite())
        throw NumericError(std::string("non-finite value produced by ") + op_name(n.kind) + " (tape node " +
                           std::to_string(nodes_.size()) + ")");
    if (n.kind != OpKind::Leaf) {
        n.requires_grad = false;
        for (auto i : n.inputs) n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
    }
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) throw InvariantError("tape: variable does not belong to this tape");
    return nodes_[v.id];
}

template <typename T>
const BasicTensor<T>& Tape<T>::value(Var v) const {
    return node(v).value;
}

template <typename T>
bool Tape<T>::is_parameter(Var v) const {
    const Node& n = node(v);
    return n.kind == OpKind::Leaf && n.requires_grad;
}

template <typename T>
Var Tape<T>::parameter(TensorT value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    return push(std::move(n));
}

template <typename T>
Var Tape<T>::constant(TensorT value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

template <typename T>
Var Tape<T>::conv2d(Var x, Var w, ops::ConvGeometry g) {
    Node n;
    n.kind = OpKind::Conv2d;
    n.value = ops::conv2d(value(x), value(w), g);
    n.inputs = {x.id, w.id};
    n.conv = g;
    return push(std::move(n));
}

template <typename T>
Var Tape<T>::linear(Var x, Var w) {
    Node n;
    n.kind = OpKind::Linear;
    n.value = ops::linear(value(x), value(w));
    n.inputs = {x.id, w.id};
    return push(std::move(n));
}

template <typename T>
Var Tape<T>::relu(Var x) {
    Node n;
    n.kind = OpKind::Relu;
    n.value = ops::relu(value(x));
    n.inputs = {x.id};
    return push(std::move(n));
}

template <typename T>
Var Tape<T>::avgpool2d(Var x, std::size_t k) {
    Node n;
    n.kind = OpKind::AvgPool2d;
    n.value = ops::avgpool2d(value(x), k);
    n.inputs = {x.id};
    n.pool = k;
    return push(std::move(n));
}

template <typename T>
Var Tape<T>::dropout(Var x, TensorT mask) {
    Node n;
    n.kind = OpKind::Dropout;
    n.value = ops::mul(value(x), mask);
    n.inputs = {x.id};
    n.saved = std::move(mask);
    return push(std::move(n));
}

template <typename T>
Var Tape<T>::softmax_cross_entropy(Var logits, std::vector<int> labels) {
    Node n;
    n.kind = OpKind::SoftmaxCrossEntropy;
    n.value = TensorT({1}, ops::softmax_cross_entropy(value(logits), labels));
    n.inputs = {logits.id};
    n.labels = std::move(labels);
    return push(std::move(n));
}

template <typename T>
Var Tape<T>::add(Var a, Var b) {
    Node n;
    n.kind = OpKind::Add;
    n.value = ops::add(value(a), value(b));
    n.inputs = {a.id, b.id};
    return push(std::move(n));
}

template <typename T>
Var Tape<T>::mul(Var a, Var b) {
    Node n;
    n.kind = OpKind::Mul;
    n.value = ops::mul(value(a), value(b));
    n.inputs = {a.id, b.id};
    return push(std::move(n));
}

template <typename T>
Var Tape<T>::scale(Var a, T s) {
    Node n;
    n.kind = OpKind::Scale;
    n.value = ops::scale(value(a), s);
    n.inputs = {a.id};
    n.scalar = s;
    return push(std::move(n));
}

template <typename T>
Var Tape<T>::sum(Var a) {
    Node n;
    n.kind = OpKind::Sum;
    n.value = TensorT({1}, value(a).sum());
    n.inputs = {a.id};
    return push(std::move(n));
}

template <typename T>
const BasicTensor<T>& Tape<T>::Gradients::of(Var v) const {
    if (!has(v)) throw InvariantError("tape: gradient requested for a variable that is not a parameter leaf");
    return *grads_[v.id];
}

template <typename T>
bool Tape<T>::Gradients::has(Var v) const {
    return v.valid() && v.id < grads_.size() && grads_[v.id].has_value();
}

template <typename T>
typename Tape<T>::Gradients Tape<T>::backward(Var loss) const {
    return backward(loss, T{1});
}

template <typename T>
typename Tape<T>::Gradients Tape<T>::backward(Var loss, T loss_grad) const {
    if (node(loss).value.size() != 1) throw DimensionError("backward: loss must be a scalar, got shape " +
                                                           shape_string(node(loss).value.shape()));
    std::pair<Var, TensorT> seed{loss, TensorT({1}, loss_grad)};
    return backward(std::span<const std::pair<Var, TensorT>>(&seed, 1));
}

template <typename T>
typename Tape<T>::Gradients Tape<T>::backward(std::span<const std::pair<Var, TensorT>> seeds) const {
    if (nodes_.empty()) throw InvariantError("backward: empty tape");
    std::vector<std::optional<TensorT>> g(nodes_.size());
    auto accumulate = [&](std::size_t i, TensorT grad) {
        if (!nodes_[i].requires_grad) return;
        if (g[i]) ops::axpy(*g[i], T{1}, grad);
        else g[i] = std::move(grad);
    };
    for (const auto& [v, grad] : seeds) {
        const Node& n = node(v);
        if (grad.shape() != n.value.shape())
            throw DimensionError("backward: seed gradient shape " + shape_string(grad.shape()) +
                                 " does not match node shape " + shape_string(n.value.shape()));
        accumulate(v.id, grad);
    }

    for (std::size_t idx = nodes_.size(); idx-- > 0;) {
        const Node& n = nodes_[idx];
        if (n.kind == OpKind::Leaf || !g[idx]) continue;
        const TensorT& gy = *g[idx];
        const auto in = [&](std::size_t k) -> const Node& { return nodes_[n.inputs.at(k)]; };
        switch (n.kind) {
            case OpKind::Conv2d:
                if (in(0).requires_grad)
                    accumulate(n.inputs[0], ops::conv2d_grad_input(gy, in(1).value, in(0).value.shape(), n.conv));
                if (in(1).requires_grad)
                    accumulate(n.inputs[1], ops::conv2d_grad_weight(gy, in(0).value, in(1).value.shape(), n.conv));
                break;
            case OpKind::Linear:
                if (in(0).requires_grad)
                    accumulate(n.inputs[0], ops::linear_grad_input(gy, in(1).value, in(0).value.shape()));
                if (in(1).requires_grad)
                    accumulate(n.inputs[1], ops::linear_grad_weight(gy, in(0).value, in(1).value.shape()));
                break;
            case OpKind::Relu:
                accumulate(n.inputs[0], ops::relu_grad(gy, in(0).value));
                break;
            case OpKind::AvgPool2d:
                accumulate(n.inputs[0], ops::avgpool2d_grad(gy, in(0).value.shape(), n.pool));
                break;
            case OpKind::Dropout:
                if (!n.saved) throw InvariantError("backward: dropout node is missing its saved mask");
                accumulate(n.inputs[0], ops::mul(gy, *n.saved));
                break;
            case OpKind::SoftmaxCrossEntropy: {
                TensorT gl = ops::softmax_cross_entropy_grad(in(0).value, n.labels);
                accumulate(n.inputs[0], ops::scale(gl, gy[0]));
                break;
            }
            case OpKind::Add:
                accumulate(n.inputs[0], gy);
                accumulate(n.inputs[1], gy);
                break;
            case OpKind::Mul:
                if (in(0).requires_grad) accumulate(n.inputs[0], ops::mul(gy, in(1).value));
                if (in(1).requires_grad) accumulate(n.inputs[1], ops::mul(gy, in(0).value));
                break;
            case OpKind::Scale:
                accumulate(n.inputs[0], ops::scale(gy, n.scalar));
                break;
            case OpKind::Sum:
                accumulate(n.inputs[0], TensorT(in(0).value.shape(), gy[0]));
                break;
            case OpKind::Leaf:
                break;
        }
    }

    Gradients out;
    out.grads_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        if (n.kind != OpKind::Leaf || !n.requires_grad) continue;
        out.grads_[i] = g[i] ? std::move(*g[i]) : TensorT(n.value.shape());
    }
    return out;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace sparsnn
