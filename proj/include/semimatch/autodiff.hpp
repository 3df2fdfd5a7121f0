#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "semimatch/tensor.hpp"

namespace semimatch {

// Reverse-mode differentiation over a dynamically recorded DAG. Nodes are
// created by the free functions below; backward() seeds the (scalar) loss
// gradient and walks the graph once in reverse topological order,
// accumulating gradients additively into every grad-requiring node.

class Node;
using NodePtr = std::shared_ptr<Node>;

class Node {
public:
    Tensor value;
    Tensor grad;  // materialized by backward(); same shape as value
    bool requires_grad = false;
    std::vector<NodePtr> inputs;
    std::function<void(Node&)> backprop;  // accumulates into inputs' grads
    const char* op = "leaf";

    void ensure_grad() {
        if (grad.size() != value.size()) grad = Tensor(value.shape());
    }
};

// Value-semantics handle to a graph node.
class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : node_(std::move(n)) {}

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    NodePtr node() const { return node_; }

    // New leaf sharing no history with this node.
    Var detach() const;

private:
    NodePtr node_;
};

Var leaf(Tensor value, bool requires_grad = false);
Var constant(Tensor value);

// Elementwise (same-shape operands).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, real c);
Var add_scalar(const Var& a, real c);
Var exp_(const Var& a);
Var log_(const Var& a);
Var sqrt_(const Var& a);
Var relu(const Var& a);

// Shape ops.
Var reshape(const Var& a, std::vector<int> shape);
Var transpose2d(const Var& a);

// Contractions.
Var matmul(const Var& a, const Var& b);  // [M,K] x [K,N] -> [M,N]

// conv2d: x [N,Ci,H,W], w [Co,Ci,kh,kw], bias [Co] (optional, pass
// undefined Var to omit). Zero padding `pad`, square stride `stride`.
Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad);

// Row-wise over the last axis.
Var softmax_lastdim(const Var& a);
Var log_softmax_lastdim(const Var& a);
Var sum_lastdim(const Var& a);

Var sum_all(const Var& a);  // -> shape [1]

// Per-column L2 normalization of a [C,N] matrix: each column divided by
// sqrt(sum of squares + eps).
Var l2_normalize_columns(const Var& a, real eps = real(1e-12));

// y[k,:] = x[rows[k],:] for a [M,N] input.
Var gather_rows(const Var& a, std::vector<int> rows);

// y[m] = x[m, cols[m]]; cols[m] == -1 yields 0 (masked-out row).
Var pick_per_row(const Var& a, std::vector<int> cols);

// Bilinear resampling of img [C,H,W] at continuous source coordinates.
// coords is [2,Ho,Wo] (plane 0 = x, plane 1 = y), valid is [Ho,Wo] with
// entries in {0,1}; invalid positions output zero. Out-of-bounds corner
// taps contribute zero. Differentiable w.r.t. img only.
Var grid_sample_op(const Var& img, const Tensor& coords, const Tensor& valid);

// Populates .grad on every grad-requiring node reachable from loss.
// loss must be scalar (single element); throws otherwise.
void backward(const Var& loss);

}  // namespace semimatch
