#pragma once

// Reverse-mode autodiff on a dynamic tape. Each forward op appends a node
// holding its value and a closure that routes the node's gradient to its
// parents. backward() walks the tape in reverse creation order, which is a
// valid topological order by construction.

#include <functional>
#include <vector>

#include "eopt/tensor.hpp"

namespace eopt {

using NodeId = int32_t;

class Tape {
public:
    // Leaves. input() participates in gradients, constant() does not.
    NodeId input(Tensor value);
    NodeId constant(Tensor value);

    // a [..., K] x b [K, N] -> [..., N]; leading dims of a fold into rows.
    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    // x [..., N] + bias [N]
    NodeId add_bias(NodeId x, NodeId bias);
    // x [B, T, E] (or [T, E]) + table rows 0..T-1; table [P, E], P >= T.
    NodeId add_time(NodeId x, NodeId table);
    NodeId gelu(NodeId x);
    // per-row normalization over the last dim, eps = 1e-5
    NodeId layer_norm(NodeId x, NodeId gain, NodeId bias);
    NodeId slice_cols(NodeId x, int64_t begin, int64_t end);
    // q, k, v: [B, T, D] or [T, D]; multi-head scaled dot product with a
    // causal mask (position i attends to 0..i).
    NodeId causal_attention(NodeId q, NodeId k, NodeId v, int n_head);
    // mean over elements of the piecewise Huber penalty -> scalar
    NodeId huber(NodeId pred, NodeId target, double delta);
    NodeId sum(NodeId x);

    void backward(NodeId root);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    // scalar reductions (sum, huber) keep their double accumulation; other
    // nodes fall back to the stored float
    double scalar(NodeId id) const;
    const Tensor& grad(NodeId id) const;
    bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        double scalar_acc = 0.0;
        bool has_scalar_acc = false;
        bool requires_grad = false;
        std::function<void(Tape&)> backprop;
    };

    NodeId push(Tensor value, bool wants_grad, std::function<void(Tape&)> backprop);
    void accumulate(NodeId id, const float* g, int64_t n);

    std::vector<Node> nodes_;
};

struct AttentionWeights {
    NodeId qkv_w;   // [D, 3D]
    NodeId qkv_b;   // [3D]
    NodeId proj_w;  // [D, D]
    NodeId proj_b;  // [D]
};

// Full pre-projection attention block: qkv projection, masked multi-head
// attention, output projection.
NodeId causal_self_attention(Tape& tape, NodeId x, const AttentionWeights& w, int n_head);

// In-place softmax of a [t x t] score matrix under the causal mask. Row i is
// normalized over columns 0..i; masked entries come out exactly 0.
void causal_softmax_rows(float* scores, int64_t t);

// Plain (non-tape) GELU, tanh approximation.
float gelu_scalar(float x);

// Plain Huber mean, used by the tape op and by evaluation code.
double huber_mean(const float* pred, const float* target, int64_t n, double delta);

}  // namespace eopt
