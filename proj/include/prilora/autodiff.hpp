#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "prilora/tensor.hpp"

namespace prilora::ad {

/// Handle to a node of a Graph.
struct Var {
    std::size_t id = 0;
};

/// Reverse-mode tape over whole tensors.
///
/// Nodes are appended in evaluation order, so the tape is already
/// topologically sorted and backward() is a single reverse sweep. Only the op
/// set below is supported; there is no general graph machinery.
class Graph {
public:
    using Backward = std::function<void(Graph&, std::size_t self)>;

    /// Leaf that never receives gradient.
    Var constant(Tensor value);
    /// Leaf that accumulates gradient.
    Var parameter(Tensor value);

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
    /// Accumulated gradient; an all-zero tensor when none has flowed in.
    Tensor grad(Var v) const;

    /// Seeds d(out)/d(out) = 1 on a single-element node and sweeps the tape.
    void backward(Var out);

    std::size_t size() const noexcept { return nodes_.size(); }

    // Used by op implementations.
    Var push(Tensor value, bool requires_grad, Backward backward);
    const Tensor& value_at(std::size_t id) const { return nodes_[id].value; }
    bool needs_grad_at(std::size_t id) const { return nodes_[id].requires_grad; }
    const Tensor& grad_at(std::size_t id) const { return nodes_[id].grad; }
    /// Gradient buffer of node `id`, allocated as zeros on first touch.
    Tensor& grad_buffer(std::size_t id);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        Backward backward;
    };
    std::vector<Node> nodes_;
};

/// a[m x k] * b[p x k]^T.
Var matmul_nt(Graph& g, Var a, Var b);
Var add(Graph& g, Var a, Var b);
/// Adds a length-p vector to every row of an [m x p] matrix.
Var add_bias(Graph& g, Var x, Var bias);
Var scale(Graph& g, Var a, double c);
/// Elementwise product.
Var mul(Graph& g, Var a, Var b);
Var relu(Graph& g, Var a);
/// Per-row normalization to zero mean and unit variance, no affine part.
Var layer_norm(Graph& g, Var a, double eps = 1e-5);

/// Scaled dot-product self-attention. q, k, v are [(batch*seq) x d], rows
/// grouped by sample; heads split the feature axis evenly.
Var attention(Graph& g, Var q, Var k, Var v, std::size_t batch, std::size_t seq, std::size_t heads);

/// Averages the seq rows of each sample: [(batch*seq) x d] -> [batch x d].
Var mean_pool(Graph& g, Var x, std::size_t batch, std::size_t seq);
/// Sum of all elements, as a [1] tensor.
Var sum(Graph& g, Var a);
/// Mean softmax cross-entropy over rows of logits [batch x classes].
Var softmax_cross_entropy(Graph& g, Var logits, std::span<const int> labels);
/// Mean of (pred - target)^2 over a [batch x 1] prediction.
Var mean_squared_error(Graph& g, Var pred, std::span<const double> targets);

/// Row-wise softmax probabilities (no gradient), used for evaluation.
Tensor softmax_rows(const Tensor& logits);

}  // namespace prilora::ad
