#pragma once

#include "hedge/ad/matrix.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace hedge::ad {

using NodeId = std::size_t;

/// Per-feature statistics of a training-mode batchnorm (biased variance).
struct BatchStats {
    Matrix mean;
    Matrix var;
};

/// Reverse-mode tape over batch matrices.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order. backward() walks it once from the root down to node 0 and
/// accumulates gradients additively. Nodes that depend on no variable carry no
/// gradient and are skipped.
class Tape {
public:
    using Scalar = std::function<double(double)>;

    NodeId constant(Matrix value);
    NodeId variable(Matrix value);

    const Matrix& value(NodeId id) const { return nodes_.at(id).value; }
    /// Gradient of the last backward() root with respect to this node; an empty
    /// matrix if no gradient reached it.
    const Matrix& grad(NodeId id) const { return nodes_.at(id).grad; }
    bool needs_grad(NodeId id) const { return nodes_.at(id).needs_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// x [n x in], w [out x in], b [1 x out] -> x w^T + b.
    NodeId affine(NodeId x, NodeId w, NodeId b);
    /// max(x, 0), with derivative 0 at x == 0.
    NodeId relu(NodeId x);
    /// Normalizes each column by its batch mean and biased variance, then
    /// applies scale [1 x d] and shift [1 x d]. Fills *stats when given.
    NodeId batchnorm_train(NodeId x, NodeId scale, NodeId shift, double eps, BatchStats* stats = nullptr);
    NodeId batchnorm_eval(NodeId x, NodeId scale, NodeId shift, const Matrix& mean, const Matrix& var, double eps);

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId add_scalar(NodeId a, double c);
    NodeId square(NodeId a);
    /// Elementwise f with derivative df.
    NodeId map(NodeId a, Scalar f, Scalar df);
    /// Column concatenation of two matrices with equal row counts.
    NodeId hcat(NodeId a, NodeId b);
    /// Repeats a [1 x d] row n times.
    NodeId broadcast_rows(NodeId a, std::size_t n);
    /// Sum (resp. mean) of all entries as a 1 x 1 node.
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);

    /// Seeds d root = 1 for a 1 x 1 root.
    void backward(NodeId root);
    /// Seeds d root = seed; seed must have the root's shape.
    void backward(NodeId root, const Matrix& seed);

    void zero_grad();
    void clear() { nodes_.clear(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool needs_grad = false;
        std::function<void(Tape&, NodeId)> back;
    };

    NodeId push(Matrix value, bool needs_grad, std::function<void(Tape&, NodeId)> back);
    Matrix& grad_buffer(NodeId id);

    std::vector<Node> nodes_;
};

}  // namespace hedge::ad
