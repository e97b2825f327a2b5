#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "advgrad/rng.h"
#include "advgrad/tensor.h"

namespace advgrad {

class GraphError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using NodeId = int;

enum class Op {
    Leaf,
    Conv2d,
    MaxPool2d,
    Crop2d,
    Affine,
    Relu,
    Softmax,
    Dropout,
    Reshape,
    CrossEntropy,
    Sum,
    Add,
    Mul,
    Scale,
};

struct Node {
    Op op = Op::Leaf;
    std::vector<NodeId> inputs;
    Tensor value;
    // op-specific state
    int stride = 1, pad = 0, pool = 1;
    int crop_h = 0, crop_w = 0;
    float scale_factor = 0.0f;
    Tensor mask;                  // dropout: entries 0 or 1/(1-rate)
    std::vector<int64_t> argmax;  // maxpool winners
};

/// Gradients produced by one backward pass. by_parameter is keyed by the
/// leaf's node id; by_input is present when requested.
struct Gradients {
    std::map<NodeId, Tensor> by_parameter;
    std::optional<Tensor> by_input;
};

/// Tape of one forward pass. Ops append nodes in execution order, so each
/// node's inputs always precede it; backward is a single reverse sweep.
/// Build, run backward, discard. Single-threaded per instance.
class Graph {
public:
    /// Leaf holding a parameter or constant. Leaves with requires_grad set
    /// receive an entry in Gradients.by_parameter.
    NodeId leaf(Tensor t);
    /// Designated network input; at most one per graph.
    NodeId input(Tensor t);

    NodeId conv2d(NodeId in, NodeId kernels, NodeId bias, int stride, int padding);
    NodeId maxpool2d(NodeId in, int pool);
    /// Keeps the top-left new_h x new_w of each plane.
    NodeId crop2d(NodeId in, int new_h, int new_w);
    NodeId affine(NodeId in, NodeId weights, NodeId bias);
    NodeId relu(NodeId in);
    NodeId softmax(NodeId in);
    NodeId dropout(NodeId in, float rate, Rng& rng);
    NodeId reshape(NodeId in, std::vector<int> shape);
    NodeId cross_entropy(NodeId probs, NodeId onehot);
    NodeId sum(NodeId in);
    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId in, float factor);

    const Tensor& value(NodeId id) const { return node(id).value; }
    const Node& node(NodeId id) const;
    size_t size() const { return nodes_.size(); }
    std::optional<NodeId> input_node() const { return input_; }

    /// Reverse sweep from a scalar loss. Returns a gradient for every
    /// requires_grad leaf (zeros if the leaf does not reach the loss) and,
    /// if requested, for the designated input.
    Gradients backward(NodeId loss, bool want_input_grad) const;

    /// Re-evaluates the recorded computation in double precision with one
    /// leaf's values replaced; returns the (scalar) value of `out`.
    /// Dropout masks and all shapes are replayed as recorded.
    double replay_double(NodeId out, NodeId varied_leaf, const std::vector<double>& leaf_values) const;

private:
    NodeId push(Node n);
    void check_id(NodeId id) const;

    std::vector<Node> nodes_;
    std::optional<NodeId> input_;
};

/// Max relative error between the tape gradient of f and central finite
/// differences at step h: max_i |analytic_i - central_i| /
/// max(|analytic_i|, |central_i|, 1e-8). The reference value is computed
/// by double-precision replay.
double finite_difference_check(const std::function<NodeId(Graph&, NodeId)>& f, const Tensor& x,
                               double h);

}  // namespace advgrad
