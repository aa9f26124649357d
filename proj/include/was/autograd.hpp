#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "was/tensor.hpp"

namespace was::autograd {

using NodeId = int32_t;

// Dynamic tape for reverse-mode differentiation.
//
// Nodes are appended in creation order, which is a topological order by
// construction; backward() walks the tape once in reverse. A tape is built
// per forward pass and is single-threaded.
class Tape {
public:
    NodeId leaf(Tensor value, bool requires_grad, std::string label = "leaf");

    // input [N,C,H,W] (x) weight [O,C,kh,kw] -> [N,O,H',W'], cross-correlation.
    NodeId conv2d(NodeId input, NodeId weight, NodeId bias, int stride, int padding,
                  std::string label = "conv2d");
    // input [N,D] (x) weight [O,D] -> [N,O]
    NodeId linear(NodeId input, NodeId weight, NodeId bias, std::string label = "linear");
    NodeId relu(NodeId x, std::string label = "relu");
    // Ties route the gradient to the first max position in row-major order.
    NodeId maxpool2d(NodeId x, int k, int stride, std::string label = "maxpool2d");
    NodeId flatten(NodeId x, std::string label = "flatten");  // [N,C,H,W] -> [N,C*H*W]
    // Mean cross-entropy over the batch; returns a scalar node.
    NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels,
                                 std::string label = "softmax_xent");

    NodeId sum(NodeId x, std::string label = "sum");
    NodeId mul(NodeId a, NodeId b, std::string label = "mul");  // elementwise
    NodeId scale(NodeId x, float c, std::string label = "scale");

    // Accumulates gradients for every node that requires them. The loss node
    // must be scalar. One-shot: call once per tape.
    void backward(NodeId loss);

    const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
    const Tensor& grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].grad; }
    const std::string& label(NodeId id) const { return nodes_[static_cast<size_t>(id)].label; }
    size_t size() const { return nodes_.size(); }

    // Softmax probabilities cached by softmax_cross_entropy (for prediction).
    const Tensor& softmax_probs(NodeId xent_node) const;

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        const char* op = "leaf";
        std::string label;
        std::vector<NodeId> inputs;
        std::function<void(Tape&, NodeId)> backprop;  // adds into input grads
        std::shared_ptr<void> ctx;                    // op-specific cached state
    };

    NodeId push(Node node);
    Node& at(NodeId id) { return nodes_[static_cast<size_t>(id)]; }
    void check_finite(NodeId id) const;

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

}  // namespace was::autograd
