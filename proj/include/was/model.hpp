#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "was/autograd.hpp"
#include "was/tensor.hpp"

namespace was::model {

enum class LayerKind { Conv, ReLU, MaxPool, Flatten, Linear };

struct LayerDef {
    LayerKind kind = LayerKind::ReLU;
    int64_t out = 0;  // conv out-channels / linear width
    int kernel = 0;
    int stride = 1;
    int padding = 0;
};

struct ArchitectureDef {
    std::string id;  // smallcnn | vgg16c | custom
    std::vector<LayerDef> layers;

    // Builtin ids; the final linear width is filled from num_classes.
    static ArchitectureDef named(const std::string& id, int64_t num_classes);
    static ArchitectureDef custom(const std::vector<std::string>& lines);

    std::vector<std::string> serialize() const;  // same grammar as custom()
};

// Parameterized layer resolved against concrete input dimensions.
struct ParamLayer {
    std::string name;  // conv1, conv2, ..., fc1, ...
    size_t layer_index = 0;
    bool is_conv = false;
    std::vector<int64_t> weight_shape;
    std::vector<int64_t> bias_shape;
    int64_t macs = 0;  // dense multiply-accumulates per sample
};

// Architecture checked against an input shape; shapes must compose and the
// final width must equal num_classes.
struct NetPlan {
    ArchitectureDef arch;
    int64_t in_c = 0, in_h = 0, in_w = 0;
    int64_t num_classes = 0;
    std::vector<ParamLayer> params;
};

NetPlan make_plan(const ArchitectureDef& arch, int64_t in_c, int64_t in_h, int64_t in_w,
                  int64_t num_classes);

// Builds the forward graph. weights/biases hold one node per plan.params
// entry, in order. Returns the logits node.
autograd::NodeId forward_net(const NetPlan& plan, autograd::Tape& tape, autograd::NodeId input,
                             const std::vector<autograd::NodeId>& weights,
                             const std::vector<autograd::NodeId>& biases);

// No-grad forward returning logits.
Tensor forward_logits(const NetPlan& plan, const std::vector<Tensor>& weights,
                      const std::vector<Tensor>& biases, const Tensor& input);

// Kaiming-uniform fan-in weight init; zero biases. Draws are keyed by
// (seed, layer id), independent of call order.
void init_params(const NetPlan& plan, uint64_t master_seed, std::vector<Tensor>& weights,
                 std::vector<Tensor>& biases);

}  // namespace was::model
