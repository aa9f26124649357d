#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "was/checkpoint.hpp"
#include "was/data.hpp"
#include "was/tensor.hpp"
#include "was/transforms.hpp"

namespace was::dual_mode {

enum class Mode { AOM, DOM };

// Inference mode selection. AOM serves Plain Weights verbatim; DOM serves a
// deterministic materialized transform of them. Fields beyond `mode` are
// ignored under AOM.
struct ModeConfig {
    Mode mode = Mode::AOM;
    std::optional<uint64_t> dom_seed;  // defaults to the checkpoint's dom_seed
    std::optional<transforms::TransformSpec> dom_spec_override;
};

// Effective weights are a pure function of (checkpoint, ModeConfig);
// materializing never mutates the checkpoint.
struct MaterializedModel {
    Mode mode = Mode::AOM;
    model::NetPlan plan;
    std::vector<Tensor> weights, biases;
    std::vector<double> layer_sparsity;  // exact zero-count fraction per weight
    std::vector<transforms::TransformInstance> instances;  // per layer; Identity under AOM
    std::vector<std::string> instance_desc;                // audit record
    uint64_t dom_seed = 0;
};

MaterializedModel materialize(const checkpoint::Checkpoint& ckpt, const ModeConfig& cfg);

// Argmax class per sample; ties break to the lowest class index.
std::vector<int> predict(const MaterializedModel& mm, const Tensor& batch);

double evaluate_top1(const MaterializedModel& mm, const data::Dataset& ds, int64_t batch_size);

struct DomStats {
    double mean_sparsity = 0.0;
    double mean_flops = 0.0;  // MACs
    double dense_flops = 0.0;
};

// Monte-Carlo mean over n_samples independent DOM materializations with
// seeds dom_seed+0 .. dom_seed+n-1.
DomStats dom_average_stats(const checkpoint::Checkpoint& ckpt,
                           const std::optional<transforms::TransformSpec>& spec_override,
                           int64_t n_samples, std::optional<uint64_t> dom_seed = {});

}  // namespace was::dual_mode
