#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "was/checkpoint.hpp"
#include "was/data.hpp"
#include "was/model.hpp"
#include "was/tensor.hpp"
#include "was/transforms.hpp"

namespace was::train {

// A weighted layer paired with its transform spec. Only plain_weight and
// bias are ever mutated by the optimizer; shadow weights are derived per
// step and never stored.
struct ShadowLayer {
    std::string name;
    int64_t layer_id = 0;
    Tensor plain_weight;
    Tensor bias;
    transforms::TransformSpec spec;
    transforms::TransformInstance current_instance;  // ephemeral, per step
};

struct Model {
    model::NetPlan plan;
    std::vector<ShadowLayer> layers;

    // specs: one per weighted layer, or a single spec applied to all.
    static Model build(const model::ArchitectureDef& arch, int64_t in_c, int64_t in_h, int64_t in_w,
                       int64_t num_classes, const std::vector<transforms::TransformSpec>& specs);
    void init(uint64_t master_seed);

    std::vector<Tensor> weights() const;
    std::vector<Tensor> biases() const;
};

struct OptimizerState {
    double lr = 0.01;
    double momentum = 0.9;
    std::vector<Tensor> vel_w, vel_b;  // zero-initialized, shapes match params

    static OptimizerState init(const Model& m, double lr, double momentum);
};

struct TrainConfig {
    int64_t batch_size = 128;
    int64_t epochs = 1;
    uint64_t master_seed = 0;
    uint64_t dom_seed = 0;
    double lr = 0.01;
    double momentum = 0.9;
    bool straight_through = false;  // ablation: skip the adjoint, route g_sw to PW
    int64_t max_steps = -1;         // stop after this many total steps; -1 = all
    bool eval_each_epoch = true;
    int64_t eval_batch = 256;
};

struct EpochRow {
    int64_t epoch = 0;
    double train_loss = 0.0;
    double test_top1_aom = 0.0;
    double test_top1_dom = 0.0;
};

struct TrainResult {
    checkpoint::Checkpoint ckpt;
    std::vector<EpochRow> log;
    int64_t steps_run = 0;
};

// One optimizer step: sample per-layer instances from
// (master_seed, layer_id, step_index), forward on SW = apply(instance, PW),
// route the SW gradient through the transform adjoint, then update PW and
// biases with SGD momentum. Returns the batch loss.
float train_step(Model& m, OptimizerState& opt, const Tensor& inputs,
                 const std::vector<int>& labels, int64_t step_index, uint64_t master_seed,
                 bool straight_through = false);

// Full loop: epochs * ceil(N / batch) steps with per-epoch seed-derived
// shuffles. start_step > 0 resumes a loaded model mid-run.
TrainResult train(Model& m, OptimizerState& opt, const TrainConfig& cfg,
                  const data::Dataset& train_set, const data::Dataset& test_set,
                  int64_t start_step = 0);

checkpoint::Checkpoint to_checkpoint(const Model& m, const OptimizerState* opt,
                                     uint64_t master_seed, uint64_t dom_seed, int64_t step_count);
// Rebuilds the model (and optimizer velocities when present) from a checkpoint.
Model from_checkpoint(const checkpoint::Checkpoint& ckpt, OptimizerState* opt, double lr = 0.01,
                      double momentum = 0.9);

// Loss with frozen instances, no parameter update. The workhorse for
// finite-difference probes.
double loss_with_instances(const Model& m, const Tensor& inputs, const std::vector<int>& labels,
                           const std::vector<transforms::TransformInstance>& instances);

struct GradPathReport {
    double max_rel_err = 0.0;
    int64_t coords_checked = 0;
};

// Compares adjoint-routed dJ/dPW against central finite differences of
// J(apply(instance, PW)) with the instance frozen.
GradPathReport gradient_path_check(Model& m, const Tensor& inputs, const std::vector<int>& labels,
                                   int64_t step_index, uint64_t master_seed, int64_t max_coords,
                                   uint64_t probe_seed, double eps = 1e-3,
                                   double rel_floor = 1e-2);

}  // namespace was::train
