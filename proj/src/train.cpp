#include "was/train.hpp"

#include <cmath>
#include <numeric>

#include "was/dual_mode.hpp"
#include "was/errors.hpp"
#include "was/rng.hpp"

namespace was::train {

Model Model::build(const model::ArchitectureDef& arch, int64_t in_c, int64_t in_h, int64_t in_w,
                   int64_t num_classes, const std::vector<transforms::TransformSpec>& specs) {
    Model m;
    m.plan = model::make_plan(arch, in_c, in_h, in_w, num_classes);
    const size_t n = m.plan.params.size();
    if (specs.size() != 1 && specs.size() != n) {
        throw ConfigError("expected 1 or " + std::to_string(n) + " transform specs, got " +
                          std::to_string(specs.size()));
    }
    for (size_t i = 0; i < n; ++i) {
        ShadowLayer layer;
        layer.name = m.plan.params[i].name;
        layer.layer_id = static_cast<int64_t>(i);
        layer.spec = specs.size() == 1 ? specs[0] : specs[i];
        layer.spec.validate();
        layer.plain_weight = Tensor(m.plan.params[i].weight_shape);
        layer.bias = Tensor(m.plan.params[i].bias_shape);
        m.layers.push_back(std::move(layer));
    }
    return m;
}

void Model::init(uint64_t master_seed) {
    std::vector<Tensor> w, b;
    model::init_params(plan, master_seed, w, b);
    for (size_t i = 0; i < layers.size(); ++i) {
        layers[i].plain_weight = std::move(w[i]);
        layers[i].bias = std::move(b[i]);
    }
}

std::vector<Tensor> Model::weights() const {
    std::vector<Tensor> out;
    out.reserve(layers.size());
    for (const ShadowLayer& l : layers) out.push_back(l.plain_weight);
    return out;
}

std::vector<Tensor> Model::biases() const {
    std::vector<Tensor> out;
    out.reserve(layers.size());
    for (const ShadowLayer& l : layers) out.push_back(l.bias);
    return out;
}

OptimizerState OptimizerState::init(const Model& m, double lr, double momentum) {
    OptimizerState opt;
    opt.lr = lr;
    opt.momentum = momentum;
    for (const ShadowLayer& l : m.layers) {
        opt.vel_w.push_back(Tensor(l.plain_weight.shape()));
        opt.vel_b.push_back(Tensor(l.bias.shape()));
    }
    return opt;
}

namespace {

// v <- mu*v + g; p <- p - lr*v
void momentum_update(Tensor& param, Tensor& vel, const Tensor& grad, float lr, float mu) {
    for (int64_t i = 0; i < param.numel(); ++i) {
        vel[i] = mu * vel[i] + grad[i];
        param[i] -= lr * vel[i];
    }
}

struct ForwardGraph {
    autograd::Tape tape;
    std::vector<autograd::NodeId> sw_nodes, bias_nodes;
    autograd::NodeId loss = -1;
};

void build_forward(const Model& m, const Tensor& inputs, const std::vector<int>& labels,
                   const std::vector<transforms::TransformInstance>& instances, bool with_grad,
                   ForwardGraph& g) {
    for (size_t i = 0; i < m.layers.size(); ++i) {
        const ShadowLayer& l = m.layers[i];
        Tensor sw = transforms::apply(instances[i], l.plain_weight);
        g.sw_nodes.push_back(g.tape.leaf(std::move(sw), with_grad, l.name + ".sw"));
        g.bias_nodes.push_back(g.tape.leaf(l.bias, with_grad, l.name + ".bias"));
    }
    const autograd::NodeId input = g.tape.leaf(inputs, false, "input");
    const autograd::NodeId logits = model::forward_net(m.plan, g.tape, input, g.sw_nodes, g.bias_nodes);
    g.loss = g.tape.softmax_cross_entropy(logits, labels, "loss");
}

std::vector<transforms::TransformInstance> sample_instances(const Model& m, uint64_t master_seed,
                                                            int64_t step_index) {
    std::vector<transforms::TransformInstance> out;
    out.reserve(m.layers.size());
    for (const ShadowLayer& l : m.layers) {
        rng::Stream stream(master_seed, rng::Purpose::Transform,
                           static_cast<uint64_t>(l.layer_id), static_cast<uint64_t>(step_index));
        out.push_back(transforms::sample(l.spec, stream, l.plain_weight.shape()));
    }
    return out;
}

}  // namespace

float train_step(Model& m, OptimizerState& opt, const Tensor& inputs,
                 const std::vector<int>& labels, int64_t step_index, uint64_t master_seed,
                 bool straight_through) {
    if (labels.empty()) throw UsageError("train_step: empty batch");

    const std::vector<transforms::TransformInstance> instances =
        sample_instances(m, master_seed, step_index);
    for (size_t i = 0; i < m.layers.size(); ++i) m.layers[i].current_instance = instances[i];

    ForwardGraph g;
    build_forward(m, inputs, labels, instances, true, g);
    g.tape.backward(g.loss);

    const float lr = static_cast<float>(opt.lr);
    const float mu = static_cast<float>(opt.momentum);
    for (size_t i = 0; i < m.layers.size(); ++i) {
        ShadowLayer& l = m.layers[i];
        const Tensor& g_sw = g.tape.grad(g.sw_nodes[i]);
        const Tensor g_pw = straight_through ? g_sw : transforms::adjoint(instances[i], g_sw);
        momentum_update(l.plain_weight, opt.vel_w[i], g_pw, lr, mu);
        momentum_update(l.bias, opt.vel_b[i], g.tape.grad(g.bias_nodes[i]), lr, mu);
    }
    return g.tape.value(g.loss)[0];
}

TrainResult train(Model& m, OptimizerState& opt, const TrainConfig& cfg,
                  const data::Dataset& train_set, const data::Dataset& test_set,
                  int64_t start_step) {
    if (cfg.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (cfg.epochs < 1) throw ConfigError("train.epochs must be >= 1");
    const int64_t n = train_set.size();
    if (n < 1) throw ConfigError("training split is empty");
    if (train_set.images.dim(1) != m.plan.in_c || train_set.images.dim(2) != m.plan.in_h ||
        train_set.images.dim(3) != m.plan.in_w) {
        throw ConfigError("dataset images " + train_set.images.shape_str() +
                          " do not match architecture input " + std::to_string(m.plan.in_c) + "," +
                          std::to_string(m.plan.in_h) + "," + std::to_string(m.plan.in_w));
    }

    const int64_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    int64_t total_steps = cfg.epochs * steps_per_epoch;
    if (cfg.max_steps >= 0) total_steps = std::min(total_steps, cfg.max_steps);

    TrainResult result;
    std::vector<int64_t> perm(static_cast<size_t>(n));
    int64_t perm_epoch = -1;
    double epoch_loss = 0.0;
    int64_t epoch_steps = 0;

    for (int64_t step = start_step; step < total_steps; ++step) {
        const int64_t epoch = step / steps_per_epoch;
        const int64_t pos = step % steps_per_epoch;
        if (epoch != perm_epoch) {
            std::iota(perm.begin(), perm.end(), 0);
            rng::Stream stream(cfg.master_seed, rng::Purpose::Shuffle,
                               static_cast<uint64_t>(epoch));
            stream.shuffle(perm);
            perm_epoch = epoch;
        }
        const int64_t lo = pos * cfg.batch_size;
        const int64_t hi = std::min<int64_t>(n, lo + cfg.batch_size);
        const std::vector<int64_t> idx(perm.begin() + lo, perm.begin() + hi);
        const Tensor batch = data::gather_batch(train_set, idx);
        const std::vector<int> labels = data::gather_labels(train_set, idx);

        epoch_loss += train_step(m, opt, batch, labels, step, cfg.master_seed,
                                 cfg.straight_through);
        ++epoch_steps;
        ++result.steps_run;

        const bool epoch_end = pos == steps_per_epoch - 1 || step == total_steps - 1;
        if (epoch_end) {
            EpochRow row;
            row.epoch = epoch;
            row.train_loss = epoch_loss / static_cast<double>(epoch_steps);
            if (cfg.eval_each_epoch && test_set.size() > 0) {
                const checkpoint::Checkpoint snap =
                    to_checkpoint(m, nullptr, cfg.master_seed, cfg.dom_seed, step + 1);
                dual_mode::ModeConfig aom{dual_mode::Mode::AOM, {}, {}};
                row.test_top1_aom = dual_mode::evaluate_top1(
                    dual_mode::materialize(snap, aom), test_set, cfg.eval_batch);
                dual_mode::ModeConfig dom{dual_mode::Mode::DOM, {}, {}};
                row.test_top1_dom = dual_mode::evaluate_top1(
                    dual_mode::materialize(snap, dom), test_set, cfg.eval_batch);
            }
            result.log.push_back(row);
            epoch_loss = 0.0;
            epoch_steps = 0;
        }
    }

    result.ckpt = to_checkpoint(m, &opt, cfg.master_seed, cfg.dom_seed, total_steps);
    return result;
}

checkpoint::Checkpoint to_checkpoint(const Model& m, const OptimizerState* opt,
                                     uint64_t master_seed, uint64_t dom_seed, int64_t step_count) {
    checkpoint::Checkpoint ckpt;
    ckpt.arch_id = m.plan.arch.id;
    ckpt.arch_lines = m.plan.arch.serialize();
    ckpt.in_c = m.plan.in_c;
    ckpt.in_h = m.plan.in_h;
    ckpt.in_w = m.plan.in_w;
    ckpt.num_classes = m.plan.num_classes;
    ckpt.master_seed = master_seed;
    ckpt.dom_seed = dom_seed;
    ckpt.step_count = step_count;
    for (const ShadowLayer& l : m.layers) {
        ckpt.layer_specs.push_back(transforms::to_string(l.spec));
        ckpt.tensors.push_back({l.name + ".weight", l.plain_weight});
        ckpt.tensors.push_back({l.name + ".bias", l.bias});
    }
    if (opt) {
        for (size_t i = 0; i < m.layers.size(); ++i) {
            ckpt.tensors.push_back({m.layers[i].name + ".weight.vel", opt->vel_w[i]});
            ckpt.tensors.push_back({m.layers[i].name + ".bias.vel", opt->vel_b[i]});
        }
    }
    return ckpt;
}

Model from_checkpoint(const checkpoint::Checkpoint& ckpt, OptimizerState* opt, double lr,
                      double momentum) {
    const model::ArchitectureDef arch =
        ckpt.arch_id == "custom"
            ? model::ArchitectureDef::custom(ckpt.arch_lines)
            : model::ArchitectureDef::named(ckpt.arch_id, ckpt.num_classes);
    std::vector<transforms::TransformSpec> specs;
    if (ckpt.layer_specs.empty()) {
        specs.push_back(transforms::TransformSpec{});
    } else {
        for (const std::string& s : ckpt.layer_specs) specs.push_back(transforms::parse_spec(s));
    }
    Model m = Model::build(arch, ckpt.in_c, ckpt.in_h, ckpt.in_w, ckpt.num_classes, specs);
    for (ShadowLayer& l : m.layers) {
        const auto* w = ckpt.find(l.name + ".weight");
        const auto* b = ckpt.find(l.name + ".bias");
        if (!w || !b) {
            throw DataFormatError("checkpoint missing tensor for layer '" + l.name + "'");
        }
        if (w->data.shape() != l.plain_weight.shape() || b->data.shape() != l.bias.shape()) {
            throw DataFormatError("checkpoint tensor shape mismatch for layer '" + l.name + "'");
        }
        l.plain_weight = w->data;
        l.bias = b->data;
    }
    if (opt) {
        *opt = OptimizerState::init(m, lr, momentum);
        for (size_t i = 0; i < m.layers.size(); ++i) {
            const auto* vw = ckpt.find(m.layers[i].name + ".weight.vel");
            const auto* vb = ckpt.find(m.layers[i].name + ".bias.vel");
            if (vw) opt->vel_w[i] = vw->data;
            if (vb) opt->vel_b[i] = vb->data;
        }
    }
    return m;
}

double loss_with_instances(const Model& m, const Tensor& inputs, const std::vector<int>& labels,
                           const std::vector<transforms::TransformInstance>& instances) {
    ForwardGraph g;
    build_forward(m, inputs, labels, instances, false, g);
    return g.tape.value(g.loss)[0];
}

GradPathReport gradient_path_check(Model& m, const Tensor& inputs, const std::vector<int>& labels,
                                   int64_t step_index, uint64_t master_seed, int64_t max_coords,
                                   uint64_t probe_seed, double eps, double rel_floor) {
    const std::vector<transforms::TransformInstance> instances =
        sample_instances(m, master_seed, step_index);

    ForwardGraph g;
    build_forward(m, inputs, labels, instances, true, g);
    g.tape.backward(g.loss);
    std::vector<Tensor> g_pw;
    for (size_t i = 0; i < m.layers.size(); ++i) {
        g_pw.push_back(transforms::adjoint(instances[i], g.tape.grad(g.sw_nodes[i])));
    }

    int64_t total_coords = 0;
    for (const ShadowLayer& l : m.layers) total_coords += l.plain_weight.numel();

    rng::Stream probe(probe_seed, rng::Purpose::Transform, 0xfd);
    GradPathReport report;
    const int64_t n_checks = std::min<int64_t>(max_coords, total_coords);
    for (int64_t t = 0; t < n_checks; ++t) {
        int64_t flat = probe.uniform_int(0, total_coords - 1);
        size_t li = 0;
        while (flat >= m.layers[li].plain_weight.numel()) {
            flat -= m.layers[li].plain_weight.numel();
            ++li;
        }
        Tensor& w = m.layers[li].plain_weight;
        const float orig = w[flat];
        w[flat] = orig + static_cast<float>(eps);
        const double j_plus = loss_with_instances(m, inputs, labels, instances);
        w[flat] = orig - static_cast<float>(eps);
        const double j_minus = loss_with_instances(m, inputs, labels, instances);
        w[flat] = orig;
        const double fd = (j_plus - j_minus) / (2.0 * eps);
        const double an = static_cast<double>(g_pw[li][flat]);
        const double denom = std::max({std::abs(an), std::abs(fd), rel_floor});
        const double rel = std::abs(an - fd) / denom;
        report.max_rel_err = std::max(report.max_rel_err, rel);
        ++report.coords_checked;
    }
    return report;
}

}  // namespace was::train
