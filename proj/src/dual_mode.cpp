#include "was/dual_mode.hpp"

#include <numeric>

#include "was/errors.hpp"
#include "was/metrics.hpp"
#include "was/rng.hpp"

namespace was::dual_mode {

MaterializedModel materialize(const checkpoint::Checkpoint& ckpt, const ModeConfig& cfg) {
    MaterializedModel mm;
    mm.mode = cfg.mode;
    mm.plan = ckpt.plan();
    mm.dom_seed = cfg.dom_seed.value_or(ckpt.dom_seed);

    if (!ckpt.layer_specs.empty() && ckpt.layer_specs.size() != mm.plan.params.size()) {
        throw DataFormatError("checkpoint spec list has " +
                              std::to_string(ckpt.layer_specs.size()) + " entries for " +
                              std::to_string(mm.plan.params.size()) +
                              " weighted layers (field 'spec')");
    }

    for (size_t i = 0; i < mm.plan.params.size(); ++i) {
        const model::ParamLayer& p = mm.plan.params[i];
        const auto* w = ckpt.find(p.name + ".weight");
        const auto* b = ckpt.find(p.name + ".bias");
        if (!w) throw DataFormatError("checkpoint missing tensor (field 'tensor " + p.name +
                                      ".weight')");
        if (!b) throw DataFormatError("checkpoint missing tensor (field 'tensor " + p.name +
                                      ".bias')");
        if (w->data.shape() != p.weight_shape || b->data.shape() != p.bias_shape) {
            throw DataFormatError("checkpoint tensor shape mismatch (field 'tensor " + p.name +
                                  "')");
        }

        Tensor effective = w->data;
        transforms::TransformInstance inst;  // Identity
        if (cfg.mode == Mode::DOM) {
            transforms::TransformSpec spec;
            if (cfg.dom_spec_override) {
                spec = *cfg.dom_spec_override;
            } else if (!ckpt.layer_specs.empty()) {
                spec = transforms::parse_spec(ckpt.layer_specs[i]);
            }
            rng::Stream stream(mm.dom_seed, rng::Purpose::DomMaterialize,
                               static_cast<uint64_t>(i), 0);
            inst = transforms::sample(spec, stream, w->data.shape());
            effective = transforms::apply(inst, w->data);
        }
        mm.layer_sparsity.push_back(static_cast<double>(count_zeros(effective)) /
                                    static_cast<double>(effective.numel()));
        mm.instance_desc.push_back(transforms::describe(inst));
        mm.instances.push_back(std::move(inst));
        mm.weights.push_back(std::move(effective));
        mm.biases.push_back(b->data);
    }
    return mm;
}

std::vector<int> predict(const MaterializedModel& mm, const Tensor& batch) {
    if (batch.ndim() != 4 || batch.dim(1) != mm.plan.in_c || batch.dim(2) != mm.plan.in_h ||
        batch.dim(3) != mm.plan.in_w) {
        throw UsageError("predict: batch " + batch.shape_str() +
                         " does not match architecture input " + std::to_string(mm.plan.in_c) +
                         "," + std::to_string(mm.plan.in_h) + "," + std::to_string(mm.plan.in_w));
    }
    const Tensor logits = model::forward_logits(mm.plan, mm.weights, mm.biases, batch);
    std::vector<int> out;
    out.reserve(static_cast<size_t>(logits.dim(0)));
    for (int64_t i = 0; i < logits.dim(0); ++i) {
        int best = 0;
        for (int64_t j = 1; j < logits.dim(1); ++j) {
            if (logits.at(i, j) > logits.at(i, best)) best = static_cast<int>(j);
        }
        out.push_back(best);
    }
    return out;
}

double evaluate_top1(const MaterializedModel& mm, const data::Dataset& ds, int64_t batch_size) {
    if (ds.size() == 0) throw UsageError("evaluate_top1: empty dataset");
    std::vector<int> preds;
    preds.reserve(static_cast<size_t>(ds.size()));
    for (int64_t lo = 0; lo < ds.size(); lo += batch_size) {
        const int64_t hi = std::min<int64_t>(ds.size(), lo + batch_size);
        std::vector<int64_t> idx(static_cast<size_t>(hi - lo));
        std::iota(idx.begin(), idx.end(), lo);
        const std::vector<int> batch_preds = predict(mm, data::gather_batch(ds, idx));
        preds.insert(preds.end(), batch_preds.begin(), batch_preds.end());
    }
    return metrics::top1(preds, ds.labels);
}

DomStats dom_average_stats(const checkpoint::Checkpoint& ckpt,
                           const std::optional<transforms::TransformSpec>& spec_override,
                           int64_t n_samples, std::optional<uint64_t> dom_seed) {
    if (n_samples < 1) throw UsageError("dom_average_stats: n_samples must be >= 1");
    const uint64_t base = dom_seed.value_or(ckpt.dom_seed);

    DomStats stats;
    {
        const model::NetPlan plan = ckpt.plan();
        stats.dense_flops =
            metrics::flops_model(plan, std::vector<double>(plan.params.size(), 0.0));
    }
    for (int64_t i = 0; i < n_samples; ++i) {
        ModeConfig cfg;
        cfg.mode = Mode::DOM;
        cfg.dom_seed = base + static_cast<uint64_t>(i);
        cfg.dom_spec_override = spec_override;
        const MaterializedModel mm = materialize(ckpt, cfg);
        stats.mean_sparsity += metrics::sparsity_rate_model(mm.weights);
        stats.mean_flops += metrics::flops_model(mm.plan, mm.layer_sparsity);
    }
    stats.mean_sparsity /= static_cast<double>(n_samples);
    stats.mean_flops /= static_cast<double>(n_samples);
    return stats;
}

}  // namespace was::dual_mode
