#include "was/metrics.hpp"

#include <charconv>

#include "was/errors.hpp"

namespace was::metrics {

double top1(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.empty() || predictions.size() != labels.size()) {
        throw UsageError("top1: prediction/label lists must be nonempty and equal length (" +
                         std::to_string(predictions.size()) + " vs " +
                         std::to_string(labels.size()) + ")");
    }
    int64_t correct = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == labels[i]) ++correct;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(predictions.size());
}

double drop_rate(double clean_top1, double perturbed_top1) {
    return clean_top1 - perturbed_top1;
}

uint64_t dense_macs(const model::NetPlan& plan) {
    uint64_t total = 0;
    for (const model::ParamLayer& p : plan.params) total += static_cast<uint64_t>(p.macs);
    return total;
}

double flops_model(const model::NetPlan& plan, const std::vector<double>& per_layer_sparsity,
                   bool double_count) {
    if (per_layer_sparsity.size() != plan.params.size()) {
        throw ConfigError("flops_model: expected " + std::to_string(plan.params.size()) +
                          " per-layer sparsity values, got " +
                          std::to_string(per_layer_sparsity.size()));
    }
    double total = 0.0;
    for (size_t i = 0; i < plan.params.size(); ++i) {
        const double s = per_layer_sparsity[i];
        if (s < 0.0 || s > 1.0) {
            throw ConfigError("flops_model: sparsity for layer '" + plan.params[i].name +
                              "' must be in [0, 1], got " + std::to_string(s));
        }
        total += static_cast<double>(plan.params[i].macs) * (1.0 - s);
    }
    return double_count ? 2.0 * total : total;
}

double sparsity_rate_model(const std::vector<Tensor>& weights) {
    if (weights.empty()) throw UsageError("sparsity_rate_model: empty weight list");
    int64_t zeros = 0, total = 0;
    for (const Tensor& w : weights) {
        zeros += count_zeros(w);
        total += w.numel();
    }
    return static_cast<double>(zeros) / static_cast<double>(total);
}

std::string format_fixed(double v, int precision) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, precision);
    if (ec != std::errc()) return "nan";
    return std::string(buf, p);
}

std::string csv_header() { return "tag,mode,perturb,top1,drop_rate,flops_m,sparsity"; }

std::string csv_row(const MetricsRecord& rec) {
    return rec.tag + "," + rec.mode + "," + rec.perturb + "," + format_fixed(rec.top1, 4) + "," +
           format_fixed(rec.drop_rate, 4) + "," + format_fixed(rec.flops_m, 4) + "," +
           format_fixed(rec.sparsity, 6);
}

}  // namespace was::metrics
