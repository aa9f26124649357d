#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "was/model.hpp"
#include "was/tensor.hpp"

namespace was::metrics {

struct MetricsRecord {
    std::string tag;
    std::string mode;     // aom | dom
    std::string perturb;  // "none" or a perturb spec string
    double top1 = 0.0;        // percent, 0-100
    double drop_rate = 0.0;   // percentage points
    double flops_m = 0.0;     // millions of MACs (one MAC counted as one FLOP)
    double sparsity = 0.0;    // fraction, 0-1
};

double top1(const std::vector<int>& predictions, const std::vector<int>& labels);

// clean minus perturbed, in percentage points; negative when the
// perturbation helps.
double drop_rate(double clean_top1, double perturbed_top1);

// Dense multiply-accumulate count: conv O*C*kh*kw*H'*W', linear out*in;
// activations and pooling excluded.
uint64_t dense_macs(const model::NetPlan& plan);

// Sparsity-aware count: each layer's MACs scale by (1 - sparsity). With
// double_count, one MAC is counted as two FLOPs for comparison with tools
// using that convention.
double flops_model(const model::NetPlan& plan, const std::vector<double>& per_layer_sparsity,
                   bool double_count = false);

// Total zero entries / total entries across the given weight tensors.
double sparsity_rate_model(const std::vector<Tensor>& weights);

std::string csv_header();
std::string csv_row(const MetricsRecord& rec);

// Locale-independent fixed-precision formatting ('.' decimal separator).
std::string format_fixed(double v, int precision);

}  // namespace was::metrics
