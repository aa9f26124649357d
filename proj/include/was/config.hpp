#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "was/data.hpp"
#include "was/transforms.hpp"

namespace was::config {

// Flat "key = value" text with dotted section names and '#' comments.
std::map<std::string, std::string> parse_kv_text(const std::string& text);
std::map<std::string, std::string> parse_kv_file(const std::string& path);

struct ExperimentConfig {
    std::string tag = "exp";

    std::string arch_id = "smallcnn";
    std::vector<std::string> custom_layers;

    std::string dataset = "cifar10";
    std::string data_root;  // empty: use the WAS_DATA_ROOT environment variable
    int64_t train_subset = 0;  // 0 = full split
    int64_t test_subset = 0;
    uint64_t subset_seed = 0;

    int64_t epochs = 1;
    int64_t batch_size = 128;
    double lr = 0.01;
    double momentum = 0.9;
    uint64_t seed = 0;
    uint64_t dom_seed = 0;
    bool dom_seed_set = false;  // when unset, dom_seed follows seed
    bool straight_through = false;

    transforms::TransformSpec was_spec;  // default Identity
    std::map<int64_t, transforms::TransformSpec> layer_overrides;

    std::vector<data::DataPerturbSpec> eval_perturbs;
    uint64_t perturb_seed = 0;

    std::string sweep_checkpoint;
    std::vector<std::string> sweep_was;
    std::vector<std::string> sweep_perturb;
    int64_t sweep_max_cells = 64;

    bool flops_double_count = false;

    // Parses and validates every field, reporting all malformed fields at
    // once; nothing is written before validation passes.
    static ExperimentConfig load(const std::string& path);
    static ExperimentConfig from_kv(const std::map<std::string, std::string>& kv);

    // Resolved data root (config value or environment), error when neither set.
    std::string resolved_data_root() const;
    // One spec per weighted layer after applying per-layer overrides.
    std::vector<transforms::TransformSpec> specs_for(size_t n_layers) const;
};

}  // namespace was::config
