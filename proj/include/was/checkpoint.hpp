#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "was/model.hpp"
#include "was/tensor.hpp"

namespace was::checkpoint {

// On-disk model artifact. Layout: magic "WASW", format version (u32 LE),
// header length (u32 LE), structured-text header (architecture, layer
// manifest, transform specs, seeds, step count), then raw float32 LE data
// per tensor in manifest order. Round-trips bit-exactly.
struct Checkpoint {
    uint32_t version = 1;
    std::string arch_id;
    std::vector<std::string> arch_lines;  // layer grammar, always present
    int64_t in_c = 0, in_h = 0, in_w = 0;
    int64_t num_classes = 0;
    uint64_t master_seed = 0;
    uint64_t dom_seed = 0;
    int64_t step_count = 0;
    std::vector<std::string> layer_specs;  // transform spec per weighted layer

    struct Entry {
        std::string name;
        Tensor data;
    };
    std::vector<Entry> tensors;

    const Entry* find(const std::string& name) const;
    model::NetPlan plan() const;
};

void save(const Checkpoint& ckpt, const std::string& path);
Checkpoint load(const std::string& path);

}  // namespace was::checkpoint
