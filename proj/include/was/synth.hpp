#pragma once

#include <cstdint>
#include <string>

namespace was::synth {

// Writes a deterministic synthetic 10-class image set in CIFAR-10 binary
// layout (data_batch_1..5.bin, test_batch.bin) under dir. Classes differ by
// grating orientation, blob placement, and color tint, with per-sample
// jitter and noise so the task is learnable but not trivial.
void write_synthetic_cifar10(const std::string& dir, int64_t train_per_class,
                             int64_t test_per_class, uint64_t seed);

}  // namespace was::synth
