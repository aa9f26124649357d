#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "was/tensor.hpp"

namespace was::data {

// Images are normalized to per-channel zero mean / unit variance using
// statistics of the train split.
struct Dataset {
    Tensor images;  // [N, C, H, W]
    std::vector<int> labels;
    int64_t num_classes = 0;
    std::string split;
    std::vector<float> channel_mean, channel_std;  // train-split statistics

    int64_t size() const { return images.ndim() ? images.dim(0) : 0; }
};

struct DatasetPair {
    Dataset train, test;
};

// CIFAR binary: 1 label byte (2 for CIFAR-100: coarse then fine; fine is
// used) + 3072 pixel bytes per record, R/G/B planes row-major.
DatasetPair read_cifar10(const std::string& dir);
DatasetPair read_cifar100(const std::string& dir);
// MNIST IDX, big-endian magic 2051 (images) / 2049 (labels).
DatasetPair read_mnist(const std::string& dir);
DatasetPair read_dataset(const std::string& id, const std::string& dir);

// Test-time data perturbation for the drop-rate experiments.
struct DataPerturbSpec {
    enum class Kind { Rotate, Translate, Crop };
    Kind kind = Kind::Rotate;
    double lo = 0.0, hi = 0.0;  // rotate: degrees; crop: area ratio
    double fy = 0.0, fx = 0.0;  // translate: max fractional shift

    void validate() const;
    std::string to_string() const;
    static DataPerturbSpec parse(const std::string& text);  // e.g. "rotate:0,45"
};

// Each image perturbed independently with parameters drawn from
// (seed, sample index). Output dimensions are unchanged; out-of-frame pixels
// are zero (the channel mean, post-normalization).
Dataset perturb_testset(const Dataset& ds, const DataPerturbSpec& spec, uint64_t seed);

// Class-stratified deterministic sample of size n.
Dataset subset(const Dataset& ds, int64_t n, uint64_t seed);

// Per-image primitives (shared with perturb_testset).
void rotate_image(const float* in, float* out, int64_t c, int64_t h, int64_t w, double angle_deg);
void translate_image(const float* in, float* out, int64_t c, int64_t h, int64_t w, int64_t dr,
                     int64_t dc);
void crop_resize_image(const float* in, float* out, int64_t c, int64_t h, int64_t w, int64_t r0,
                       int64_t c0, int64_t rows, int64_t cols);

// Assembles a batch tensor [n, C, H, W] from dataset rows.
Tensor gather_batch(const Dataset& ds, const std::vector<int64_t>& indices);
std::vector<int> gather_labels(const Dataset& ds, const std::vector<int64_t>& indices);

}  // namespace was::data
