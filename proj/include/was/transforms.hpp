#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "was/rng.hpp"
#include "was/tensor.hpp"

namespace was::transforms {

enum class Kind { Identity, Crop, Translate, Rotate, Scale, Compose };
enum class Domain { Kernel, Matrix };

// A parameterized random transform family over a weight tensor.
//
// Domain::Kernel (default) treats each kernel's spatial grid (kh x kw) as the
// transform domain; Domain::Matrix treats the whole layer viewed as a 2-D
// matrix as the grid. Weights with a 1x1 spatial extent degenerate to
// Identity under Domain::Kernel.
struct TransformSpec {
    Kind kind = Kind::Identity;

    double crop_lo = 1.0, crop_hi = 1.0;            // area ratio, (0, 1]
    double shift_frac_y = 0.0, shift_frac_x = 0.0;  // max fractional shift, [0, 1)
    double angle_lo = 0.0, angle_hi = 0.0;          // degrees
    double scale_lo = 1.0, scale_hi = 1.0;          // zoom factor, (0, 2]

    std::vector<TransformSpec> children;  // Compose only; no nesting

    double p_apply = 1.0;          // gate probability; 1 - p_apply yields Identity
    double kernel_fraction = 1.0;  // fraction of kernels transformed (Domain::Kernel)
    Domain domain = Domain::Kernel;

    void validate() const;  // throws ConfigError naming the offending field
};

// One concrete sampled transform. Application is a linear map on the weight
// tensor with an exact adjoint.
struct TransformInstance {
    Kind kind = Kind::Identity;
    Domain domain = Domain::Kernel;

    int64_t row0 = 0, col0 = 0, rows = 0, cols = 0;  // Crop window
    int64_t dr = 0, dc = 0;                          // Translate shift
    double angle_deg = 0.0;                          // Rotate
    double factor = 1.0;                             // Scale

    std::vector<TransformInstance> children;  // Compose, applied left to right

    // Selected kernel indices (output channels); empty with all_kernels=true
    // means every kernel is transformed.
    std::vector<int64_t> kernels;
    bool all_kernels = true;
};

// Samples a concrete instance for a weight of the given shape. All draws come
// from the caller's counter-based stream, so identical (seed, layer, step)
// keys reproduce identical instances regardless of call order.
TransformInstance sample(const TransformSpec& spec, rng::Stream& stream,
                         const std::vector<int64_t>& weight_shape);

// Shape-preserving linear application: zeroes outside crop windows, shifts
// with zero fill, bilinear rotation/zoom with zero outside the grid.
Tensor apply(const TransformInstance& inst, const Tensor& weight);

// Exact adjoint of apply: <apply(W), G> == <W, adjoint(G)> for all W, G.
Tensor adjoint(const TransformInstance& inst, const Tensor& grad);

// Fraction of weight entries structurally forced to zero by the transform,
// independent of the weight values.
double sparsity_of(const TransformInstance& inst, const std::vector<int64_t>& shape);

// Config-schema serialization, e.g. "crop:0.8,1@p=0.5" or
// "crop:0.8,1+translate:0.3,0.3@p=0.5". Round-trips exactly.
std::string to_string(const TransformSpec& spec);
TransformSpec parse_spec(const std::string& text);

// Named presets: "C", "T", "R", "CT", "identity".
TransformSpec preset(const std::string& name);

// Human-readable audit record of a sampled instance.
std::string describe(const TransformInstance& inst);

}  // namespace was::transforms
