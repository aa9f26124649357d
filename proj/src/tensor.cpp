#include "was/tensor.hpp"

#include <cmath>
#include <sstream>

#include "was/errors.hpp"

namespace was {

int64_t Tensor::numel_of(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t e : shape) n *= e;
    return n;
}

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    for (int64_t e : shape_) {
        if (e <= 0) throw ConfigError("tensor extent must be positive, got shape " + shape_str());
    }
    data_.assign(static_cast<size_t>(numel_of(shape_)), 0.0f);
}

Tensor Tensor::full(std::vector<int64_t> shape, float value) {
    Tensor t(std::move(shape));
    for (float& v : t.data_) v = value;
    return t;
}

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<float> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    if (numel_of(t.shape_) != static_cast<int64_t>(values.size())) {
        throw ConfigError("tensor data length " + std::to_string(values.size()) +
                          " does not match shape " + t.shape_str());
    }
    t.data_ = std::move(values);
    return t;
}

int64_t Tensor::first_non_finite() const {
    for (size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) return static_cast<int64_t>(i);
    }
    return -1;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << "]";
    return os.str();
}

double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    const float* pa = a.data();
    const float* pb = b.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) s += static_cast<double>(pa[i]) * static_cast<double>(pb[i]);
    return s;
}

double norm(const Tensor& t) { return std::sqrt(dot(t, t)); }

int64_t count_zeros(const Tensor& t) {
    int64_t z = 0;
    for (int64_t i = 0; i < t.numel(); ++i) {
        if (t[i] == 0.0f) ++z;
    }
    return z;
}

}  // namespace was
