// Test-only reference implementations, independent of the library's compute
// paths: double-precision naive-loop forward ops, double transform
// application, and finite-difference drivers built on them.
#pragma once

#include <cmath>
#include <vector>

#include "was/model.hpp"
#include "was/tensor.hpp"
#include "was/transforms.hpp"

namespace oracle {

using DVec = std::vector<double>;

inline DVec to_d(const was::Tensor& t) {
    DVec out(static_cast<size_t>(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i) out[static_cast<size_t>(i)] = t[i];
    return out;
}

// ---- reference ops (plain loops, double) ----

inline DVec ref_conv2d(const DVec& x, int64_t n, int64_t c, int64_t h, int64_t w, const DVec& wt,
                       int64_t o, int64_t kh, int64_t kw, const DVec& b, int stride, int padding,
                       int64_t& oh, int64_t& ow) {
    oh = (h + 2 * padding - kh) / stride + 1;
    ow = (w + 2 * padding - kw) / stride + 1;
    DVec out(static_cast<size_t>(n * o * oh * ow), 0.0);
    for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t oi = 0; oi < o; ++oi)
            for (int64_t y = 0; y < oh; ++y)
                for (int64_t xx = 0; xx < ow; ++xx) {
                    double acc = b[static_cast<size_t>(oi)];
                    for (int64_t ci = 0; ci < c; ++ci)
                        for (int64_t ky = 0; ky < kh; ++ky)
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                const int64_t iy = y * stride - padding + ky;
                                const int64_t ix = xx * stride - padding + kx;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                acc += x[static_cast<size_t>(((ni * c + ci) * h + iy) * w + ix)] *
                                       wt[static_cast<size_t>(((oi * c + ci) * kh + ky) * kw + kx)];
                            }
                    out[static_cast<size_t>(((ni * o + oi) * oh + y) * ow + xx)] = acc;
                }
    return out;
}

inline DVec ref_relu(const DVec& x) {
    DVec out = x;
    for (double& v : out) v = v > 0.0 ? v : 0.0;
    return out;
}

inline DVec ref_maxpool(const DVec& x, int64_t n, int64_t c, int64_t h, int64_t w, int k,
                        int stride, int64_t& oh, int64_t& ow) {
    oh = (h - k) / stride + 1;
    ow = (w - k) / stride + 1;
    DVec out(static_cast<size_t>(n * c * oh * ow));
    for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t y = 0; y < oh; ++y)
                for (int64_t xx = 0; xx < ow; ++xx) {
                    double best = -1e300;
                    for (int64_t ky = 0; ky < k; ++ky)
                        for (int64_t kx = 0; kx < k; ++kx) {
                            const double v = x[static_cast<size_t>(
                                ((ni * c + ci) * h + y * stride + ky) * w + xx * stride + kx)];
                            if (v > best) best = v;
                        }
                    out[static_cast<size_t>(((ni * c + ci) * oh + y) * ow + xx)] = best;
                }
    return out;
}

inline DVec ref_linear(const DVec& x, int64_t n, int64_t din, const DVec& wt, int64_t dout,
                       const DVec& b) {
    DVec out(static_cast<size_t>(n * dout));
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < dout; ++j) {
            double acc = b[static_cast<size_t>(j)];
            for (int64_t d = 0; d < din; ++d) {
                acc += x[static_cast<size_t>(i * din + d)] * wt[static_cast<size_t>(j * din + d)];
            }
            out[static_cast<size_t>(i * dout + j)] = acc;
        }
    return out;
}

inline double ref_xent_mean(const DVec& logits, int64_t n, int64_t k,
                            const std::vector<int>& labels) {
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double m = logits[static_cast<size_t>(i * k)];
        for (int64_t j = 1; j < k; ++j) m = std::max(m, logits[static_cast<size_t>(i * k + j)]);
        double denom = 0.0;
        for (int64_t j = 0; j < k; ++j) {
            denom += std::exp(logits[static_cast<size_t>(i * k + j)] - m);
        }
        total += m + std::log(denom) - logits[static_cast<size_t>(i * k + labels[static_cast<size_t>(i)])];
    }
    return total / static_cast<double>(n);
}

// ---- reference transform application (double) ----

inline void ref_grid_transform(const was::transforms::TransformInstance& inst, const double* in,
                               double* out, int64_t gh, int64_t gw) {
    using was::transforms::Kind;
    const double mr = static_cast<double>(gh - 1) / 2.0;
    const double mc = static_cast<double>(gw - 1) / 2.0;
    auto bilinear = [&](double sr, double sc) {
        const int64_t r0 = static_cast<int64_t>(std::floor(sr));
        const int64_t c0 = static_cast<int64_t>(std::floor(sc));
        const double ar = sr - std::floor(sr);
        const double ac = sc - std::floor(sc);
        double acc = 0.0;
        auto tap = [&](int64_t r, int64_t c, double wt) {
            if (wt == 0.0 || r < 0 || r >= gh || c < 0 || c >= gw) return;
            acc += wt * in[r * gw + c];
        };
        tap(r0, c0, (1.0 - ar) * (1.0 - ac));
        tap(r0, c0 + 1, (1.0 - ar) * ac);
        tap(r0 + 1, c0, ar * (1.0 - ac));
        tap(r0 + 1, c0 + 1, ar * ac);
        return acc;
    };
    switch (inst.kind) {
        case Kind::Identity:
            for (int64_t i = 0; i < gh * gw; ++i) out[i] = in[i];
            return;
        case Kind::Crop:
            for (int64_t r = 0; r < gh; ++r)
                for (int64_t c = 0; c < gw; ++c) {
                    const bool inside = r >= inst.row0 && r < inst.row0 + inst.rows &&
                                        c >= inst.col0 && c < inst.col0 + inst.cols;
                    out[r * gw + c] = inside ? in[r * gw + c] : 0.0;
                }
            return;
        case Kind::Translate:
            for (int64_t r = 0; r < gh; ++r)
                for (int64_t c = 0; c < gw; ++c) {
                    const int64_t sr = r - inst.dr;
                    const int64_t sc = c - inst.dc;
                    out[r * gw + c] = (sr >= 0 && sr < gh && sc >= 0 && sc < gw)
                                          ? in[sr * gw + sc]
                                          : 0.0;
                }
            return;
        case Kind::Rotate: {
            double cs, sn;
            const double m = std::fmod(inst.angle_deg, 360.0);
            if (std::fmod(m, 90.0) == 0.0) {
                int kq = static_cast<int>(m / 90.0) % 4;
                if (kq < 0) kq += 4;
                const double cst[4] = {1.0, 0.0, -1.0, 0.0};
                const double snt[4] = {0.0, 1.0, 0.0, -1.0};
                cs = cst[kq];
                sn = snt[kq];
            } else {
                cs = std::cos(inst.angle_deg * M_PI / 180.0);
                sn = std::sin(inst.angle_deg * M_PI / 180.0);
            }
            for (int64_t r = 0; r < gh; ++r)
                for (int64_t c = 0; c < gw; ++c) {
                    const double yr = static_cast<double>(r) - mr;
                    const double xc = static_cast<double>(c) - mc;
                    out[r * gw + c] = bilinear(mr + yr * cs + xc * sn, mc - yr * sn + xc * cs);
                }
            return;
        }
        case Kind::Scale:
            for (int64_t r = 0; r < gh; ++r)
                for (int64_t c = 0; c < gw; ++c) {
                    out[r * gw + c] = bilinear(mr + (static_cast<double>(r) - mr) / inst.factor,
                                               mc + (static_cast<double>(c) - mc) / inst.factor);
                }
            return;
        case Kind::Compose: {
            DVec cur(in, in + gh * gw);
            DVec next(static_cast<size_t>(gh * gw));
            for (const auto& child : inst.children) {
                ref_grid_transform(child, cur.data(), next.data(), gh, gw);
                cur = next;
            }
            for (int64_t i = 0; i < gh * gw; ++i) out[i] = cur[static_cast<size_t>(i)];
            return;
        }
    }
}

inline DVec ref_apply(const was::transforms::TransformInstance& inst, const DVec& w,
                      const std::vector<int64_t>& shape) {
    DVec out = w;
    if (inst.kind == was::transforms::Kind::Identity) return out;
    if (inst.domain == was::transforms::Domain::Matrix) {
        int64_t gw = 1;
        for (size_t i = 1; i < shape.size(); ++i) gw *= shape[i];
        ref_grid_transform(inst, w.data(), out.data(), shape[0], gw);
        return out;
    }
    if (shape.size() != 4 || (shape[2] == 1 && shape[3] == 1)) return out;
    const int64_t cells = shape[2] * shape[3];
    for (int64_t o = 0; o < shape[0]; ++o) {
        const bool selected =
            inst.all_kernels ||
            std::find(inst.kernels.begin(), inst.kernels.end(), o) != inst.kernels.end();
        if (!selected) continue;
        for (int64_t c = 0; c < shape[1]; ++c) {
            const int64_t base = (o * shape[1] + c) * cells;
            ref_grid_transform(inst, w.data() + base, out.data() + base, shape[2], shape[3]);
        }
    }
    return out;
}

// ---- reference whole-net forward: loss of shadow weights ----

struct RefParams {
    std::vector<DVec> weights;  // plain weights, double
    std::vector<DVec> biases;
    std::vector<was::transforms::TransformInstance> instances;
};

inline double ref_net_loss(const was::model::NetPlan& plan, const RefParams& p,
                           const was::Tensor& input, const std::vector<int>& labels) {
    using was::model::LayerKind;
    DVec x = to_d(input);
    int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    bool flat = false;
    int64_t feat = 0;
    size_t pi = 0;
    for (const auto& def : plan.arch.layers) {
        switch (def.kind) {
            case LayerKind::Conv: {
                const auto& ws = plan.params[pi].weight_shape;
                const DVec sw = ref_apply(p.instances[pi], p.weights[pi], ws);
                int64_t oh = 0, ow = 0;
                x = ref_conv2d(x, n, c, h, w, sw, ws[0], ws[2], ws[3], p.biases[pi], def.stride,
                               def.padding, oh, ow);
                c = ws[0];
                h = oh;
                w = ow;
                ++pi;
                break;
            }
            case LayerKind::ReLU:
                x = ref_relu(x);
                break;
            case LayerKind::MaxPool: {
                int64_t oh = 0, ow = 0;
                x = ref_maxpool(x, n, c, h, w, def.kernel, def.stride, oh, ow);
                h = oh;
                w = ow;
                break;
            }
            case LayerKind::Flatten:
                flat = true;
                feat = c * h * w;
                break;
            case LayerKind::Linear: {
                (void)flat;
                const auto& ws = plan.params[pi].weight_shape;
                const DVec sw = ref_apply(p.instances[pi], p.weights[pi], ws);
                x = ref_linear(x, n, feat, sw, ws[0], p.biases[pi]);
                feat = ws[0];
                ++pi;
                break;
            }
        }
    }
    return ref_xent_mean(x, n, feat, labels);
}

// Central finite difference of ref_net_loss w.r.t. plain weight coordinate.
inline double ref_fd_grad(const was::model::NetPlan& plan, RefParams& p, const was::Tensor& input,
                          const std::vector<int>& labels, size_t layer, int64_t coord,
                          double eps) {
    const double orig = p.weights[layer][static_cast<size_t>(coord)];
    p.weights[layer][static_cast<size_t>(coord)] = orig + eps;
    const double jp = ref_net_loss(plan, p, input, labels);
    p.weights[layer][static_cast<size_t>(coord)] = orig - eps;
    const double jm = ref_net_loss(plan, p, input, labels);
    p.weights[layer][static_cast<size_t>(coord)] = orig;
    return (jp - jm) / (2.0 * eps);
}

}  // namespace oracle
