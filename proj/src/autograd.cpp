#define EIGEN_DONT_PARALLELIZE
#include "was/autograd.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string_view>

#include "was/errors.hpp"

namespace was::autograd {

namespace {

using RMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRMat = Eigen::Map<RMat>;
using ConstMapRMat = Eigen::Map<const RMat>;

struct ConvDims {
    int64_t n, c, h, w, o, kh, kw;
    int stride, padding;
    int64_t oh, ow;
};

ConvDims conv_dims(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                   int padding) {
    if (input.ndim() != 4 || weight.ndim() != 4) {
        throw ConfigError("conv2d expects 4-D input and weight, got input " + input.shape_str() +
                          " weight " + weight.shape_str());
    }
    ConvDims d;
    d.n = input.dim(0);
    d.c = input.dim(1);
    d.h = input.dim(2);
    d.w = input.dim(3);
    d.o = weight.dim(0);
    d.kh = weight.dim(2);
    d.kw = weight.dim(3);
    d.stride = stride;
    d.padding = padding;
    if (weight.dim(1) != d.c) {
        throw ConfigError("conv2d channel mismatch: input " + input.shape_str() + " vs weight " +
                          weight.shape_str());
    }
    if (bias.ndim() != 1 || bias.dim(0) != d.o) {
        throw ConfigError("conv2d bias shape " + bias.shape_str() + " does not match weight " +
                          weight.shape_str());
    }
    if (stride < 1) throw ConfigError("conv2d stride must be >= 1");
    const int64_t eh = d.h + 2 * padding - d.kh;
    const int64_t ew = d.w + 2 * padding - d.kw;
    if (eh < 0 || ew < 0 || eh % stride != 0 || ew % stride != 0) {
        throw ConfigError("conv2d geometry invalid: input " + input.shape_str() + " weight " +
                          weight.shape_str() + " stride " + std::to_string(stride) + " padding " +
                          std::to_string(padding));
    }
    d.oh = eh / stride + 1;
    d.ow = ew / stride + 1;
    return d;
}

// Row r = (n * OH + y) * OW + x holds the receptive field of output (n, y, x).
void im2col(const Tensor& input, const ConvDims& d, RMat& patches) {
    const int64_t ckk = d.c * d.kh * d.kw;
    patches.setZero(d.n * d.oh * d.ow, ckk);
    const float* in = input.data();
    for (int64_t n = 0; n < d.n; ++n) {
        for (int64_t y = 0; y < d.oh; ++y) {
            for (int64_t x = 0; x < d.ow; ++x) {
                float* row = patches.data() + ((n * d.oh + y) * d.ow + x) * ckk;
                const int64_t iy0 = y * d.stride - d.padding;
                const int64_t ix0 = x * d.stride - d.padding;
                for (int64_t c = 0; c < d.c; ++c) {
                    for (int64_t ky = 0; ky < d.kh; ++ky) {
                        const int64_t iy = iy0 + ky;
                        if (iy < 0 || iy >= d.h) continue;
                        const float* src = in + ((n * d.c + c) * d.h + iy) * d.w;
                        float* dst = row + (c * d.kh + ky) * d.kw;
                        for (int64_t kx = 0; kx < d.kw; ++kx) {
                            const int64_t ix = ix0 + kx;
                            if (ix < 0 || ix >= d.w) continue;
                            dst[kx] = src[ix];
                        }
                    }
                }
            }
        }
    }
}

void col2im_add(const RMat& dpatches, const ConvDims& d, Tensor& dinput) {
    float* out = dinput.data();
    const int64_t ckk = d.c * d.kh * d.kw;
    for (int64_t n = 0; n < d.n; ++n) {
        for (int64_t y = 0; y < d.oh; ++y) {
            for (int64_t x = 0; x < d.ow; ++x) {
                const float* row = dpatches.data() + ((n * d.oh + y) * d.ow + x) * ckk;
                const int64_t iy0 = y * d.stride - d.padding;
                const int64_t ix0 = x * d.stride - d.padding;
                for (int64_t c = 0; c < d.c; ++c) {
                    for (int64_t ky = 0; ky < d.kh; ++ky) {
                        const int64_t iy = iy0 + ky;
                        if (iy < 0 || iy >= d.h) continue;
                        float* dst = out + ((n * d.c + c) * d.h + iy) * d.w;
                        const float* src = row + (c * d.kh + ky) * d.kw;
                        for (int64_t kx = 0; kx < d.kw; ++kx) {
                            const int64_t ix = ix0 + kx;
                            if (ix < 0 || ix >= d.w) continue;
                            dst[ix] += src[kx];
                        }
                    }
                }
            }
        }
    }
}

struct ConvCtx {
    ConvDims dims;
    RMat patches;
};

struct PoolCtx {
    std::vector<int64_t> argmax;  // flat input index per output element
};

struct XentCtx {
    Tensor probs;  // [N, K]
    std::vector<int> labels;
};

}  // namespace

NodeId Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    const NodeId id = static_cast<NodeId>(nodes_.size() - 1);
    check_finite(id);
    return id;
}

void Tape::check_finite(NodeId id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    const int64_t bad = n.value.first_non_finite();
    if (bad >= 0) {
        throw NonFiniteError("non-finite value in '" + n.label + "' at flat index " +
                             std::to_string(bad));
    }
}

NodeId Tape::leaf(Tensor value, bool requires_grad, std::string label) {
    Node n;
    n.op = "leaf";
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.label = std::move(label);
    return push(std::move(n));
}

NodeId Tape::conv2d(NodeId input, NodeId weight, NodeId bias, int stride, int padding,
                    std::string label) {
    const Tensor& x = value(input);
    const Tensor& w = value(weight);
    const Tensor& b = value(bias);
    auto ctx = std::make_shared<ConvCtx>();
    ctx->dims = conv_dims(x, w, b, stride, padding);
    const ConvDims& d = ctx->dims;

    im2col(x, d, ctx->patches);
    const int64_t ckk = d.c * d.kh * d.kw;
    const int64_t rows = d.n * d.oh * d.ow;

    ConstMapRMat wmat(w.data(), d.o, ckk);
    RMat out_rm = ctx->patches * wmat.transpose();  // [rows, O]

    Tensor out({d.n, d.o, d.oh, d.ow});
    float* op = out.data();
    const int64_t plane = d.oh * d.ow;
    for (int64_t n = 0; n < d.n; ++n) {
        for (int64_t o = 0; o < d.o; ++o) {
            const float bo = b[o];
            float* dst = op + (n * d.o + o) * plane;
            for (int64_t p = 0; p < plane; ++p) dst[p] = out_rm(n * plane + p, o) + bo;
        }
    }

    Node node;
    node.op = "conv2d";
    node.value = std::move(out);
    node.label = std::move(label);
    node.inputs = {input, weight, bias};
    node.requires_grad = at(input).requires_grad || at(weight).requires_grad || at(bias).requires_grad;
    node.ctx = ctx;
    node.backprop = [input, weight, bias, ctx, rows, ckk](Tape& t, NodeId self) {
        const ConvDims& d = ctx->dims;
        const Tensor& g = t.grad(self);
        const int64_t plane = d.oh * d.ow;

        RMat g_rm(rows, d.o);
        const float* gp = g.data();
        for (int64_t n = 0; n < d.n; ++n) {
            for (int64_t o = 0; o < d.o; ++o) {
                const float* src = gp + (n * d.o + o) * plane;
                for (int64_t p = 0; p < plane; ++p) g_rm(n * plane + p, o) = src[p];
            }
        }

        if (t.at(weight).requires_grad) {
            MapRMat dw(t.at(weight).grad.data(), d.o, ckk);
            dw.noalias() += g_rm.transpose() * ctx->patches;
        }
        if (t.at(bias).requires_grad) {
            Tensor& db = t.at(bias).grad;
            for (int64_t o = 0; o < d.o; ++o) {
                double s = 0.0;
                for (int64_t r = 0; r < rows; ++r) s += g_rm(r, o);
                db[o] += static_cast<float>(s);
            }
        }
        if (t.at(input).requires_grad) {
            ConstMapRMat wmat(t.value(weight).data(), d.o, ckk);
            RMat dpatches = g_rm * wmat;  // [rows, ckk]
            col2im_add(dpatches, d, t.at(input).grad);
        }
    };
    return push(std::move(node));
}

NodeId Tape::linear(NodeId input, NodeId weight, NodeId bias, std::string label) {
    const Tensor& x = value(input);
    const Tensor& w = value(weight);
    const Tensor& b = value(bias);
    if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(1)) {
        throw ConfigError("linear shape mismatch: input " + x.shape_str() + " vs weight " +
                          w.shape_str());
    }
    if (b.ndim() != 1 || b.dim(0) != w.dim(0)) {
        throw ConfigError("linear bias shape " + b.shape_str() + " does not match weight " +
                          w.shape_str());
    }
    const int64_t n = x.dim(0), din = x.dim(1), dout = w.dim(0);

    Tensor out({n, dout});
    ConstMapRMat xm(x.data(), n, din);
    ConstMapRMat wm(w.data(), dout, din);
    MapRMat om(out.data(), n, dout);
    om.noalias() = xm * wm.transpose();
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < dout; ++j) out.at(i, j) += b[j];
    }

    Node node;
    node.op = "linear";
    node.value = std::move(out);
    node.label = std::move(label);
    node.inputs = {input, weight, bias};
    node.requires_grad = at(input).requires_grad || at(weight).requires_grad || at(bias).requires_grad;
    node.backprop = [input, weight, bias, n, din, dout](Tape& t, NodeId self) {
        ConstMapRMat gm(t.grad(self).data(), n, dout);
        if (t.at(weight).requires_grad) {
            ConstMapRMat xm(t.value(input).data(), n, din);
            MapRMat dw(t.at(weight).grad.data(), dout, din);
            dw.noalias() += gm.transpose() * xm;
        }
        if (t.at(bias).requires_grad) {
            Tensor& db = t.at(bias).grad;
            for (int64_t j = 0; j < dout; ++j) {
                double s = 0.0;
                for (int64_t i = 0; i < n; ++i) s += gm(i, j);
                db[j] += static_cast<float>(s);
            }
        }
        if (t.at(input).requires_grad) {
            ConstMapRMat wm(t.value(weight).data(), dout, din);
            MapRMat dx(t.at(input).grad.data(), n, din);
            dx.noalias() += gm * wm;
        }
    };
    return push(std::move(node));
}

NodeId Tape::relu(NodeId x, std::string label) {
    const Tensor& in = value(x);
    Tensor out = in;
    for (int64_t i = 0; i < out.numel(); ++i) {
        if (out[i] < 0.0f) out[i] = 0.0f;
    }
    Node node;
    node.op = "relu";
    node.value = std::move(out);
    node.label = std::move(label);
    node.inputs = {x};
    node.requires_grad = at(x).requires_grad;
    node.backprop = [x](Tape& t, NodeId self) {
        if (!t.at(x).requires_grad) return;
        const Tensor& in = t.value(x);
        const Tensor& g = t.grad(self);
        Tensor& dx = t.at(x).grad;
        for (int64_t i = 0; i < g.numel(); ++i) {
            if (in[i] > 0.0f) dx[i] += g[i];
        }
    };
    return push(std::move(node));
}

NodeId Tape::maxpool2d(NodeId x, int k, int stride, std::string label) {
    const Tensor& in = value(x);
    if (in.ndim() != 4) throw ConfigError("maxpool2d expects 4-D input, got " + in.shape_str());
    if (k < 1 || stride < 1) throw ConfigError("maxpool2d window and stride must be >= 1");
    const int64_t n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
    if (h < k || w < k || (h - k) % stride != 0 || (w - k) % stride != 0) {
        throw ConfigError("maxpool2d geometry invalid for input " + in.shape_str() + " k " +
                          std::to_string(k) + " stride " + std::to_string(stride));
    }
    const int64_t oh = (h - k) / stride + 1;
    const int64_t ow = (w - k) / stride + 1;

    Tensor out({n, c, oh, ow});
    auto ctx = std::make_shared<PoolCtx>();
    ctx->argmax.resize(static_cast<size_t>(out.numel()));
    const float* ip = in.data();
    float* op = out.data();
    int64_t oi = 0;
    for (int64_t nn = 0; nn < n; ++nn) {
        for (int64_t cc = 0; cc < c; ++cc) {
            const float* plane = ip + (nn * c + cc) * h * w;
            for (int64_t y = 0; y < oh; ++y) {
                for (int64_t xo = 0; xo < ow; ++xo, ++oi) {
                    float best = -std::numeric_limits<float>::infinity();
                    int64_t best_idx = -1;
                    for (int64_t ky = 0; ky < k; ++ky) {
                        for (int64_t kx = 0; kx < k; ++kx) {
                            const int64_t iy = y * stride + ky;
                            const int64_t ix = xo * stride + kx;
                            const float v = plane[iy * w + ix];
                            if (v > best) {  // strict: ties go to the first row-major index
                                best = v;
                                best_idx = (nn * c + cc) * h * w + iy * w + ix;
                            }
                        }
                    }
                    op[oi] = best;
                    ctx->argmax[static_cast<size_t>(oi)] = best_idx;
                }
            }
        }
    }

    Node node;
    node.op = "maxpool2d";
    node.value = std::move(out);
    node.label = std::move(label);
    node.inputs = {x};
    node.requires_grad = at(x).requires_grad;
    node.ctx = ctx;
    node.backprop = [x, ctx](Tape& t, NodeId self) {
        if (!t.at(x).requires_grad) return;
        const Tensor& g = t.grad(self);
        Tensor& dx = t.at(x).grad;
        for (int64_t i = 0; i < g.numel(); ++i) dx[ctx->argmax[static_cast<size_t>(i)]] += g[i];
    };
    return push(std::move(node));
}

NodeId Tape::flatten(NodeId x, std::string label) {
    const Tensor& in = value(x);
    if (in.ndim() < 2) throw ConfigError("flatten expects >= 2-D input, got " + in.shape_str());
    int64_t rest = 1;
    for (size_t i = 1; i < in.ndim(); ++i) rest *= in.dim(i);
    Tensor out = Tensor::from({in.dim(0), rest}, in.vec());

    Node node;
    node.op = "flatten";
    node.value = std::move(out);
    node.label = std::move(label);
    node.inputs = {x};
    node.requires_grad = at(x).requires_grad;
    node.backprop = [x](Tape& t, NodeId self) {
        if (!t.at(x).requires_grad) return;
        const Tensor& g = t.grad(self);
        Tensor& dx = t.at(x).grad;
        for (int64_t i = 0; i < g.numel(); ++i) dx[i] += g[i];
    };
    return push(std::move(node));
}

NodeId Tape::softmax_cross_entropy(NodeId logits, std::vector<int> labels, std::string label) {
    const Tensor& z = value(logits);
    if (z.ndim() != 2) throw ConfigError("softmax_xent expects 2-D logits, got " + z.shape_str());
    const int64_t n = z.dim(0);
    const int64_t k = z.dim(1);
    if (static_cast<int64_t>(labels.size()) != n) {
        throw ConfigError("softmax_xent label count " + std::to_string(labels.size()) +
                          " does not match batch " + std::to_string(n));
    }
    for (int lab : labels) {
        if (lab < 0 || lab >= k) {
            throw DataFormatError("label " + std::to_string(lab) + " out of class range [0, " +
                                  std::to_string(k) + ")");
        }
    }

    auto ctx = std::make_shared<XentCtx>();
    ctx->probs = Tensor({n, k});
    ctx->labels = labels;
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        float m = z.at(i, 0);
        for (int64_t j = 1; j < k; ++j) m = std::max(m, z.at(i, j));
        double denom = 0.0;
        for (int64_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(z.at(i, j) - m));
        const double lse = static_cast<double>(m) + std::log(denom);
        for (int64_t j = 0; j < k; ++j) {
            ctx->probs.at(i, j) =
                static_cast<float>(std::exp(static_cast<double>(z.at(i, j)) - lse));
        }
        total += lse - static_cast<double>(z.at(i, labels[static_cast<size_t>(i)]));
    }

    Node node;
    node.op = "softmax_xent";
    node.value = Tensor::from({1}, {static_cast<float>(total / static_cast<double>(n))});
    node.label = std::move(label);
    node.inputs = {logits};
    node.requires_grad = at(logits).requires_grad;
    node.ctx = ctx;
    node.backprop = [logits, ctx, n, k](Tape& t, NodeId self) {
        if (!t.at(logits).requires_grad) return;
        const float g = t.grad(self)[0];
        Tensor& dz = t.at(logits).grad;
        const float inv_n = 1.0f / static_cast<float>(n);
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t j = 0; j < k; ++j) {
                float v = ctx->probs.at(i, j);
                if (j == ctx->labels[static_cast<size_t>(i)]) v -= 1.0f;
                dz.at(i, j) += g * v * inv_n;
            }
        }
    };
    return push(std::move(node));
}

NodeId Tape::sum(NodeId x, std::string label) {
    const Tensor& in = value(x);
    double s = 0.0;
    for (int64_t i = 0; i < in.numel(); ++i) s += in[i];
    Node node;
    node.op = "sum";
    node.value = Tensor::from({1}, {static_cast<float>(s)});
    node.label = std::move(label);
    node.inputs = {x};
    node.requires_grad = at(x).requires_grad;
    node.backprop = [x](Tape& t, NodeId self) {
        if (!t.at(x).requires_grad) return;
        const float g = t.grad(self)[0];
        Tensor& dx = t.at(x).grad;
        for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += g;
    };
    return push(std::move(node));
}

NodeId Tape::mul(NodeId a, NodeId b, std::string label) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) {
        throw ConfigError("mul shape mismatch: " + va.shape_str() + " vs " + vb.shape_str());
    }
    Tensor out = va;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= vb[i];
    Node node;
    node.op = "mul";
    node.value = std::move(out);
    node.label = std::move(label);
    node.inputs = {a, b};
    node.requires_grad = at(a).requires_grad || at(b).requires_grad;
    node.backprop = [a, b](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        if (t.at(a).requires_grad) {
            const Tensor& vb = t.value(b);
            Tensor& da = t.at(a).grad;
            for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] * vb[i];
        }
        if (t.at(b).requires_grad) {
            const Tensor& va = t.value(a);
            Tensor& db = t.at(b).grad;
            for (int64_t i = 0; i < g.numel(); ++i) db[i] += g[i] * va[i];
        }
    };
    return push(std::move(node));
}

NodeId Tape::scale(NodeId x, float c, std::string label) {
    Tensor out = value(x);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= c;
    Node node;
    node.op = "scale";
    node.value = std::move(out);
    node.label = std::move(label);
    node.inputs = {x};
    node.requires_grad = at(x).requires_grad;
    node.backprop = [x, c](Tape& t, NodeId self) {
        if (!t.at(x).requires_grad) return;
        const Tensor& g = t.grad(self);
        Tensor& dx = t.at(x).grad;
        for (int64_t i = 0; i < g.numel(); ++i) dx[i] += g[i] * c;
    };
    return push(std::move(node));
}

void Tape::backward(NodeId loss) {
    if (backward_done_) throw UsageError("backward() already ran on this tape");
    const Tensor& lv = value(loss);
    if (lv.numel() != 1) {
        throw UsageError("backward() needs a scalar loss, got shape " + lv.shape_str());
    }
    for (Node& n : nodes_) {
        if (n.requires_grad) n.grad = Tensor(n.value.shape());
    }
    at(loss).grad[0] = 1.0f;
    for (NodeId id = loss; id >= 0; --id) {
        Node& n = at(id);
        if (n.requires_grad && n.backprop && n.grad.numel() > 0) n.backprop(*this, id);
    }
    backward_done_ = true;
}

const Tensor& Tape::softmax_probs(NodeId xent_node) const {
    const Node& n = nodes_[static_cast<size_t>(xent_node)];
    auto* ctx = static_cast<XentCtx*>(n.ctx.get());
    if (!ctx || std::string_view(n.op) != "softmax_xent") {
        throw UsageError("softmax_probs() needs a softmax_xent node");
    }
    return ctx->probs;
}

}  // namespace was::autograd
