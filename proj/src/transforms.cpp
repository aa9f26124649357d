#include "was/transforms.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "was/errors.hpp"

namespace was::transforms {

namespace {

// Sparse gather form of a linear map on a gh x gw grid: output cell i is the
// weighted sum of its entries. The adjoint is the scatter with the same
// weights, which is the exact transpose.
struct GridOp {
    int64_t gh = 0, gw = 0;
    struct Entry {
        int32_t src;
        double w;
    };
    std::vector<Entry> entries;
    std::vector<int32_t> offsets;  // per-cell ranges into entries, size gh*gw+1

    int64_t cells() const { return gh * gw; }
};

class GridOpBuilder {
public:
    GridOpBuilder(int64_t gh, int64_t gw) {
        op_.gh = gh;
        op_.gw = gw;
        op_.offsets.reserve(static_cast<size_t>(gh * gw) + 1);
        op_.offsets.push_back(0);
    }
    void add(int64_t src_r, int64_t src_c, double w) {
        if (w == 0.0) return;
        if (src_r < 0 || src_r >= op_.gh || src_c < 0 || src_c >= op_.gw) return;
        op_.entries.push_back({static_cast<int32_t>(src_r * op_.gw + src_c), w});
    }
    void finish_cell() { op_.offsets.push_back(static_cast<int32_t>(op_.entries.size())); }
    GridOp take() { return std::move(op_); }

private:
    GridOp op_;
};

GridOp identity_op(int64_t gh, int64_t gw) {
    GridOpBuilder b(gh, gw);
    for (int64_t r = 0; r < gh; ++r) {
        for (int64_t c = 0; c < gw; ++c) {
            b.add(r, c, 1.0);
            b.finish_cell();
        }
    }
    return b.take();
}

GridOp crop_op(int64_t gh, int64_t gw, const TransformInstance& inst) {
    GridOpBuilder b(gh, gw);
    for (int64_t r = 0; r < gh; ++r) {
        for (int64_t c = 0; c < gw; ++c) {
            if (r >= inst.row0 && r < inst.row0 + inst.rows && c >= inst.col0 &&
                c < inst.col0 + inst.cols) {
                b.add(r, c, 1.0);
            }
            b.finish_cell();
        }
    }
    return b.take();
}

GridOp translate_op(int64_t gh, int64_t gw, int64_t dr, int64_t dc) {
    GridOpBuilder b(gh, gw);
    for (int64_t r = 0; r < gh; ++r) {
        for (int64_t c = 0; c < gw; ++c) {
            b.add(r - dr, c - dc, 1.0);
            b.finish_cell();
        }
    }
    return b.take();
}

// Bilinear gather where fn maps an output cell to its source position.
GridOp resample_op(int64_t gh, int64_t gw,
                   const std::function<void(int64_t, int64_t, double&, double&)>& fn) {
    GridOpBuilder b(gh, gw);
    for (int64_t r = 0; r < gh; ++r) {
        for (int64_t c = 0; c < gw; ++c) {
            double sr = 0.0, sc = 0.0;
            fn(r, c, sr, sc);
            const double fr0 = std::floor(sr);
            const double fc0 = std::floor(sc);
            const int64_t r0 = static_cast<int64_t>(fr0);
            const int64_t c0 = static_cast<int64_t>(fc0);
            const double ar = sr - fr0;
            const double ac = sc - fc0;
            b.add(r0, c0, (1.0 - ar) * (1.0 - ac));
            b.add(r0, c0 + 1, (1.0 - ar) * ac);
            b.add(r0 + 1, c0, ar * (1.0 - ac));
            b.add(r0 + 1, c0 + 1, ar * ac);
            b.finish_cell();
        }
    }
    return b.take();
}

// cos/sin with exact values at multiples of 90 degrees, so those rotations
// stay exact permutations.
void trig_deg(double angle_deg, double& c, double& s) {
    const double m = std::fmod(angle_deg, 360.0);
    if (std::fmod(m, 90.0) == 0.0) {
        int k = static_cast<int>(m / 90.0) % 4;
        if (k < 0) k += 4;
        static const double cs[4] = {1.0, 0.0, -1.0, 0.0};
        static const double sn[4] = {0.0, 1.0, 0.0, -1.0};
        c = cs[k];
        s = sn[k];
        return;
    }
    const double rad = angle_deg * (M_PI / 180.0);
    c = std::cos(rad);
    s = std::sin(rad);
}

GridOp rotate_op(int64_t gh, int64_t gw, double angle_deg) {
    double cs = 1.0, sn = 0.0;
    trig_deg(angle_deg, cs, sn);
    const double mr = static_cast<double>(gh - 1) / 2.0;
    const double mc = static_cast<double>(gw - 1) / 2.0;
    return resample_op(gh, gw, [=](int64_t r, int64_t c, double& sr, double& sc) {
        const double yr = static_cast<double>(r) - mr;
        const double xc = static_cast<double>(c) - mc;
        sr = mr + yr * cs + xc * sn;
        sc = mc - yr * sn + xc * cs;
    });
}

GridOp scale_op(int64_t gh, int64_t gw, double factor) {
    const double mr = static_cast<double>(gh - 1) / 2.0;
    const double mc = static_cast<double>(gw - 1) / 2.0;
    return resample_op(gh, gw, [=](int64_t r, int64_t c, double& sr, double& sc) {
        sr = mr + (static_cast<double>(r) - mr) / factor;
        sc = mc + (static_cast<double>(c) - mc) / factor;
    });
}

// Gather-form product: (second after first)(x) == second(first(x)).
GridOp compose_ops(const GridOp& first, const GridOp& second) {
    GridOpBuilder b(second.gh, second.gw);
    std::map<int32_t, double> acc;
    for (int64_t i = 0; i < second.cells(); ++i) {
        acc.clear();
        for (int32_t e = second.offsets[static_cast<size_t>(i)];
             e < second.offsets[static_cast<size_t>(i) + 1]; ++e) {
            const auto& mid = second.entries[static_cast<size_t>(e)];
            for (int32_t f = first.offsets[static_cast<size_t>(mid.src)];
                 f < first.offsets[static_cast<size_t>(mid.src) + 1]; ++f) {
                const auto& leaf = first.entries[static_cast<size_t>(f)];
                acc[leaf.src] += mid.w * leaf.w;
            }
        }
        for (const auto& [src, w] : acc) b.add(src / second.gw, src % second.gw, w);
        b.finish_cell();
    }
    return b.take();
}

GridOp build_op(const TransformInstance& inst, int64_t gh, int64_t gw) {
    switch (inst.kind) {
        case Kind::Identity:
            return identity_op(gh, gw);
        case Kind::Crop:
            return crop_op(gh, gw, inst);
        case Kind::Translate:
            return translate_op(gh, gw, inst.dr, inst.dc);
        case Kind::Rotate:
            return rotate_op(gh, gw, inst.angle_deg);
        case Kind::Scale:
            return scale_op(gh, gw, inst.factor);
        case Kind::Compose: {
            GridOp op = identity_op(gh, gw);
            for (const TransformInstance& child : inst.children) {
                op = compose_ops(op, build_op(child, gh, gw));
            }
            return op;
        }
    }
    throw UsageError("unknown transform kind");
}

// Geometry of the transform domain for a weight tensor.
struct GridView {
    int64_t gh = 1, gw = 1;     // grid extents
    int64_t n_kernels = 1;      // outer slices carrying independent grids
    int64_t slices_per_kernel = 1;
    bool degenerate = false;    // 1x1 spatial extent: everything is Identity
};

GridView grid_view(const std::vector<int64_t>& shape, Domain domain) {
    GridView v;
    if (domain == Domain::Matrix) {
        if (shape.size() < 2) {
            v.degenerate = true;
            return v;
        }
        v.gh = shape[0];
        v.gw = 1;
        for (size_t i = 1; i < shape.size(); ++i) v.gw *= shape[i];
        return v;
    }
    if (shape.size() == 4) {
        v.gh = shape[2];
        v.gw = shape[3];
        v.n_kernels = shape[0];
        v.slices_per_kernel = shape[1];
        v.degenerate = (v.gh == 1 && v.gw == 1);
        return v;
    }
    // 2-D (linear) and 1-D weights have no spatial grid under Domain::Kernel.
    v.degenerate = true;
    return v;
}

bool kernel_selected(const TransformInstance& inst, int64_t o) {
    if (inst.all_kernels) return true;
    return std::binary_search(inst.kernels.begin(), inst.kernels.end(), o);
}

void gather_slice(const GridOp& op, const float* in, float* out) {
    for (int64_t i = 0; i < op.cells(); ++i) {
        double s = 0.0;
        for (int32_t e = op.offsets[static_cast<size_t>(i)];
             e < op.offsets[static_cast<size_t>(i) + 1]; ++e) {
            const auto& en = op.entries[static_cast<size_t>(e)];
            s += en.w * static_cast<double>(in[en.src]);
        }
        out[i] = static_cast<float>(s);
    }
}

void scatter_slice(const GridOp& op, const float* g, double* out) {
    for (int64_t i = 0; i < op.cells(); ++i) {
        for (int32_t e = op.offsets[static_cast<size_t>(i)];
             e < op.offsets[static_cast<size_t>(i) + 1]; ++e) {
            const auto& en = op.entries[static_cast<size_t>(e)];
            out[en.src] += en.w * static_cast<double>(g[i]);
        }
    }
}

double parse_double_field(const std::string& text, const std::string& field) {
    double v = 0.0;
    const char* b = text.data();
    const char* e = b + text.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) {
        throw ConfigError("transform spec field '" + field + "': cannot parse number '" + text +
                          "'");
    }
    return v;
}

std::string fmt_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, p);
}

}  // namespace

void TransformSpec::validate() const {
    auto bad = [](const std::string& field, const std::string& why) {
        throw ConfigError("transform spec field '" + field + "': " + why);
    };
    if (p_apply < 0.0 || p_apply > 1.0) bad("p_apply", "must be in [0, 1]");
    if (kernel_fraction <= 0.0 || kernel_fraction > 1.0) bad("kernel_fraction", "must be in (0, 1]");
    switch (kind) {
        case Kind::Identity:
            break;
        case Kind::Crop:
            if (!(crop_lo > 0.0)) bad("crop.lo", "must be > 0");
            if (crop_lo > crop_hi) bad("crop.lo", "must be <= crop.hi");
            if (crop_hi > 1.0) bad("crop.hi", "must be <= 1");
            break;
        case Kind::Translate:
            if (shift_frac_y < 0.0 || shift_frac_y >= 1.0) bad("translate.fy", "must be in [0, 1)");
            if (shift_frac_x < 0.0 || shift_frac_x >= 1.0) bad("translate.fx", "must be in [0, 1)");
            break;
        case Kind::Rotate:
            if (angle_lo > angle_hi) bad("rotate.lo", "must be <= rotate.hi");
            break;
        case Kind::Scale:
            if (!(scale_lo > 0.0)) bad("scale.lo", "must be > 0");
            if (scale_lo > scale_hi) bad("scale.lo", "must be <= scale.hi");
            if (scale_hi > 2.0) bad("scale.hi", "must be <= 2");
            break;
        case Kind::Compose:
            if (children.empty()) bad("compose", "child list must be non-empty");
            for (const TransformSpec& c : children) {
                if (c.kind == Kind::Compose) bad("compose", "nested compose is not allowed");
                if (c.p_apply != 1.0) bad("compose", "child p_apply must be 1 (gate at top level)");
                if (c.kernel_fraction != 1.0) {
                    bad("compose", "child kernel_fraction must be 1 (selection at top level)");
                }
                c.validate();
            }
            break;
    }
}

TransformInstance sample(const TransformSpec& spec, rng::Stream& stream,
                         const std::vector<int64_t>& weight_shape) {
    spec.validate();
    TransformInstance inst;
    inst.domain = spec.domain;

    const GridView grid = grid_view(weight_shape, spec.domain);
    if (grid.degenerate || spec.kind == Kind::Identity) {
        inst.kind = Kind::Identity;
        return inst;
    }

    if (stream.next_unit() >= spec.p_apply) {
        inst.kind = Kind::Identity;
        return inst;
    }

    std::function<void(const TransformSpec&, TransformInstance&)> draw =
        [&](const TransformSpec& s, TransformInstance& out) {
            out.kind = s.kind;
            out.domain = spec.domain;
            switch (s.kind) {
                case Kind::Identity:
                    break;
                case Kind::Crop: {
                    const double a = stream.uniform(s.crop_lo, s.crop_hi);
                    const double side = std::sqrt(a);
                    out.rows = std::clamp<int64_t>(
                        static_cast<int64_t>(std::floor(side * static_cast<double>(grid.gh))), 1,
                        grid.gh);
                    out.cols = std::clamp<int64_t>(
                        static_cast<int64_t>(std::floor(side * static_cast<double>(grid.gw))), 1,
                        grid.gw);
                    out.row0 = stream.uniform_int(0, grid.gh - out.rows);
                    out.col0 = stream.uniform_int(0, grid.gw - out.cols);
                    break;
                }
                case Kind::Translate: {
                    const int64_t mr = std::lround(s.shift_frac_y * static_cast<double>(grid.gh));
                    const int64_t mc = std::lround(s.shift_frac_x * static_cast<double>(grid.gw));
                    out.dr = stream.uniform_int(-mr, mr);
                    out.dc = stream.uniform_int(-mc, mc);
                    break;
                }
                case Kind::Rotate:
                    out.angle_deg = stream.uniform(s.angle_lo, s.angle_hi);
                    break;
                case Kind::Scale:
                    out.factor = stream.uniform(s.scale_lo, s.scale_hi);
                    break;
                case Kind::Compose:
                    for (const TransformSpec& c : s.children) {
                        TransformInstance ci;
                        draw(c, ci);
                        out.children.push_back(std::move(ci));
                    }
                    break;
            }
        };
    draw(spec, inst);

    if (spec.domain == Domain::Kernel && grid.n_kernels > 1 && spec.kernel_fraction < 1.0) {
        const int64_t k = static_cast<int64_t>(
            std::ceil(spec.kernel_fraction * static_cast<double>(grid.n_kernels)));
        if (k < grid.n_kernels) {
            inst.kernels = stream.sample_without_replacement(grid.n_kernels, k);
            std::sort(inst.kernels.begin(), inst.kernels.end());
            inst.all_kernels = false;
        }
    }
    return inst;
}

Tensor apply(const TransformInstance& inst, const Tensor& weight) {
    const GridView grid = grid_view(weight.shape(), inst.domain);
    if (grid.degenerate || inst.kind == Kind::Identity) return weight;

    const GridOp op = build_op(inst, grid.gh, grid.gw);
    Tensor out = weight;
    if (inst.domain == Domain::Matrix) {
        gather_slice(op, weight.data(), out.data());
        return out;
    }
    const int64_t cells = grid.gh * grid.gw;
    for (int64_t o = 0; o < grid.n_kernels; ++o) {
        if (!kernel_selected(inst, o)) continue;
        for (int64_t c = 0; c < grid.slices_per_kernel; ++c) {
            const int64_t base = (o * grid.slices_per_kernel + c) * cells;
            gather_slice(op, weight.data() + base, out.data() + base);
        }
    }
    return out;
}

Tensor adjoint(const TransformInstance& inst, const Tensor& grad) {
    const GridView grid = grid_view(grad.shape(), inst.domain);
    if (grid.degenerate || inst.kind == Kind::Identity) return grad;

    const GridOp op = build_op(inst, grid.gh, grid.gw);
    Tensor out = grad;
    const int64_t cells = grid.gh * grid.gw;
    std::vector<double> acc(static_cast<size_t>(cells));
    auto scatter_into = [&](const float* g, float* dst) {
        std::fill(acc.begin(), acc.end(), 0.0);
        scatter_slice(op, g, acc.data());
        for (int64_t i = 0; i < cells; ++i) dst[i] = static_cast<float>(acc[i]);
    };
    if (inst.domain == Domain::Matrix) {
        scatter_into(grad.data(), out.data());
        return out;
    }
    for (int64_t o = 0; o < grid.n_kernels; ++o) {
        if (!kernel_selected(inst, o)) continue;
        for (int64_t c = 0; c < grid.slices_per_kernel; ++c) {
            const int64_t base = (o * grid.slices_per_kernel + c) * cells;
            scatter_into(grad.data() + base, out.data() + base);
        }
    }
    return out;
}

double sparsity_of(const TransformInstance& inst, const std::vector<int64_t>& shape) {
    const GridView grid = grid_view(shape, inst.domain);
    if (grid.degenerate || inst.kind == Kind::Identity) return 0.0;

    const GridOp op = build_op(inst, grid.gh, grid.gw);
    int64_t zero_cells = 0;
    for (int64_t i = 0; i < op.cells(); ++i) {
        if (op.offsets[static_cast<size_t>(i)] == op.offsets[static_cast<size_t>(i) + 1]) {
            ++zero_cells;
        }
    }
    const int64_t total = Tensor::numel_of(shape);
    if (inst.domain == Domain::Matrix) {
        return static_cast<double>(zero_cells) / static_cast<double>(total);
    }
    const int64_t selected =
        inst.all_kernels ? grid.n_kernels : static_cast<int64_t>(inst.kernels.size());
    const int64_t zeros = selected * grid.slices_per_kernel * zero_cells;
    return static_cast<double>(zeros) / static_cast<double>(total);
}

std::string to_string(const TransformSpec& spec) {
    spec.validate();
    std::function<std::string(const TransformSpec&)> prim = [&](const TransformSpec& s) {
        switch (s.kind) {
            case Kind::Identity:
                return std::string("identity");
            case Kind::Crop:
                return "crop:" + fmt_double(s.crop_lo) + "," + fmt_double(s.crop_hi);
            case Kind::Translate:
                return "translate:" + fmt_double(s.shift_frac_y) + "," + fmt_double(s.shift_frac_x);
            case Kind::Rotate:
                return "rotate:" + fmt_double(s.angle_lo) + "," + fmt_double(s.angle_hi);
            case Kind::Scale:
                return "scale:" + fmt_double(s.scale_lo) + "," + fmt_double(s.scale_hi);
            case Kind::Compose:
                break;
        }
        throw UsageError("compose nesting in to_string");
    };
    std::string out;
    if (spec.kind == Kind::Compose) {
        for (size_t i = 0; i < spec.children.size(); ++i) {
            if (i) out += "+";
            out += prim(spec.children[i]);
        }
    } else {
        out = prim(spec);
    }
    if (spec.p_apply != 1.0) out += "@p=" + fmt_double(spec.p_apply);
    if (spec.kernel_fraction != 1.0) out += "@kf=" + fmt_double(spec.kernel_fraction);
    if (spec.domain == Domain::Matrix) out += "@domain=matrix";
    return out;
}

TransformSpec parse_spec(const std::string& text) {
    std::string body = text;
    // strip whitespace
    body.erase(std::remove_if(body.begin(), body.end(),
                              [](unsigned char ch) { return std::isspace(ch); }),
               body.end());
    if (body.empty()) throw ConfigError("transform spec: empty string");

    TransformSpec top;
    // options
    std::vector<std::string> opts;
    size_t at = body.find('@');
    if (at != std::string::npos) {
        std::string rest = body.substr(at + 1);
        body = body.substr(0, at);
        size_t pos = 0;
        while (pos != std::string::npos) {
            size_t next = rest.find('@', pos);
            opts.push_back(rest.substr(pos, next == std::string::npos ? next : next - pos));
            pos = next == std::string::npos ? next : next + 1;
        }
    }

    auto parse_prim = [](const std::string& s) {
        TransformSpec p;
        const size_t colon = s.find(':');
        const std::string name = s.substr(0, colon);
        std::vector<std::string> args;
        if (colon != std::string::npos) {
            std::string rest = s.substr(colon + 1);
            size_t pos = 0;
            while (pos != std::string::npos) {
                size_t next = rest.find(',', pos);
                args.push_back(rest.substr(pos, next == std::string::npos ? next : next - pos));
                pos = next == std::string::npos ? next : next + 1;
            }
        }
        auto need2 = [&](const char* what) {
            if (args.size() != 2) {
                throw ConfigError("transform spec '" + s + "': " + what + " needs lo,hi");
            }
        };
        if (name == "identity") {
            if (!args.empty()) throw ConfigError("transform spec 'identity' takes no parameters");
            p.kind = Kind::Identity;
        } else if (name == "crop") {
            need2("crop");
            p.kind = Kind::Crop;
            p.crop_lo = parse_double_field(args[0], "crop.lo");
            p.crop_hi = parse_double_field(args[1], "crop.hi");
        } else if (name == "translate") {
            need2("translate");
            p.kind = Kind::Translate;
            p.shift_frac_y = parse_double_field(args[0], "translate.fy");
            p.shift_frac_x = parse_double_field(args[1], "translate.fx");
        } else if (name == "rotate") {
            need2("rotate");
            p.kind = Kind::Rotate;
            p.angle_lo = parse_double_field(args[0], "rotate.lo");
            p.angle_hi = parse_double_field(args[1], "rotate.hi");
        } else if (name == "scale") {
            need2("scale");
            p.kind = Kind::Scale;
            p.scale_lo = parse_double_field(args[0], "scale.lo");
            p.scale_hi = parse_double_field(args[1], "scale.hi");
        } else {
            throw ConfigError("transform spec: unknown kind '" + name + "'");
        }
        return p;
    };

    std::vector<std::string> parts;
    size_t pos = 0;
    while (pos != std::string::npos) {
        size_t next = body.find('+', pos);
        parts.push_back(body.substr(pos, next == std::string::npos ? next : next - pos));
        pos = next == std::string::npos ? next : next + 1;
    }
    if (parts.size() == 1) {
        top = parse_prim(parts[0]);
    } else {
        top.kind = Kind::Compose;
        for (const std::string& part : parts) top.children.push_back(parse_prim(part));
    }

    for (const std::string& opt : opts) {
        const size_t eq = opt.find('=');
        const std::string key = opt.substr(0, eq);
        const std::string val = eq == std::string::npos ? "" : opt.substr(eq + 1);
        if (key == "p") {
            top.p_apply = parse_double_field(val, "p_apply");
        } else if (key == "kf") {
            top.kernel_fraction = parse_double_field(val, "kernel_fraction");
        } else if (key == "domain") {
            if (val == "matrix") {
                top.domain = Domain::Matrix;
            } else if (val == "kernel") {
                top.domain = Domain::Kernel;
            } else {
                throw ConfigError("transform spec option 'domain': must be kernel or matrix");
            }
        } else {
            throw ConfigError("transform spec: unknown option '" + key + "'");
        }
    }
    for (TransformSpec& c : top.children) c.domain = top.domain;
    top.validate();
    return top;
}

TransformSpec preset(const std::string& name) {
    if (name == "identity" || name == "I") return parse_spec("identity");
    if (name == "C") return parse_spec("crop:0.8,1@p=0.5");
    if (name == "T") return parse_spec("translate:0.3,0.3@p=0.5");
    if (name == "R") return parse_spec("rotate:0,90@p=0.5");
    if (name == "CT") return parse_spec("crop:0.8,1+translate:0.3,0.3@p=0.5");
    throw ConfigError("unknown transform preset '" + name + "' (use C, T, R, CT, identity)");
}

std::string describe(const TransformInstance& inst) {
    std::ostringstream os;
    switch (inst.kind) {
        case Kind::Identity:
            os << "identity";
            break;
        case Kind::Crop:
            os << "crop(r0=" << inst.row0 << ",c0=" << inst.col0 << ",rows=" << inst.rows
               << ",cols=" << inst.cols << ")";
            break;
        case Kind::Translate:
            os << "translate(dr=" << inst.dr << ",dc=" << inst.dc << ")";
            break;
        case Kind::Rotate:
            os << "rotate(" << inst.angle_deg << "deg)";
            break;
        case Kind::Scale:
            os << "scale(" << inst.factor << ")";
            break;
        case Kind::Compose: {
            os << "compose[";
            for (size_t i = 0; i < inst.children.size(); ++i) {
                if (i) os << ",";
                os << describe(inst.children[i]);
            }
            os << "]";
            break;
        }
    }
    if (!inst.all_kernels) os << " on " << inst.kernels.size() << " kernels";
    return os.str();
}

}  // namespace was::transforms
