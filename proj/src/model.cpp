#include "was/model.hpp"

#include <charconv>
#include <cmath>

#include "was/errors.hpp"
#include "was/rng.hpp"

namespace was::model {

namespace {

int64_t parse_int(const std::string& s, const std::string& what) {
    int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw ConfigError("architecture: cannot parse integer '" + s + "' in " + what);
    }
    return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos != std::string::npos) {
        size_t next = s.find(sep, pos);
        out.push_back(s.substr(pos, next == std::string::npos ? next : next - pos));
        pos = next == std::string::npos ? next : next + 1;
    }
    return out;
}

}  // namespace

ArchitectureDef ArchitectureDef::named(const std::string& id, int64_t num_classes) {
    ArchitectureDef a;
    a.id = id;
    auto conv = [&](int64_t out) { a.layers.push_back({LayerKind::Conv, out, 3, 1, 1}); };
    auto relu = [&]() { a.layers.push_back({LayerKind::ReLU}); };
    auto pool = [&]() { a.layers.push_back({LayerKind::MaxPool, 0, 2, 2, 0}); };
    if (id == "smallcnn") {
        conv(32), relu(), pool();
        conv(64), relu(), pool();
        conv(64), relu();
        a.layers.push_back({LayerKind::Flatten});
        a.layers.push_back({LayerKind::Linear, num_classes});
        return a;
    }
    if (id == "vgg16c") {
        const int64_t stages[5][3] = {{64, 64, 0}, {128, 128, 0}, {256, 256, 256},
                                      {512, 512, 512}, {512, 512, 512}};
        for (const auto& stage : stages) {
            for (int64_t width : stage) {
                if (width == 0) continue;
                conv(width), relu();
            }
            pool();
        }
        a.layers.push_back({LayerKind::Flatten});
        a.layers.push_back({LayerKind::Linear, num_classes});
        return a;
    }
    throw ConfigError("unknown architecture id '" + id + "' (use smallcnn, vgg16c, or custom)");
}

ArchitectureDef ArchitectureDef::custom(const std::vector<std::string>& lines) {
    ArchitectureDef a;
    a.id = "custom";
    for (const std::string& line : lines) {
        const auto head = split(line, ':');
        const std::string& name = head[0];
        const auto args = head.size() > 1 ? split(head[1], ',') : std::vector<std::string>{};
        LayerDef d;
        if (name == "conv") {
            if (args.size() != 4) {
                throw ConfigError("architecture: conv needs out,kernel,stride,padding in '" + line +
                                  "'");
            }
            d = {LayerKind::Conv, parse_int(args[0], line),
                 static_cast<int>(parse_int(args[1], line)),
                 static_cast<int>(parse_int(args[2], line)),
                 static_cast<int>(parse_int(args[3], line))};
        } else if (name == "relu") {
            d = {LayerKind::ReLU};
        } else if (name == "maxpool") {
            if (args.size() != 2) {
                throw ConfigError("architecture: maxpool needs kernel,stride in '" + line + "'");
            }
            d = {LayerKind::MaxPool, 0, static_cast<int>(parse_int(args[0], line)),
                 static_cast<int>(parse_int(args[1], line))};
        } else if (name == "flatten") {
            d = {LayerKind::Flatten};
        } else if (name == "linear") {
            if (args.size() != 1) {
                throw ConfigError("architecture: linear needs out width in '" + line + "'");
            }
            d = {LayerKind::Linear, parse_int(args[0], line)};
        } else {
            throw ConfigError("architecture: unknown layer '" + line + "'");
        }
        a.layers.push_back(d);
    }
    return a;
}

std::vector<std::string> ArchitectureDef::serialize() const {
    std::vector<std::string> out;
    for (const LayerDef& d : layers) {
        switch (d.kind) {
            case LayerKind::Conv:
                out.push_back("conv:" + std::to_string(d.out) + "," + std::to_string(d.kernel) +
                              "," + std::to_string(d.stride) + "," + std::to_string(d.padding));
                break;
            case LayerKind::ReLU:
                out.push_back("relu");
                break;
            case LayerKind::MaxPool:
                out.push_back("maxpool:" + std::to_string(d.kernel) + "," +
                              std::to_string(d.stride));
                break;
            case LayerKind::Flatten:
                out.push_back("flatten");
                break;
            case LayerKind::Linear:
                out.push_back("linear:" + std::to_string(d.out));
                break;
        }
    }
    return out;
}

NetPlan make_plan(const ArchitectureDef& arch, int64_t in_c, int64_t in_h, int64_t in_w,
                  int64_t num_classes) {
    NetPlan plan;
    plan.arch = arch;
    plan.in_c = in_c;
    plan.in_h = in_h;
    plan.in_w = in_w;
    plan.num_classes = num_classes;

    int64_t c = in_c, h = in_h, w = in_w;
    bool flat = false;
    int64_t feat = 0;
    int conv_i = 0, fc_i = 0;
    int64_t last_width = -1;

    for (size_t i = 0; i < arch.layers.size(); ++i) {
        const LayerDef& d = arch.layers[i];
        switch (d.kind) {
            case LayerKind::Conv: {
                if (flat) throw ConfigError("architecture: conv after flatten at layer " +
                                            std::to_string(i));
                const int64_t eh = h + 2 * d.padding - d.kernel;
                const int64_t ew = w + 2 * d.padding - d.kernel;
                if (eh < 0 || ew < 0 || eh % d.stride != 0 || ew % d.stride != 0) {
                    throw ConfigError("architecture: conv geometry does not compose at layer " +
                                      std::to_string(i) + " (input " + std::to_string(h) + "x" +
                                      std::to_string(w) + ")");
                }
                const int64_t oh = eh / d.stride + 1;
                const int64_t ow = ew / d.stride + 1;
                ParamLayer p;
                p.name = "conv" + std::to_string(++conv_i);
                p.layer_index = i;
                p.is_conv = true;
                p.weight_shape = {d.out, c, d.kernel, d.kernel};
                p.bias_shape = {d.out};
                p.macs = d.out * c * d.kernel * d.kernel * oh * ow;
                plan.params.push_back(std::move(p));
                c = d.out;
                h = oh;
                w = ow;
                last_width = d.out;
                break;
            }
            case LayerKind::ReLU:
                break;
            case LayerKind::MaxPool: {
                if (flat) throw ConfigError("architecture: maxpool after flatten at layer " +
                                            std::to_string(i));
                if (h < d.kernel || w < d.kernel || (h - d.kernel) % d.stride != 0 ||
                    (w - d.kernel) % d.stride != 0) {
                    throw ConfigError("architecture: maxpool geometry does not compose at layer " +
                                      std::to_string(i));
                }
                h = (h - d.kernel) / d.stride + 1;
                w = (w - d.kernel) / d.stride + 1;
                break;
            }
            case LayerKind::Flatten:
                if (flat) throw ConfigError("architecture: repeated flatten at layer " +
                                            std::to_string(i));
                flat = true;
                feat = c * h * w;
                break;
            case LayerKind::Linear: {
                if (!flat) throw ConfigError("architecture: linear requires flatten first (layer " +
                                             std::to_string(i) + ")");
                ParamLayer p;
                p.name = "fc" + std::to_string(++fc_i);
                p.layer_index = i;
                p.is_conv = false;
                p.weight_shape = {d.out, feat};
                p.bias_shape = {d.out};
                p.macs = d.out * feat;
                plan.params.push_back(std::move(p));
                feat = d.out;
                last_width = d.out;
                break;
            }
        }
    }
    if (plan.params.empty()) throw ConfigError("architecture: no parameterized layers");
    if (last_width != num_classes) {
        throw ConfigError("architecture: final layer width " + std::to_string(last_width) +
                          " does not equal num_classes " + std::to_string(num_classes));
    }
    return plan;
}

autograd::NodeId forward_net(const NetPlan& plan, autograd::Tape& tape, autograd::NodeId input,
                             const std::vector<autograd::NodeId>& weights,
                             const std::vector<autograd::NodeId>& biases) {
    if (weights.size() != plan.params.size() || biases.size() != plan.params.size()) {
        throw UsageError("forward_net: expected " + std::to_string(plan.params.size()) +
                         " weight/bias nodes");
    }
    autograd::NodeId x = input;
    size_t pi = 0;
    for (size_t i = 0; i < plan.arch.layers.size(); ++i) {
        const LayerDef& d = plan.arch.layers[i];
        switch (d.kind) {
            case LayerKind::Conv:
                x = tape.conv2d(x, weights[pi], biases[pi], d.stride, d.padding,
                                plan.params[pi].name);
                ++pi;
                break;
            case LayerKind::ReLU:
                x = tape.relu(x);
                break;
            case LayerKind::MaxPool:
                x = tape.maxpool2d(x, d.kernel, d.stride);
                break;
            case LayerKind::Flatten:
                x = tape.flatten(x);
                break;
            case LayerKind::Linear:
                x = tape.linear(x, weights[pi], biases[pi], plan.params[pi].name);
                ++pi;
                break;
        }
    }
    return x;
}

Tensor forward_logits(const NetPlan& plan, const std::vector<Tensor>& weights,
                      const std::vector<Tensor>& biases, const Tensor& input) {
    autograd::Tape tape;
    std::vector<autograd::NodeId> wn, bn;
    wn.reserve(weights.size());
    bn.reserve(biases.size());
    for (size_t i = 0; i < weights.size(); ++i) {
        wn.push_back(tape.leaf(weights[i], false, plan.params[i].name + ".weight"));
        bn.push_back(tape.leaf(biases[i], false, plan.params[i].name + ".bias"));
    }
    const autograd::NodeId x = tape.leaf(input, false, "input");
    return tape.value(forward_net(plan, tape, x, wn, bn));
}

void init_params(const NetPlan& plan, uint64_t master_seed, std::vector<Tensor>& weights,
                 std::vector<Tensor>& biases) {
    weights.clear();
    biases.clear();
    for (size_t i = 0; i < plan.params.size(); ++i) {
        const ParamLayer& p = plan.params[i];
        Tensor w(p.weight_shape);
        int64_t fan_in = 1;
        for (size_t d = 1; d < p.weight_shape.size(); ++d) fan_in *= p.weight_shape[d];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        rng::Stream stream(master_seed, rng::Purpose::WeightInit, static_cast<uint64_t>(i));
        for (int64_t j = 0; j < w.numel(); ++j) {
            w[j] = static_cast<float>(stream.uniform(-bound, bound));
        }
        weights.push_back(std::move(w));
        biases.push_back(Tensor(p.bias_shape));
    }
}

}  // namespace was::model
