#include "was/checkpoint.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "was/errors.hpp"

namespace was::checkpoint {

namespace {

constexpr char kMagic[4] = {'W', 'A', 'S', 'W'};

void put_u32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

uint32_t get_u32(const std::string& buf, size_t off) {
    return static_cast<uint32_t>(static_cast<unsigned char>(buf[off])) |
           static_cast<uint32_t>(static_cast<unsigned char>(buf[off + 1])) << 8 |
           static_cast<uint32_t>(static_cast<unsigned char>(buf[off + 2])) << 16 |
           static_cast<uint32_t>(static_cast<unsigned char>(buf[off + 3])) << 24;
}

// float32 little-endian, independent of host byte order
void put_f32(std::string& out, float f) {
    uint32_t v = 0;
    std::memcpy(&v, &f, 4);
    put_u32(out, v);
}

float get_f32(const std::string& buf, size_t off) {
    const uint32_t v = get_u32(buf, off);
    float f = 0.0f;
    std::memcpy(&f, &v, 4);
    return f;
}

int64_t parse_i64(const std::string& s, const std::string& field) {
    int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw DataFormatError("checkpoint header field '" + field + "': bad integer '" + s + "'");
    }
    return v;
}

uint64_t parse_u64(const std::string& s, const std::string& field) {
    uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw DataFormatError("checkpoint header field '" + field + "': bad integer '" + s + "'");
    }
    return v;
}

}  // namespace

const Checkpoint::Entry* Checkpoint::find(const std::string& name) const {
    for (const Entry& e : tensors) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

model::NetPlan Checkpoint::plan() const {
    const model::ArchitectureDef arch = arch_id == "custom"
                                            ? model::ArchitectureDef::custom(arch_lines)
                                            : model::ArchitectureDef::named(arch_id, num_classes);
    return model::make_plan(arch, in_c, in_h, in_w, num_classes);
}

void save(const Checkpoint& ckpt, const std::string& path) {
    std::ostringstream header;
    header << "arch = " << ckpt.arch_id << "\n";
    const model::ArchitectureDef arch =
        ckpt.arch_id == "custom" ? model::ArchitectureDef::custom(ckpt.arch_lines)
                                 : model::ArchitectureDef::named(ckpt.arch_id, ckpt.num_classes);
    const std::vector<std::string> lines =
        ckpt.arch_lines.empty() ? arch.serialize() : ckpt.arch_lines;
    for (size_t i = 0; i < lines.size(); ++i) {
        header << "arch.layer." << i << " = " << lines[i] << "\n";
    }
    header << "input = " << ckpt.in_c << "," << ckpt.in_h << "," << ckpt.in_w << "\n";
    header << "num_classes = " << ckpt.num_classes << "\n";
    header << "master_seed = " << ckpt.master_seed << "\n";
    header << "dom_seed = " << ckpt.dom_seed << "\n";
    header << "step_count = " << ckpt.step_count << "\n";
    for (size_t i = 0; i < ckpt.layer_specs.size(); ++i) {
        header << "spec." << i << " = " << ckpt.layer_specs[i] << "\n";
    }
    header << "tensor_count = " << ckpt.tensors.size() << "\n";
    for (size_t i = 0; i < ckpt.tensors.size(); ++i) {
        const auto& e = ckpt.tensors[i];
        header << "tensor." << i << " = " << e.name << " ";
        const auto& shape = e.data.shape();
        for (size_t d = 0; d < shape.size(); ++d) header << (d ? "," : "") << shape[d];
        header << "\n";
    }
    const std::string head = header.str();

    std::string out;
    out.append(kMagic, 4);
    put_u32(out, ckpt.version);
    put_u32(out, static_cast<uint32_t>(head.size()));
    out += head;
    for (const auto& e : ckpt.tensors) {
        for (int64_t i = 0; i < e.data.numel(); ++i) put_f32(out, e.data[i]);
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataFormatError("checkpoint: cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataFormatError("checkpoint: short write to '" + path + "'");
}

Checkpoint load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataFormatError("checkpoint: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string buf = ss.str();

    if (buf.size() < 12 || std::memcmp(buf.data(), kMagic, 4) != 0) {
        throw DataFormatError("checkpoint '" + path + "': bad magic (field 'magic')");
    }
    Checkpoint ckpt;
    ckpt.version = get_u32(buf, 4);
    if (ckpt.version != 1) {
        throw DataFormatError("checkpoint '" + path + "': unsupported version " +
                              std::to_string(ckpt.version) + " (field 'version')");
    }
    const uint32_t head_len = get_u32(buf, 8);
    if (12 + static_cast<size_t>(head_len) > buf.size()) {
        throw DataFormatError("checkpoint '" + path + "': header length " +
                              std::to_string(head_len) + " exceeds file (field 'header_len')");
    }
    const std::string head = buf.substr(12, head_len);

    std::vector<std::pair<std::string, std::string>> kv;
    std::istringstream hs(head);
    std::string line;
    while (std::getline(hs, line)) {
        if (line.empty()) continue;
        const size_t eq = line.find(" = ");
        if (eq == std::string::npos) {
            throw DataFormatError("checkpoint header line without '=': '" + line + "'");
        }
        kv.emplace_back(line.substr(0, eq), line.substr(eq + 3));
    }
    auto get = [&](const std::string& key, bool required) -> std::string {
        for (const auto& [k, v] : kv) {
            if (k == key) return v;
        }
        if (required) throw DataFormatError("checkpoint header missing field '" + key + "'");
        return "";
    };

    ckpt.arch_id = get("arch", true);
    for (size_t i = 0;; ++i) {
        const std::string v = get("arch.layer." + std::to_string(i), false);
        if (v.empty()) break;
        ckpt.arch_lines.push_back(v);
    }
    {
        const std::string in = get("input", true);
        const size_t c1 = in.find(',');
        const size_t c2 = in.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) {
            throw DataFormatError("checkpoint header field 'input': expected c,h,w, got '" + in +
                                  "'");
        }
        ckpt.in_c = parse_i64(in.substr(0, c1), "input");
        ckpt.in_h = parse_i64(in.substr(c1 + 1, c2 - c1 - 1), "input");
        ckpt.in_w = parse_i64(in.substr(c2 + 1), "input");
    }
    ckpt.num_classes = parse_i64(get("num_classes", true), "num_classes");
    ckpt.master_seed = parse_u64(get("master_seed", true), "master_seed");
    ckpt.dom_seed = parse_u64(get("dom_seed", true), "dom_seed");
    ckpt.step_count = parse_i64(get("step_count", true), "step_count");
    for (size_t i = 0;; ++i) {
        bool found = false;
        for (const auto& [k, v] : kv) {
            if (k == "spec." + std::to_string(i)) {
                ckpt.layer_specs.push_back(v);
                found = true;
                break;
            }
        }
        if (!found) break;
    }

    const int64_t tensor_count = parse_i64(get("tensor_count", true), "tensor_count");
    size_t off = 12 + head_len;
    for (int64_t i = 0; i < tensor_count; ++i) {
        const std::string field = "tensor." + std::to_string(i);
        const std::string v = get(field, true);
        const size_t sp = v.rfind(' ');
        if (sp == std::string::npos) {
            throw DataFormatError("checkpoint header field '" + field + "': expected name shape");
        }
        Checkpoint::Entry e;
        e.name = v.substr(0, sp);
        std::vector<int64_t> shape;
        {
            const std::string s = v.substr(sp + 1);
            size_t pos = 0;
            while (pos != std::string::npos) {
                const size_t next = s.find(',', pos);
                shape.push_back(parse_i64(
                    s.substr(pos, next == std::string::npos ? next : next - pos), field));
                pos = next == std::string::npos ? next : next + 1;
            }
        }
        const int64_t numel = Tensor::numel_of(shape);
        if (off + static_cast<size_t>(numel) * 4 > buf.size()) {
            throw DataFormatError("checkpoint '" + path + "': data truncated at byte " +
                                  std::to_string(off) + " (field '" + field + "')");
        }
        std::vector<float> data(static_cast<size_t>(numel));
        for (int64_t j = 0; j < numel; ++j) {
            data[static_cast<size_t>(j)] = get_f32(buf, off);
            off += 4;
        }
        e.data = Tensor::from(shape, std::move(data));
        ckpt.tensors.push_back(std::move(e));
    }
    if (off != buf.size()) {
        throw DataFormatError("checkpoint '" + path + "': " + std::to_string(buf.size() - off) +
                              " trailing bytes at offset " + std::to_string(off));
    }
    return ckpt;
}

}  // namespace was::checkpoint
