#include "was/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "was/errors.hpp"
#include "was/rng.hpp"

namespace was::data {

namespace {

namespace fs = std::filesystem;

std::string find_file(const std::string& dir, const std::vector<std::string>& candidates) {
    for (const std::string& name : candidates) {
        const fs::path p = fs::path(dir) / name;
        if (fs::exists(p)) return p.string();
    }
    // common nested layout, e.g. cifar-10-batches-bin/
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_directory()) continue;
        for (const std::string& name : candidates) {
            const fs::path p = entry.path() / name;
            if (fs::exists(p)) return p.string();
        }
    }
    throw DataFormatError("dataset file '" + candidates[0] + "' not found under '" + dir + "'");
}

std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataFormatError("cannot open '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

// Raw uint8 images in [N, C, H, W] order plus labels.
struct RawSplit {
    std::vector<unsigned char> pixels;
    std::vector<int> labels;
    int64_t n = 0, c = 0, h = 0, w = 0;
};

void read_cifar_file(const std::string& path, int label_bytes, int64_t num_classes,
                     RawSplit& out) {
    const std::vector<unsigned char> bytes = read_bytes(path);
    const size_t record = static_cast<size_t>(label_bytes) + 3072;
    if (bytes.size() % record != 0) {
        throw DataFormatError("'" + path + "': size " + std::to_string(bytes.size()) +
                              " is not a multiple of record size " + std::to_string(record) +
                              "; trailing data at byte offset " +
                              std::to_string(bytes.size() - bytes.size() % record));
    }
    const size_t n = bytes.size() / record;
    for (size_t i = 0; i < n; ++i) {
        const size_t off = i * record;
        // CIFAR-100 carries (coarse, fine); the fine label is used.
        const int label = bytes[off + static_cast<size_t>(label_bytes) - 1];
        if (label < 0 || label >= num_classes) {
            throw DataFormatError("'" + path + "': label " + std::to_string(label) +
                                  " out of range at byte offset " + std::to_string(off));
        }
        out.labels.push_back(label);
        const size_t px = off + static_cast<size_t>(label_bytes);
        out.pixels.insert(out.pixels.end(), bytes.begin() + static_cast<std::ptrdiff_t>(px),
                          bytes.begin() + static_cast<std::ptrdiff_t>(px + 3072));
    }
    out.n += static_cast<int64_t>(n);
    out.c = 3;
    out.h = 32;
    out.w = 32;
}

uint32_t be32(const std::vector<unsigned char>& b, size_t off) {
    return static_cast<uint32_t>(b[off]) << 24 | static_cast<uint32_t>(b[off + 1]) << 16 |
           static_cast<uint32_t>(b[off + 2]) << 8 | static_cast<uint32_t>(b[off + 3]);
}

RawSplit read_mnist_split(const std::string& images_path, const std::string& labels_path) {
    RawSplit out;
    const auto img = read_bytes(images_path);
    if (img.size() < 16 || be32(img, 0) != 2051) {
        throw DataFormatError("'" + images_path + "': expected IDX image magic 2051 at byte 0, got " +
                              std::to_string(img.size() < 4 ? 0 : be32(img, 0)));
    }
    const uint32_t n = be32(img, 4);
    const uint32_t rows = be32(img, 8);
    const uint32_t cols = be32(img, 12);
    if (img.size() != 16 + static_cast<size_t>(n) * rows * cols) {
        throw DataFormatError("'" + images_path + "': expected " +
                              std::to_string(16 + static_cast<size_t>(n) * rows * cols) +
                              " bytes, got " + std::to_string(img.size()));
    }
    const auto lab = read_bytes(labels_path);
    if (lab.size() < 8 || be32(lab, 0) != 2049) {
        throw DataFormatError("'" + labels_path + "': expected IDX label magic 2049 at byte 0, got " +
                              std::to_string(lab.size() < 4 ? 0 : be32(lab, 0)));
    }
    if (be32(lab, 4) != n || lab.size() != 8 + static_cast<size_t>(n)) {
        throw DataFormatError("'" + labels_path + "': label count does not match " +
                              std::to_string(n) + " images");
    }
    out.pixels.assign(img.begin() + 16, img.end());
    out.labels.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        const int label = lab[8 + i];
        if (label < 0 || label > 9) {
            throw DataFormatError("'" + labels_path + "': label " + std::to_string(label) +
                                  " out of range at byte offset " + std::to_string(8 + i));
        }
        out.labels.push_back(label);
    }
    out.n = n;
    out.c = 1;
    out.h = rows;
    out.w = cols;
    return out;
}

// Train-split statistics; applied to both splits.
DatasetPair normalize(const RawSplit& train, const RawSplit& test, int64_t num_classes) {
    const int64_t c = train.c, plane = train.h * train.w;
    std::vector<double> mean(static_cast<size_t>(c), 0.0), var(static_cast<size_t>(c), 0.0);
    for (int64_t i = 0; i < train.n; ++i) {
        for (int64_t ch = 0; ch < c; ++ch) {
            const unsigned char* p = train.pixels.data() + (i * c + ch) * plane;
            for (int64_t j = 0; j < plane; ++j) mean[static_cast<size_t>(ch)] += p[j];
        }
    }
    const double count = static_cast<double>(train.n * plane);
    for (int64_t ch = 0; ch < c; ++ch) mean[static_cast<size_t>(ch)] /= count;
    for (int64_t i = 0; i < train.n; ++i) {
        for (int64_t ch = 0; ch < c; ++ch) {
            const unsigned char* p = train.pixels.data() + (i * c + ch) * plane;
            for (int64_t j = 0; j < plane; ++j) {
                const double d = p[j] - mean[static_cast<size_t>(ch)];
                var[static_cast<size_t>(ch)] += d * d;
            }
        }
    }
    std::vector<float> fmean(static_cast<size_t>(c)), fstd(static_cast<size_t>(c));
    for (int64_t ch = 0; ch < c; ++ch) {
        const double sd = std::sqrt(var[static_cast<size_t>(ch)] / count);
        fmean[static_cast<size_t>(ch)] = static_cast<float>(mean[static_cast<size_t>(ch)]);
        fstd[static_cast<size_t>(ch)] = sd > 0.0 ? static_cast<float>(sd) : 1.0f;
    }

    auto build = [&](const RawSplit& raw, const std::string& split) {
        Dataset ds;
        ds.split = split;
        ds.num_classes = num_classes;
        ds.labels = raw.labels;
        ds.channel_mean = fmean;
        ds.channel_std = fstd;
        ds.images = Tensor({raw.n, raw.c, raw.h, raw.w});
        float* out = ds.images.data();
        const int64_t pl = raw.h * raw.w;
        for (int64_t i = 0; i < raw.n; ++i) {
            for (int64_t ch = 0; ch < raw.c; ++ch) {
                const unsigned char* p = raw.pixels.data() + (i * raw.c + ch) * pl;
                float* q = out + (i * raw.c + ch) * pl;
                const float m = fmean[static_cast<size_t>(ch)];
                const float s = fstd[static_cast<size_t>(ch)];
                for (int64_t j = 0; j < pl; ++j) {
                    q[j] = (static_cast<float>(p[j]) - m) / s;
                }
            }
        }
        return ds;
    };
    return {build(train, "train"), build(test, "test")};
}

void bilinear_sample(const float* plane, int64_t h, int64_t w, double sr, double sc, float& out) {
    const double fr0 = std::floor(sr);
    const double fc0 = std::floor(sc);
    const int64_t r0 = static_cast<int64_t>(fr0);
    const int64_t c0 = static_cast<int64_t>(fc0);
    const double ar = sr - fr0;
    const double ac = sc - fc0;
    double acc = 0.0;
    auto tap = [&](int64_t rr, int64_t cc, double wt) {
        if (wt == 0.0 || rr < 0 || rr >= h || cc < 0 || cc >= w) return;
        acc += wt * static_cast<double>(plane[rr * w + cc]);
    };
    tap(r0, c0, (1.0 - ar) * (1.0 - ac));
    tap(r0, c0 + 1, (1.0 - ar) * ac);
    tap(r0 + 1, c0, ar * (1.0 - ac));
    tap(r0 + 1, c0 + 1, ar * ac);
    out = static_cast<float>(acc);
}

}  // namespace

DatasetPair read_cifar10(const std::string& dir) {
    RawSplit train, test;
    for (int b = 1; b <= 5; ++b) {
        read_cifar_file(find_file(dir, {"data_batch_" + std::to_string(b) + ".bin"}), 1, 10, train);
    }
    read_cifar_file(find_file(dir, {"test_batch.bin"}), 1, 10, test);
    return normalize(train, test, 10);
}

DatasetPair read_cifar100(const std::string& dir) {
    RawSplit train, test;
    read_cifar_file(find_file(dir, {"train.bin"}), 2, 100, train);
    read_cifar_file(find_file(dir, {"test.bin"}), 2, 100, test);
    return normalize(train, test, 100);
}

DatasetPair read_mnist(const std::string& dir) {
    RawSplit train = read_mnist_split(
        find_file(dir, {"train-images-idx3-ubyte", "train-images.idx3-ubyte"}),
        find_file(dir, {"train-labels-idx1-ubyte", "train-labels.idx1-ubyte"}));
    RawSplit test = read_mnist_split(
        find_file(dir, {"t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"}),
        find_file(dir, {"t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"}));
    return normalize(train, test, 10);
}

DatasetPair read_dataset(const std::string& id, const std::string& dir) {
    if (id == "cifar10") return read_cifar10(dir);
    if (id == "cifar100") return read_cifar100(dir);
    if (id == "mnist") return read_mnist(dir);
    throw ConfigError("unknown dataset id '" + id + "' (use cifar10, cifar100, mnist)");
}

void DataPerturbSpec::validate() const {
    auto bad = [](const std::string& field, const std::string& why) {
        throw ConfigError("perturb spec field '" + field + "': " + why);
    };
    switch (kind) {
        case Kind::Rotate:
            if (lo > hi) bad("rotate.lo", "must be <= rotate.hi");
            break;
        case Kind::Translate:
            if (fy < 0.0 || fy > 1.0) bad("translate.fy", "must be in [0, 1]");
            if (fx < 0.0 || fx > 1.0) bad("translate.fx", "must be in [0, 1]");
            break;
        case Kind::Crop:
            if (!(lo > 0.0)) bad("crop.lo", "must be > 0");
            if (lo > hi) bad("crop.lo", "must be <= crop.hi");
            if (hi > 1.0) bad("crop.hi", "must be <= 1");
            break;
    }
}

std::string DataPerturbSpec::to_string() const {
    char buf[64];
    auto fmt = [&buf](double v) {
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
        (void)ec;
        return std::string(buf, p);
    };
    switch (kind) {
        case Kind::Rotate:
            return "rotate:" + fmt(lo) + "," + fmt(hi);
        case Kind::Translate:
            return "translate:" + fmt(fy) + "," + fmt(fx);
        case Kind::Crop:
            return "crop:" + fmt(lo) + "," + fmt(hi);
    }
    return "";
}

DataPerturbSpec DataPerturbSpec::parse(const std::string& text) {
    const size_t colon = text.find(':');
    if (colon == std::string::npos) {
        throw ConfigError("perturb spec '" + text + "': expected kind:lo,hi");
    }
    const std::string name = text.substr(0, colon);
    const std::string rest = text.substr(colon + 1);
    const size_t comma = rest.find(',');
    if (comma == std::string::npos) {
        throw ConfigError("perturb spec '" + text + "': expected two parameters");
    }
    auto num = [&](const std::string& s) {
        double v = 0.0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) {
            throw ConfigError("perturb spec '" + text + "': cannot parse number '" + s + "'");
        }
        return v;
    };
    const double a = num(rest.substr(0, comma));
    const double b = num(rest.substr(comma + 1));
    DataPerturbSpec spec;
    if (name == "rotate") {
        spec.kind = Kind::Rotate;
        spec.lo = a;
        spec.hi = b;
    } else if (name == "translate") {
        spec.kind = Kind::Translate;
        spec.fy = a;
        spec.fx = b;
    } else if (name == "crop") {
        spec.kind = Kind::Crop;
        spec.lo = a;
        spec.hi = b;
    } else {
        throw ConfigError("perturb spec: unknown kind '" + name + "'");
    }
    spec.validate();
    return spec;
}

void rotate_image(const float* in, float* out, int64_t c, int64_t h, int64_t w, double angle_deg) {
    const double rad = angle_deg * (M_PI / 180.0);
    const double cs = std::cos(rad);
    const double sn = std::sin(rad);
    const double mr = static_cast<double>(h - 1) / 2.0;
    const double mc = static_cast<double>(w - 1) / 2.0;
    for (int64_t ch = 0; ch < c; ++ch) {
        const float* src = in + ch * h * w;
        float* dst = out + ch * h * w;
        for (int64_t r = 0; r < h; ++r) {
            for (int64_t cc = 0; cc < w; ++cc) {
                const double yr = static_cast<double>(r) - mr;
                const double xc = static_cast<double>(cc) - mc;
                bilinear_sample(src, h, w, mr + yr * cs + xc * sn, mc - yr * sn + xc * cs,
                                dst[r * w + cc]);
            }
        }
    }
}

void translate_image(const float* in, float* out, int64_t c, int64_t h, int64_t w, int64_t dr,
                     int64_t dc) {
    for (int64_t ch = 0; ch < c; ++ch) {
        const float* src = in + ch * h * w;
        float* dst = out + ch * h * w;
        for (int64_t r = 0; r < h; ++r) {
            for (int64_t cc = 0; cc < w; ++cc) {
                const int64_t sr = r - dr;
                const int64_t sc = cc - dc;
                dst[r * w + cc] =
                    (sr >= 0 && sr < h && sc >= 0 && sc < w) ? src[sr * w + sc] : 0.0f;
            }
        }
    }
}

void crop_resize_image(const float* in, float* out, int64_t c, int64_t h, int64_t w, int64_t r0,
                       int64_t c0, int64_t rows, int64_t cols) {
    // align-corners mapping so the full window resizes to the identity
    const double ry = h > 1 ? static_cast<double>(rows - 1) / static_cast<double>(h - 1) : 0.0;
    const double rx = w > 1 ? static_cast<double>(cols - 1) / static_cast<double>(w - 1) : 0.0;
    for (int64_t ch = 0; ch < c; ++ch) {
        const float* src = in + ch * h * w;
        float* dst = out + ch * h * w;
        for (int64_t r = 0; r < h; ++r) {
            for (int64_t cc = 0; cc < w; ++cc) {
                const double sr = static_cast<double>(r0) + static_cast<double>(r) * ry;
                const double sc = static_cast<double>(c0) + static_cast<double>(cc) * rx;
                bilinear_sample(src, h, w, sr, sc, dst[r * w + cc]);
            }
        }
    }
}

Dataset perturb_testset(const Dataset& ds, const DataPerturbSpec& spec, uint64_t seed) {
    spec.validate();
    Dataset out = ds;
    const int64_t n = ds.size();
    const int64_t c = ds.images.dim(1);
    const int64_t h = ds.images.dim(2);
    const int64_t w = ds.images.dim(3);
    const int64_t img = c * h * w;
    for (int64_t i = 0; i < n; ++i) {
        rng::Stream stream(seed, rng::Purpose::DataPerturb, static_cast<uint64_t>(i));
        const float* src = ds.images.data() + i * img;
        float* dst = out.images.data() + i * img;
        switch (spec.kind) {
            case DataPerturbSpec::Kind::Rotate:
                rotate_image(src, dst, c, h, w, stream.uniform(spec.lo, spec.hi));
                break;
            case DataPerturbSpec::Kind::Translate: {
                const int64_t mr = std::lround(spec.fy * static_cast<double>(h));
                const int64_t mc = std::lround(spec.fx * static_cast<double>(w));
                translate_image(src, dst, c, h, w, stream.uniform_int(-mr, mr),
                                stream.uniform_int(-mc, mc));
                break;
            }
            case DataPerturbSpec::Kind::Crop: {
                const double side = std::sqrt(stream.uniform(spec.lo, spec.hi));
                const int64_t rows = std::clamp<int64_t>(
                    std::lround(side * static_cast<double>(h)), 1, h);
                const int64_t cols = std::clamp<int64_t>(
                    std::lround(side * static_cast<double>(w)), 1, w);
                const int64_t r0 = stream.uniform_int(0, h - rows);
                const int64_t c0 = stream.uniform_int(0, w - cols);
                crop_resize_image(src, dst, c, h, w, r0, c0, rows, cols);
                break;
            }
        }
    }
    return out;
}

Dataset subset(const Dataset& ds, int64_t n, uint64_t seed) {
    const int64_t total = ds.size();
    if (n > total) {
        throw UsageError("subset size " + std::to_string(n) + " exceeds dataset size " +
                         std::to_string(total));
    }
    std::vector<std::vector<int64_t>> by_class(static_cast<size_t>(ds.num_classes));
    for (int64_t i = 0; i < total; ++i) {
        by_class[static_cast<size_t>(ds.labels[static_cast<size_t>(i)])].push_back(i);
    }
    // proportional allocation, largest remainder, deterministic tie-break
    std::vector<int64_t> take(static_cast<size_t>(ds.num_classes), 0);
    std::vector<std::pair<double, int64_t>> rema;
    int64_t assigned = 0;
    for (int64_t k = 0; k < ds.num_classes; ++k) {
        const double exact = static_cast<double>(n) *
                             static_cast<double>(by_class[static_cast<size_t>(k)].size()) /
                             static_cast<double>(total);
        take[static_cast<size_t>(k)] = static_cast<int64_t>(std::floor(exact));
        take[static_cast<size_t>(k)] = std::min<int64_t>(
            take[static_cast<size_t>(k)],
            static_cast<int64_t>(by_class[static_cast<size_t>(k)].size()));
        assigned += take[static_cast<size_t>(k)];
        rema.emplace_back(exact - std::floor(exact), k);
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (const auto& [frac, k] : rema) {
        if (assigned >= n) break;
        if (take[static_cast<size_t>(k)] <
            static_cast<int64_t>(by_class[static_cast<size_t>(k)].size())) {
            ++take[static_cast<size_t>(k)];
            ++assigned;
        }
    }
    // fill any leftover (classes exhausted above) from classes with room
    for (int64_t k = 0; assigned < n && k < ds.num_classes; ++k) {
        auto& avail = by_class[static_cast<size_t>(k)];
        while (assigned < n &&
               take[static_cast<size_t>(k)] < static_cast<int64_t>(avail.size())) {
            ++take[static_cast<size_t>(k)];
            ++assigned;
        }
    }

    std::vector<int64_t> chosen;
    chosen.reserve(static_cast<size_t>(n));
    for (int64_t k = 0; k < ds.num_classes; ++k) {
        auto& idx = by_class[static_cast<size_t>(k)];
        rng::Stream stream(seed, rng::Purpose::Subset, static_cast<uint64_t>(k));
        stream.shuffle(idx);
        for (int64_t j = 0; j < take[static_cast<size_t>(k)]; ++j) {
            chosen.push_back(idx[static_cast<size_t>(j)]);
        }
    }
    std::sort(chosen.begin(), chosen.end());

    Dataset out;
    out.split = ds.split;
    out.num_classes = ds.num_classes;
    out.channel_mean = ds.channel_mean;
    out.channel_std = ds.channel_std;
    out.images = gather_batch(ds, chosen);
    out.labels = gather_labels(ds, chosen);
    return out;
}

Tensor gather_batch(const Dataset& ds, const std::vector<int64_t>& indices) {
    const int64_t c = ds.images.dim(1), h = ds.images.dim(2), w = ds.images.dim(3);
    const int64_t img = c * h * w;
    Tensor out({static_cast<int64_t>(indices.size()), c, h, w});
    for (size_t i = 0; i < indices.size(); ++i) {
        const float* src = ds.images.data() + indices[i] * img;
        std::copy(src, src + img, out.data() + static_cast<int64_t>(i) * img);
    }
    return out;
}

std::vector<int> gather_labels(const Dataset& ds, const std::vector<int64_t>& indices) {
    std::vector<int> out;
    out.reserve(indices.size());
    for (int64_t i : indices) out.push_back(ds.labels[static_cast<size_t>(i)]);
    return out;
}

}  // namespace was::data
