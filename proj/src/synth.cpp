#include "was/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "was/errors.hpp"
#include "was/rng.hpp"

namespace was::synth {

namespace {

// One 3x32x32 uint8 image for the given class, plane order R,G,B.
void render(int cls, rng::Stream& stream, unsigned char* out) {
    const double phi = 2.0 * M_PI * static_cast<double>(cls) / 10.0;
    const double freq = 2.0 + static_cast<double>(cls % 5);
    const double amp = 50.0 * stream.uniform(0.7, 1.3);
    const double phase = stream.uniform(0.0, 2.0 * M_PI);
    const double jx = stream.uniform(-3.0, 3.0);
    const double jy = stream.uniform(-3.0, 3.0);
    const double blob_r = 8.0 + 16.0 * ((cls * 7) % 10) / 10.0 + jy;
    const double blob_c = 8.0 + 16.0 * ((cls * 3) % 10) / 10.0 + jx;
    // class tint, rotating through color space
    const double tint[3] = {0.6 + 0.4 * std::cos(phi), 0.6 + 0.4 * std::cos(phi + 2.1),
                            0.6 + 0.4 * std::cos(phi + 4.2)};
    const double gx = std::cos(phi), gy = std::sin(phi);

    for (int ch = 0; ch < 3; ++ch) {
        for (int r = 0; r < 32; ++r) {
            for (int c = 0; c < 32; ++c) {
                const double u = (c + jx) / 32.0, v = (r + jy) / 32.0;
                const double grating = std::sin(2.0 * M_PI * freq * (gx * u + gy * v) + phase);
                const double dr = r - blob_r, dc = c - blob_c;
                const double blob = 90.0 * std::exp(-(dr * dr + dc * dc) / 40.0);
                const double noise = stream.uniform(-20.0, 20.0);
                double val = 128.0 + tint[ch] * (amp * grating + blob) + noise;
                if (val < 0.0) val = 0.0;
                if (val > 255.0) val = 255.0;
                out[(ch * 32 + r) * 32 + c] = static_cast<unsigned char>(val);
            }
        }
    }
}

void write_split(const std::string& dir, const std::string& stem, int files, int64_t per_class,
                 uint64_t seed, uint64_t split_tag) {
    const int64_t total = per_class * 10;
    const int64_t per_file = (total + files - 1) / files;
    int64_t written = 0;
    for (int f = 0; f < files; ++f) {
        const std::string name =
            files == 1 ? stem + ".bin" : stem + "_" + std::to_string(f + 1) + ".bin";
        std::ofstream out(std::filesystem::path(dir) / name, std::ios::binary | std::ios::trunc);
        if (!out) throw DataFormatError("synth: cannot write '" + name + "' under '" + dir + "'");
        std::vector<unsigned char> record(3073);
        for (int64_t i = 0; i < per_file && written < total; ++i, ++written) {
            const int cls = static_cast<int>(written % 10);
            rng::Stream stream(seed, rng::Purpose::Synth, split_tag,
                               static_cast<uint64_t>(written));
            record[0] = static_cast<unsigned char>(cls);
            render(cls, stream, record.data() + 1);
            out.write(reinterpret_cast<const char*>(record.data()),
                      static_cast<std::streamsize>(record.size()));
        }
    }
}

}  // namespace

void write_synthetic_cifar10(const std::string& dir, int64_t train_per_class,
                             int64_t test_per_class, uint64_t seed) {
    std::filesystem::create_directories(dir);
    write_split(dir, "data_batch", 5, train_per_class, seed, 0);
    write_split(dir, "test_batch", 1, test_per_class, seed, 1);
}

}  // namespace was::synth
