#include "advgrad/data.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "advgrad/rng.h"

namespace advgrad {

namespace {

uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw DataError(path + ": truncated header (expected 4 more bytes)");
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

std::string hex32(uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "0x%08x", v);
    return buf;
}

std::ifstream open_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open");
    return in;
}

int64_t file_size(const std::string& path) {
    std::error_code ec;
    const auto sz = std::filesystem::file_size(path, ec);
    if (ec) throw DataError(path + ": cannot stat");
    return static_cast<int64_t>(sz);
}

constexpr uint32_t kIdxImagesMagic = 0x00000803;
constexpr uint32_t kIdxLabelsMagic = 0x00000801;
constexpr int64_t kCifarRecord = 3073;

}  // namespace

Dataset Dataset::slice(int64_t start, int64_t count) const {
    std::vector<int64_t> rows(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) rows[static_cast<size_t>(i)] = start + i;
    return gather(rows);
}

Dataset Dataset::gather(const std::vector<int64_t>& rows) const {
    const int64_t per = images.size() / std::max<int64_t>(size(), 1);
    Dataset out;
    out.images = Tensor::uninit({static_cast<int>(rows.size()), channels(), height(), width()});
    out.labels.resize(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        const int64_t r = rows[i];
        if (r < 0 || r >= size()) throw DataError("gather: row out of range");
        std::copy(images.data() + r * per, images.data() + (r + 1) * per,
                  out.images.data() + static_cast<int64_t>(i) * per);
        out.labels[i] = labels[static_cast<size_t>(r)];
    }
    out.classes = classes;
    out.normalization = normalization;
    out.name = name;
    return out;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    auto img = open_binary(images_path);
    const uint32_t img_magic = read_be32(img, images_path);
    if (img_magic != kIdxImagesMagic)
        throw DataError(images_path + ": bad magic " + hex32(img_magic) + ", expected " +
                        hex32(kIdxImagesMagic));
    const int64_t n = read_be32(img, images_path);
    const int64_t rows = read_be32(img, images_path);
    const int64_t cols = read_be32(img, images_path);
    const int64_t expect = 16 + n * rows * cols;
    const int64_t actual = file_size(images_path);
    if (actual != expect)
        throw DataError(images_path + ": expected " + std::to_string(expect) + " bytes, got " +
                        std::to_string(actual));

    auto lab = open_binary(labels_path);
    const uint32_t lab_magic = read_be32(lab, labels_path);
    if (lab_magic != kIdxLabelsMagic)
        throw DataError(labels_path + ": bad magic " + hex32(lab_magic) + ", expected " +
                        hex32(kIdxLabelsMagic));
    const int64_t n_labels = read_be32(lab, labels_path);
    if (n_labels != n)
        throw DataError(labels_path + ": " + std::to_string(n_labels) + " labels for " +
                        std::to_string(n) + " images");
    const int64_t lab_expect = 8 + n_labels;
    const int64_t lab_actual = file_size(labels_path);
    if (lab_actual != lab_expect)
        throw DataError(labels_path + ": expected " + std::to_string(lab_expect) + " bytes, got " +
                        std::to_string(lab_actual));

    Dataset out;
    out.images = Tensor::uninit({static_cast<int>(n), 1, static_cast<int>(rows),
                                 static_cast<int>(cols)});
    std::vector<unsigned char> buf(static_cast<size_t>(rows * cols));
    for (int64_t i = 0; i < n; ++i) {
        img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!img) throw DataError(images_path + ": truncated payload");
        float* dst = out.images.data() + i * rows * cols;
        for (size_t p = 0; p < buf.size(); ++p) dst[p] = static_cast<float>(buf[p]);
    }
    out.labels.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        unsigned char b;
        if (!lab.read(reinterpret_cast<char*>(&b), 1))
            throw DataError(labels_path + ": truncated payload");
        if (b > 9)
            throw DataError(labels_path + ": label " + std::to_string(int(b)) + " at index " +
                            std::to_string(i) + " out of range [0,10)");
        out.labels[static_cast<size_t>(i)] = b;
    }
    out.classes = 10;
    return out;
}

Dataset load_cifar10_file(const std::string& path) {
    const int64_t bytes = file_size(path);
    if (bytes == 0 || bytes % kCifarRecord)
        throw DataError(path + ": size " + std::to_string(bytes) + " is not a multiple of " +
                        std::to_string(kCifarRecord) + "-byte records");
    const int64_t n = bytes / kCifarRecord;
    auto in = open_binary(path);

    Dataset out;
    out.images = Tensor::uninit({static_cast<int>(n), 3, 32, 32});
    out.labels.resize(static_cast<size_t>(n));
    std::vector<unsigned char> rec(static_cast<size_t>(kCifarRecord));
    for (int64_t i = 0; i < n; ++i) {
        if (!in.read(reinterpret_cast<char*>(rec.data()), kCifarRecord))
            throw DataError(path + ": truncated record " + std::to_string(i));
        if (rec[0] > 9)
            throw DataError(path + ": label " + std::to_string(int(rec[0])) + " out of range");
        out.labels[static_cast<size_t>(i)] = rec[0];
        float* dst = out.images.data() + i * 3 * 1024;
        for (int p = 0; p < 3072; ++p) dst[p] = static_cast<float>(rec[1 + p]);
    }
    out.classes = 10;
    return out;
}

Dataset load_cifar10_bin(const std::string& dir, Split split) {
    namespace fs = std::filesystem;
    std::vector<std::string> files;
    if (split == Split::Train) {
        for (int i = 1; i <= 5; ++i) files.push_back("data_batch_" + std::to_string(i) + ".bin");
    } else {
        files.push_back("test_batch.bin");
    }
    std::string missing;
    for (const auto& f : files)
        if (!fs::exists(fs::path(dir) / f)) missing += (missing.empty() ? "" : ", ") + f;
    if (!missing.empty()) throw DataError(dir + ": missing CIFAR-10 files: " + missing);

    Dataset out;
    for (const auto& f : files) {
        const std::string path = (fs::path(dir) / f).string();
        if (file_size(path) != 10000 * kCifarRecord)
            throw DataError(path + ": expected " + std::to_string(10000 * kCifarRecord) +
                            " bytes (10000 records), got " + std::to_string(file_size(path)));
        Dataset part = load_cifar10_file(path);
        if (out.labels.empty()) {
            out = std::move(part);
        } else {
            const int64_t old_n = out.size(), add = part.size();
            Tensor merged = Tensor::uninit({static_cast<int>(old_n + add), 3, 32, 32});
            std::copy(out.images.data(), out.images.data() + out.images.size(), merged.data());
            std::copy(part.images.data(), part.images.data() + part.images.size(),
                      merged.data() + out.images.size());
            out.images = std::move(merged);
            out.labels.insert(out.labels.end(), part.labels.begin(), part.labels.end());
        }
    }
    out.classes = 10;
    out.name = "cifar10";
    return out;
}

Dataset normalize(const Dataset& data, NormMode mode, const std::optional<Normalization>& stats) {
    if (data.normalization.mode != NormMode::None)
        throw DataError("normalize: dataset is already normalized");
    if (mode == NormMode::None) throw DataError("normalize: mode must be div255 or standardize");

    Dataset out = data;
    const int64_t n = data.size();
    const int c = data.channels();
    const int64_t plane = static_cast<int64_t>(data.height()) * data.width();

    if (mode == NormMode::Div255) {
        for (int64_t i = 0; i < out.images.size(); ++i) {
            const float v = out.images[i];
            if (v < 0.0f || v > 255.0f)
                throw DataError("normalize: div255 expects raw values in [0,255], found " +
                                std::to_string(v));
            out.images[i] = v / 255.0f;
        }
        out.normalization.mode = NormMode::Div255;
        return out;
    }

    Normalization norm;
    norm.mode = NormMode::Standardized;
    if (stats) {
        if (stats->mode != NormMode::Standardized || static_cast<int>(stats->mean.size()) != c)
            throw DataError("normalize: provided stats do not match dataset channels");
        norm = *stats;
    } else {
        norm.mean.resize(static_cast<size_t>(c));
        norm.stdev.resize(static_cast<size_t>(c));
        for (int ch = 0; ch < c; ++ch) {
            double sum = 0, sum2 = 0;
            for (int64_t i = 0; i < n; ++i) {
                const float* p = data.images.data() + (i * c + ch) * plane;
                for (int64_t q = 0; q < plane; ++q) {
                    sum += p[q];
                    sum2 += static_cast<double>(p[q]) * p[q];
                }
            }
            const double count = static_cast<double>(n) * plane;
            const double mean = sum / count;
            const double var = sum2 / count - mean * mean;
            const double sd = std::sqrt(std::max(var, 0.0));
            if (sd < 1e-6)
                throw DataError("normalize: channel " + std::to_string(ch) +
                                " has (near-)zero standard deviation");
            norm.mean[static_cast<size_t>(ch)] = static_cast<float>(mean);
            norm.stdev[static_cast<size_t>(ch)] = static_cast<float>(sd);
        }
    }
    for (int64_t i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
            float* p = out.images.data() + (i * c + ch) * plane;
            const float m = norm.mean[static_cast<size_t>(ch)];
            const float s = norm.stdev[static_cast<size_t>(ch)];
            for (int64_t q = 0; q < plane; ++q) p[q] = (p[q] - m) / s;
        }
    out.normalization = norm;
    return out;
}

float denormalize_pixel(float v, const Normalization& norm, int channel) {
    switch (norm.mode) {
        case NormMode::None:
            return v;
        case NormMode::Div255:
            return v * 255.0f;
        case NormMode::Standardized:
            return v * norm.stdev.at(static_cast<size_t>(channel)) +
                   norm.mean.at(static_cast<size_t>(channel));
    }
    return v;
}

Tensor one_hot(const std::vector<int>& labels, int classes) {
    if (classes < 1) throw DataError("one_hot: class count must be positive");
    Tensor out = Tensor::zeros({static_cast<int>(labels.size()), classes});
    for (size_t i = 0; i < labels.size(); ++i) {
        const int v = labels[i];
        if (v < 0 || v >= classes)
            throw DataError("one_hot: label " + std::to_string(v) + " at index " +
                            std::to_string(i) + " outside [0," + std::to_string(classes) + ")");
        out[static_cast<int64_t>(i) * classes + v] = 1.0f;
    }
    return out;
}

namespace {

Tensor synth_templates(const SynthSpec& spec, uint32_t seed) {
    Rng rng(mix_seed(seed, 0xC1A55));
    Tensor t = Tensor::uninit({spec.classes, spec.channels, spec.height, spec.width});
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.normal());
    return t;
}

}  // namespace

Dataset synth_dataset(const SynthSpec& spec, uint32_t seed) {
    if (spec.n < spec.classes)
        throw DataError("synth_dataset: need at least one sample per class (n=" +
                        std::to_string(spec.n) + ", K=" + std::to_string(spec.classes) + ")");
    if (spec.separation < 0) throw DataError("synth_dataset: separation must be >= 0");
    const Tensor templates = synth_templates(spec, seed);
    const int64_t per = static_cast<int64_t>(spec.channels) * spec.height * spec.width;

    Dataset out;
    out.images = Tensor::uninit({static_cast<int>(spec.n), spec.channels, spec.height, spec.width});
    out.labels.resize(static_cast<size_t>(spec.n));
    out.classes = spec.classes;
    out.name = "synth";
    Rng noise(mix_seed(seed, 0x5A3));
    for (int64_t i = 0; i < spec.n; ++i) {
        const int k = static_cast<int>(i % spec.classes);
        out.labels[static_cast<size_t>(i)] = k;
        const float* tmpl = templates.data() + k * per;
        float* dst = out.images.data() + i * per;
        for (int64_t q = 0; q < per; ++q)
            dst[q] = spec.separation * tmpl[q] + static_cast<float>(noise.normal());
    }
    return out;
}

std::vector<int> nearest_template_labels(const Dataset& data, const SynthSpec& spec,
                                         uint32_t seed) {
    const Tensor templates = synth_templates(spec, seed);
    const int64_t per = static_cast<int64_t>(spec.channels) * spec.height * spec.width;
    std::vector<int> out(static_cast<size_t>(data.size()));
    for (int64_t i = 0; i < data.size(); ++i) {
        const float* x = data.images.data() + i * per;
        double best = std::numeric_limits<double>::infinity();
        int best_k = 0;
        for (int k = 0; k < spec.classes; ++k) {
            const float* t = templates.data() + k * per;
            double d2 = 0;
            for (int64_t q = 0; q < per; ++q) {
                const double d = static_cast<double>(x[q]) - spec.separation * t[q];
                d2 += d * d;
            }
            if (d2 < best) {
                best = d2;
                best_k = k;
            }
        }
        out[static_cast<size_t>(i)] = best_k;
    }
    return out;
}

}  // namespace advgrad
