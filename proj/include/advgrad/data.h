#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "advgrad/tensor.h"

namespace advgrad {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class NormMode { None, Div255, Standardized };

struct Normalization {
    NormMode mode = NormMode::None;
    std::vector<float> mean;  // per channel, Standardized only
    std::vector<float> stdev;
};

/// Image batch with integer labels. images is (n,C,H,W).
struct Dataset {
    Tensor images;
    std::vector<int> labels;
    int classes = 0;
    Normalization normalization;
    std::string name;

    int64_t size() const { return images.rank() == 4 ? images.dim(0) : 0; }
    int channels() const { return images.dim(1); }
    int height() const { return images.dim(2); }
    int width() const { return images.dim(3); }

    /// Copy of rows [start, start+count).
    Dataset slice(int64_t start, int64_t count) const;
    /// Copy of the listed rows, in order.
    Dataset gather(const std::vector<int64_t>& rows) const;
};

/// IDX pair loader (big-endian magics 0x803 images / 0x801 labels).
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// One CIFAR-10 binary file: records of 3073 bytes (label + 1024 R + 1024 G
/// + 1024 B). Accepts any whole number of records.
Dataset load_cifar10_file(const std::string& path);

enum class Split { Train, Test };

/// Official CIFAR-10 binary layout: data_batch_1..5.bin and test_batch.bin,
/// 10000 records each, under `dir`.
Dataset load_cifar10_bin(const std::string& dir, Split split);

/// div255 maps raw bytes onto [0,1]; standardize shifts/scales per channel
/// using either provided stats or stats computed from this dataset.
/// Normalizing an already normalized dataset is an error.
Dataset normalize(const Dataset& data, NormMode mode,
                  const std::optional<Normalization>& stats = std::nullopt);

/// Inverse of the recorded normalization, back to the raw pixel scale.
float denormalize_pixel(float v, const Normalization& norm, int channel);

Tensor one_hot(const std::vector<int>& labels, int classes);

struct SynthSpec {
    int64_t n = 2000;
    int channels = 3, height = 8, width = 8;
    int classes = 4;
    float separation = 2.0f;
};

/// Gaussian class templates scaled by `separation` plus unit noise.
/// separation 0 carries no class signal; large separations are linearly
/// separable.
Dataset synth_dataset(const SynthSpec& spec, uint32_t seed);

/// Labels of the nearest class template; the natural oracle for synthetic
/// data.
std::vector<int> nearest_template_labels(const Dataset& data, const SynthSpec& spec, uint32_t seed);

}  // namespace advgrad
