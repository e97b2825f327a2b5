#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "advgrad/data.h"
#include "advgrad/model.h"
#include "advgrad/tensor.h"

namespace advgrad {

class AttackError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct AttackConfig {
    float epsilon = 0.1f;
    /// Explicit clip range. When unset and auto_clip holds, the range is
    /// derived from the data's normalization ((0,1) for div255, none
    /// otherwise).
    std::optional<std::pair<float, float>> clip;
    bool auto_clip = true;
};

/// Clip range that applies to `data` under `cfg`.
std::optional<std::pair<float, float>> resolve_clip(const AttackConfig& cfg,
                                                    const Normalization& norm);

/// Single-step sign attack: x + epsilon * sign(d loss / d x), then clip.
/// sign(0) is 0, so untouched gradients leave pixels untouched and
/// epsilon 0 is the identity. Model parameters are not modified.
Tensor fgsm_example(const Model& model, const Tensor& x, const Tensor& onehot_y,
                    const AttackConfig& cfg);

struct AdvBatch {
    Tensor x_adv;
    std::vector<int64_t> clean_ids;
    std::vector<char> flipped;  // prediction changed vs clean
};

/// Attacks every sample against its own true label.
AdvBatch fgsm_batch(const Model& model, const Dataset& data, const AttackConfig& cfg);

/// Accuracy under attack for each epsilon; the epsilon 0 row equals clean
/// accuracy exactly.
std::vector<std::pair<float, double>> epsilon_sweep(const Model& model, const Dataset& data,
                                                    const std::vector<float>& epsilons,
                                                    const AttackConfig& base = {});

}  // namespace advgrad
