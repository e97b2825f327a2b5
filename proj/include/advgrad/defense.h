#pragma once

#include <functional>
#include <utility>

#include "advgrad/attack.h"
#include "advgrad/train.h"

namespace advgrad {

struct AdvTrainConfig {
    TrainConfig base;
    float epsilon = 0.1f;
    /// Reinitialize parameters from config.seed before training (the
    /// default) instead of fine-tuning the given model.
    bool from_scratch = true;
    AttackConfig attack;  // epsilon field is overridden by `epsilon`
};

/// Stacks clean rows on top of their adversarial counterparts and
/// duplicates the labels in the same order: row i clean, row B+i its
/// adversarial twin.
std::pair<Tensor, Tensor> mix_minibatch(const Tensor& x, const Tensor& x_adv, const Tensor& y);

/// Observer hook for inspecting each training step.
struct AdvStepInfo {
    int epoch;
    int64_t batch;
    const Tensor& clean_x;
    const Tensor& x_adv;
    const Tensor& mixed_x;
    const Tensor& mixed_y;
};
using AdvStepObserver = std::function<void(const AdvStepInfo&)>;

/// Adversarial training: every minibatch regenerates adversarial examples
/// against the current parameters, mixes them with the clean rows and
/// descends on the combined cross-entropy. History carries the clean and
/// adversarial halves' losses separately.
TrainHistory adversarial_fit(Model& model, const Dataset& data, const AdvTrainConfig& config,
                             const AdvStepObserver& observer = nullptr);

}  // namespace advgrad
