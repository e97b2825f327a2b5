#pragma once

#include <functional>

#include "advgrad/train.h"

// Epoch loop shared by plain and adversarial training. The step callback
// owns everything that happens inside one minibatch (forward, loss,
// backward, update) and reports the stats to aggregate.

namespace advgrad::detail {

struct BatchStats {
    double loss = 0, acc = 0;
    bool has_adv = false;
    double adv_loss = 0, adv_acc = 0;
};

using BatchStep = std::function<BatchStats(const Tensor& batch_x, const Tensor& batch_onehot,
                                           const std::vector<int>& batch_labels, int epoch,
                                           int64_t batch_index)>;

TrainHistory run_training(Model& model, const Dataset& data, const TrainConfig& config,
                          const BatchStep& step);

/// Loss and accuracy of the model on a dataset, evaluated in chunks.
std::pair<double, double> eval_loss_acc(const Model& model, const Dataset& data);

}  // namespace advgrad::detail
