#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "advgrad/data.h"
#include "advgrad/graph.h"
#include "advgrad/model.h"
#include "advgrad/tensor.h"

namespace advgrad {

class TrainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
    float lr = 1e-3f;
    int epochs = 5;
    int batch = 64;
    OptimizerKind optimizer = OptimizerKind::Adam;
    uint32_t seed = 0;
    int patience = 5;          // consecutive non-improving epochs tolerated
    float val_fraction = 0.1f;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0, train_acc = 0;
    double val_loss = 0, val_acc = 0;    // NaN when there is no validation split
    double adv_loss = 0, adv_acc = 0;    // NaN unless adversarially trained
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;

    bool has_adversarial() const;
    /// Header epoch,train_loss,train_acc,val_loss,val_acc; adversarial
    /// histories carry two extra columns adv_loss,adv_acc.
    void to_csv(std::ostream& out) const;
    void save_csv(const std::string& path) const;
};

/// Mean over rows of -log(p at the true class), p clamped below at 1e-12.
double cross_entropy(const Tensor& probs, const Tensor& onehot);

/// SGD or Adam (beta1 0.9, beta2 0.999, eps 1e-8, bias-corrected) over an
/// aligned parameter/gradient list.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, float lr);

    void step(std::vector<Tensor>& params, const std::vector<const Tensor*>& grads);
    int64_t steps_taken() const { return steps_; }

private:
    OptimizerKind kind_;
    float lr_;
    int64_t steps_ = 0;
    std::vector<Tensor> m_, v_;
};

/// Gradient lookup for each parameter node, in order; throws if backward
/// produced no entry for one of them.
std::vector<const Tensor*> gather_grads(const Gradients& grads, const std::vector<NodeId>& nodes);

/// Shuffle order used for epoch `epoch` under `seed`: a permutation of
/// [0,n), identical across runs.
std::vector<int64_t> epoch_order(int64_t n, uint32_t seed, int epoch);

/// Minibatch training with per-epoch reshuffling, floor(n/B) batches per
/// epoch, validation-loss monitoring and early stopping. The last
/// `val_fraction` of the dataset (pre-shuffle) is held out; when a split
/// exists the best-validation parameters are restored at the end.
TrainHistory fit(Model& model, const Dataset& data, const TrainConfig& config);

}  // namespace advgrad
