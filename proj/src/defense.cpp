#include "advgrad/defense.h"

#include <cmath>

#include "fit_driver.h"

namespace advgrad {

std::pair<Tensor, Tensor> mix_minibatch(const Tensor& x, const Tensor& x_adv, const Tensor& y) {
    if (!x.same_shape(x_adv))
        throw AttackError("mix_minibatch: clean " + x.shape_str() + " vs adversarial " +
                          x_adv.shape_str());
    if (x.rank() < 1 || y.rank() != 2 || y.dim(0) != x.dim(0))
        throw AttackError("mix_minibatch: labels " + y.shape_str() + " do not match batch " +
                          x.shape_str());
    const int b = x.dim(0);
    std::vector<int> xshape = x.shape();
    xshape[0] = 2 * b;
    Tensor mixed_x = Tensor::uninit(xshape);
    std::copy(x.data(), x.data() + x.size(), mixed_x.data());
    std::copy(x_adv.data(), x_adv.data() + x_adv.size(), mixed_x.data() + x.size());

    const int k = y.dim(1);
    Tensor mixed_y = Tensor::uninit({2 * b, k});
    std::copy(y.data(), y.data() + y.size(), mixed_y.data());
    std::copy(y.data(), y.data() + y.size(), mixed_y.data() + y.size());
    return {std::move(mixed_x), std::move(mixed_y)};
}

namespace {

struct HalfStats {
    double loss = 0, acc = 0;
};

HalfStats half_stats(const Tensor& probs, const std::vector<int>& labels, int64_t row_offset) {
    const int k = probs.dim(1);
    const int64_t b = static_cast<int64_t>(labels.size());
    double loss = 0;
    int correct = 0;
    for (int64_t i = 0; i < b; ++i) {
        const int64_t row = row_offset + i;
        const int truth = labels[static_cast<size_t>(i)];
        loss += -std::log(std::max((double)probs[row * k + truth], 1e-12));
        int best = 0;
        for (int j = 1; j < k; ++j)
            if (probs[row * k + j] > probs[row * k + best]) best = j;
        if (best == truth) ++correct;
    }
    return {loss / static_cast<double>(b), static_cast<double>(correct) / static_cast<double>(b)};
}

}  // namespace

TrainHistory adversarial_fit(Model& model, const Dataset& data, const AdvTrainConfig& cfg,
                             const AdvStepObserver& observer) {
    if (cfg.epsilon < 0.0f) throw AttackError("adversarial_fit: epsilon must be >= 0");
    if (cfg.from_scratch) {
        Model fresh = build_model(model.config);
        model.params = std::move(fresh.params);
        model.param_names = std::move(fresh.param_names);
    }

    AttackConfig attack = cfg.attack;
    attack.epsilon = cfg.epsilon;
    attack.clip = resolve_clip(attack, data.normalization);
    attack.auto_clip = false;

    Optimizer opt(cfg.base.optimizer, cfg.base.lr);
    auto step = [&](const Tensor& bx, const Tensor& by, const std::vector<int>& labels, int epoch,
                    int64_t batch_index) -> detail::BatchStats {
        // Line of play per minibatch: input gradient at current theta,
        // sign step, concat, one descent step on the 2B batch.
        const Tensor x_adv = fgsm_example(model, bx, by, attack);
        auto [mixed_x, mixed_y] = mix_minibatch(bx, x_adv, by);
        if (observer)
            observer(AdvStepInfo{epoch, batch_index, bx, x_adv, mixed_x, mixed_y});

        Rng dropout_rng(mix_seed(cfg.base.seed, 0xADF0 + static_cast<uint64_t>(epoch),
                                 static_cast<uint64_t>(batch_index)));
        Graph g;
        const GraphForward f = forward_graph(model, g, mixed_x, true, &dropout_rng);
        const NodeId y = g.leaf(mixed_y);
        const NodeId loss = g.cross_entropy(f.probs, y);
        const Gradients grads = g.backward(loss, false);
        opt.step(model.params, gather_grads(grads, f.param_nodes));

        const Tensor& probs = g.value(f.probs);
        const HalfStats clean = half_stats(probs, labels, 0);
        const HalfStats adv = half_stats(probs, labels, bx.dim(0));
        detail::BatchStats stats;
        stats.loss = clean.loss;
        stats.acc = clean.acc;
        stats.has_adv = true;
        stats.adv_loss = adv.loss;
        stats.adv_acc = adv.acc;
        return stats;
    };
    return detail::run_training(model, data, cfg.base, step);
}

}  // namespace advgrad
