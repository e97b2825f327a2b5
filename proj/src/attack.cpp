#include "advgrad/attack.h"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "advgrad/train.h"

namespace advgrad {

namespace {

float sign_of(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

/// x_adv rows for one chunk, written into out at row_offset.
void attack_chunk(const Model& model, const Tensor& chunk_x, const Tensor& chunk_y, float epsilon,
                  const std::optional<std::pair<float, float>>& clip, Tensor& out,
                  int64_t row_offset) {
    Graph g;
    const GraphForward f = forward_graph(model, g, chunk_x, false);
    const NodeId y = g.leaf(chunk_y);
    const NodeId loss = g.cross_entropy(f.probs, y);
    const Gradients grads = g.backward(loss, true);
    const Tensor& gx = *grads.by_input;

    const int64_t count = chunk_x.size();
    float* dst = out.data() + row_offset;
    for (int64_t i = 0; i < count; ++i) {
        float v = chunk_x[i] + epsilon * sign_of(gx[i]);
        if (clip) v = std::clamp(v, clip->first, clip->second);
        dst[i] = v;
    }
}

}  // namespace

std::optional<std::pair<float, float>> resolve_clip(const AttackConfig& cfg,
                                                    const Normalization& norm) {
    if (cfg.clip) {
        if (cfg.clip->first >= cfg.clip->second)
            throw AttackError("attack: clip range low must be below high");
        return cfg.clip;
    }
    if (cfg.auto_clip && norm.mode == NormMode::Div255) return std::make_pair(0.0f, 1.0f);
    return std::nullopt;
}

Tensor fgsm_example(const Model& model, const Tensor& x, const Tensor& onehot_y,
                    const AttackConfig& cfg) {
    if (cfg.epsilon < 0.0f) throw AttackError("attack: epsilon must be >= 0");
    if (x.rank() != 4)
        throw AttackError("attack: expected (n,C,H,W) input, got " + x.shape_str());
    if (onehot_y.rank() != 2 || onehot_y.dim(0) != x.dim(0))
        throw AttackError("attack: labels " + onehot_y.shape_str() + " do not match batch " +
                          x.shape_str());
    if (cfg.epsilon == 0.0f) return x;

    const auto clip = resolve_clip(cfg, Normalization{});
    if (clip) {
        for (int64_t i = 0; i < x.size(); ++i)
            if (x[i] < clip->first || x[i] > clip->second) {
                std::cerr << "advgrad: warning: input value " << x[i]
                          << " outside clip range; was the batch normalized?\n";
                break;
            }
    }
    Tensor out = Tensor::uninit(x.shape());
    attack_chunk(model, x, onehot_y, cfg.epsilon, clip, out, 0);
    return out;
}

AdvBatch fgsm_batch(const Model& model, const Dataset& data, const AttackConfig& cfg) {
    if (cfg.epsilon < 0.0f) throw AttackError("attack: epsilon must be >= 0");
    const int64_t n = data.size();
    if (n == 0) throw AttackError("attack: empty dataset");

    AdvBatch out;
    out.clean_ids.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) out.clean_ids[static_cast<size_t>(i)] = i;

    if (cfg.epsilon == 0.0f) {
        out.x_adv = data.images;
    } else {
        const auto clip = resolve_clip(cfg, data.normalization);
        out.x_adv = Tensor::uninit(data.images.shape());
        const int64_t per = data.images.size() / n;
        const int64_t chunk = 256;
        for (int64_t start = 0; start < n; start += chunk) {
            const int64_t count = std::min(chunk, n - start);
            const Dataset part = data.slice(start, count);
            const Tensor part_y = one_hot(part.labels, data.classes);
            attack_chunk(model, part.images, part_y, cfg.epsilon, clip, out.x_adv, start * per);
        }
    }

    const std::vector<int> clean_pred = predict(model, data.images);
    const std::vector<int> adv_pred = predict(model, out.x_adv);
    out.flipped.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        out.flipped[static_cast<size_t>(i)] =
            clean_pred[static_cast<size_t>(i)] != adv_pred[static_cast<size_t>(i)];
    return out;
}

std::vector<std::pair<float, double>> epsilon_sweep(const Model& model, const Dataset& data,
                                                    const std::vector<float>& epsilons,
                                                    const AttackConfig& base) {
    if (epsilons.empty()) throw AttackError("epsilon_sweep: empty epsilon list");
    for (float e : epsilons)
        if (e < 0.0f) throw AttackError("epsilon_sweep: negative epsilon " + std::to_string(e));

    std::vector<std::pair<float, double>> out;
    for (float e : epsilons) {
        AttackConfig cfg = base;
        cfg.epsilon = e;
        const AdvBatch batch = fgsm_batch(model, data, cfg);
        const std::vector<int> pred = predict(model, batch.x_adv);
        int64_t correct = 0;
        for (int64_t i = 0; i < data.size(); ++i)
            if (pred[static_cast<size_t>(i)] == data.labels[static_cast<size_t>(i)]) ++correct;
        out.emplace_back(e, static_cast<double>(correct) / static_cast<double>(data.size()));
    }
    return out;
}

}  // namespace advgrad
