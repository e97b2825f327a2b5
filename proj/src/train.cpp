#include "advgrad/train.h"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "advgrad/util.h"
#include "fit_driver.h"

namespace advgrad {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr float kAdamBeta1 = 0.9f;
constexpr float kAdamBeta2 = 0.999f;
constexpr float kAdamEps = 1e-8f;

void write_cell(std::ostream& out, double v) {
    std::ostringstream os;
    os << std::setprecision(9) << v;
    out << os.str();
}

}  // namespace

bool TrainHistory::has_adversarial() const {
    for (const EpochRecord& r : epochs)
        if (!std::isnan(r.adv_loss)) return true;
    return false;
}

void TrainHistory::to_csv(std::ostream& out) const {
    const bool adv = has_adversarial();
    out << "epoch,train_loss,train_acc,val_loss,val_acc";
    if (adv) out << ",adv_loss,adv_acc";
    out << "\n";
    for (const EpochRecord& r : epochs) {
        out << r.epoch << ',';
        write_cell(out, r.train_loss);
        out << ',';
        write_cell(out, r.train_acc);
        out << ',';
        write_cell(out, r.val_loss);
        out << ',';
        write_cell(out, r.val_acc);
        if (adv) {
            out << ',';
            write_cell(out, r.adv_loss);
            out << ',';
            write_cell(out, r.adv_acc);
        }
        out << "\n";
    }
}

void TrainHistory::save_csv(const std::string& path) const {
    std::ostringstream os;
    to_csv(os);
    write_file_atomic(path, os.str());
}

double cross_entropy(const Tensor& probs, const Tensor& onehot) {
    Graph g;
    const NodeId p = g.leaf(probs);
    const NodeId y = g.leaf(onehot);
    return g.value(g.cross_entropy(p, y)).item();
}

Optimizer::Optimizer(OptimizerKind kind, float lr) : kind_(kind), lr_(lr) {
    if (lr <= 0.0f) throw TrainError("optimizer: learning rate must be positive");
}

void Optimizer::step(std::vector<Tensor>& params, const std::vector<const Tensor*>& grads) {
    if (params.size() != grads.size())
        throw TrainError("optimizer: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
    for (size_t i = 0; i < params.size(); ++i) {
        if (!grads[i]) throw TrainError("optimizer: missing gradient " + std::to_string(i));
        if (!params[i].same_shape(*grads[i]))
            throw TrainError("optimizer: gradient shape mismatch at " + std::to_string(i));
    }
    if (kind_ == OptimizerKind::Sgd) {
        ++steps_;
        for (size_t i = 0; i < params.size(); ++i) {
            float* p = params[i].data();
            const float* g = grads[i]->data();
            for (int64_t j = 0; j < params[i].size(); ++j) p[j] -= lr_ * g[j];
        }
        return;
    }
    if (m_.empty()) {
        for (const Tensor& p : params) {
            m_.push_back(Tensor::zeros(p.shape()));
            v_.push_back(Tensor::zeros(p.shape()));
        }
    }
    ++steps_;
    const float bc1 = 1.0f - std::pow(kAdamBeta1, static_cast<float>(steps_));
    const float bc2 = 1.0f - std::pow(kAdamBeta2, static_cast<float>(steps_));
    for (size_t i = 0; i < params.size(); ++i) {
        float* p = params[i].data();
        const float* g = grads[i]->data();
        float* m = m_[i].data();
        float* v = v_[i].data();
        for (int64_t j = 0; j < params[i].size(); ++j) {
            m[j] = kAdamBeta1 * m[j] + (1.0f - kAdamBeta1) * g[j];
            v[j] = kAdamBeta2 * v[j] + (1.0f - kAdamBeta2) * g[j] * g[j];
            const float mhat = m[j] / bc1;
            const float vhat = v[j] / bc2;
            p[j] -= lr_ * mhat / (std::sqrt(vhat) + kAdamEps);
        }
    }
}

std::vector<const Tensor*> gather_grads(const Gradients& grads, const std::vector<NodeId>& nodes) {
    std::vector<const Tensor*> out;
    out.reserve(nodes.size());
    for (NodeId id : nodes) {
        const auto it = grads.by_parameter.find(id);
        if (it == grads.by_parameter.end())
            throw TrainError("no gradient for parameter node " + std::to_string(id));
        out.push_back(&it->second);
    }
    return out;
}

std::vector<int64_t> epoch_order(int64_t n, uint32_t seed, int epoch) {
    std::vector<int64_t> idx(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    Rng rng(mix_seed(seed, 0xE90C, static_cast<uint64_t>(epoch)));
    rng.shuffle(idx);
    return idx;
}

namespace detail {

std::pair<double, double> eval_loss_acc(const Model& model, const Dataset& data) {
    const int64_t n = data.size();
    if (n == 0) throw TrainError("evaluation on empty dataset");
    const int64_t chunk = 512;
    double loss_sum = 0;
    int64_t correct = 0;
    for (int64_t start = 0; start < n; start += chunk) {
        const int64_t count = std::min(chunk, n - start);
        const Dataset part = data.slice(start, count);
        const Tensor probs = forward(model, part.images, false);
        const Tensor onehot = one_hot(part.labels, data.classes);
        loss_sum += cross_entropy(probs, onehot) * static_cast<double>(count);
        const int k = probs.dim(1);
        for (int64_t i = 0; i < count; ++i) {
            int best = 0;
            for (int j = 1; j < k; ++j)
                if (probs[i * k + j] > probs[i * k + best]) best = j;
            if (best == part.labels[static_cast<size_t>(i)]) ++correct;
        }
    }
    return {loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
}

TrainHistory run_training(Model& model, const Dataset& data, const TrainConfig& cfg,
                          const BatchStep& step) {
    if (data.size() == 0) throw TrainError("fit: empty dataset");
    if (cfg.lr <= 0.0f) throw TrainError("fit: learning rate must be positive");
    if (cfg.epochs < 0) throw TrainError("fit: negative epoch count");
    if (cfg.batch < 1) throw TrainError("fit: batch size must be positive");
    if (cfg.val_fraction < 0.0f || cfg.val_fraction >= 1.0f)
        throw TrainError("fit: validation fraction must be in [0,1)");
    if (cfg.patience < 0) throw TrainError("fit: negative patience");

    const int64_t n = data.size();
    const int64_t n_val = static_cast<int64_t>(std::floor(cfg.val_fraction * static_cast<double>(n)));
    const int64_t n_train = n - n_val;
    if (cfg.batch > n_train)
        throw TrainError("fit: batch size " + std::to_string(cfg.batch) +
                         " exceeds training rows " + std::to_string(n_train));

    const Dataset train = data.slice(0, n_train);
    const Dataset val = n_val > 0 ? data.slice(n_train, n_val) : Dataset{};
    const Tensor train_onehot = one_hot(train.labels, data.classes);
    const int k = data.classes;

    TrainHistory history;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Tensor> best_params;
    int bad_epochs = 0;

    const int64_t batches = n_train / cfg.batch;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<int64_t> order = epoch_order(n_train, cfg.seed, epoch);
        double loss_sum = 0, acc_sum = 0, adv_loss_sum = 0, adv_acc_sum = 0;
        bool any_adv = false;
        for (int64_t b = 0; b < batches; ++b) {
            std::vector<int64_t> rows(order.begin() + b * cfg.batch,
                                      order.begin() + (b + 1) * cfg.batch);
            const Dataset part = train.gather(rows);
            Tensor by = Tensor::zeros({cfg.batch, k});
            for (int64_t i = 0; i < cfg.batch; ++i)
                for (int j = 0; j < k; ++j)
                    by[i * k + j] = train_onehot[rows[static_cast<size_t>(i)] * k + j];
            const BatchStats stats = step(part.images, by, part.labels, epoch, b);
            loss_sum += stats.loss;
            acc_sum += stats.acc;
            if (stats.has_adv) {
                any_adv = true;
                adv_loss_sum += stats.adv_loss;
                adv_acc_sum += stats.adv_acc;
            }
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = batches ? loss_sum / static_cast<double>(batches) : kNan;
        rec.train_acc = batches ? acc_sum / static_cast<double>(batches) : kNan;
        rec.adv_loss = any_adv ? adv_loss_sum / static_cast<double>(batches) : kNan;
        rec.adv_acc = any_adv ? adv_acc_sum / static_cast<double>(batches) : kNan;
        if (n_val > 0) {
            const auto [vl, va] = eval_loss_acc(model, val);
            rec.val_loss = vl;
            rec.val_acc = va;
        } else {
            rec.val_loss = kNan;
            rec.val_acc = kNan;
        }
        history.epochs.push_back(rec);

        if (n_val > 0) {
            if (rec.val_loss < best_val - 1e-12) {
                best_val = rec.val_loss;
                best_params = model.params;
                bad_epochs = 0;
            } else {
                ++bad_epochs;
                if (bad_epochs > cfg.patience) break;
            }
        }
    }
    if (n_val > 0 && !best_params.empty()) model.params = std::move(best_params);
    return history;
}

}  // namespace detail

TrainHistory fit(Model& model, const Dataset& data, const TrainConfig& cfg) {
    Optimizer opt(cfg.optimizer, cfg.lr);
    const int k = data.classes;
    auto step = [&](const Tensor& bx, const Tensor& by, const std::vector<int>& labels, int epoch,
                    int64_t batch_index) -> detail::BatchStats {
        Rng dropout_rng(mix_seed(cfg.seed, 0xD309 + static_cast<uint64_t>(epoch),
                                 static_cast<uint64_t>(batch_index)));
        Graph g;
        const GraphForward f = forward_graph(model, g, bx, true, &dropout_rng);
        const NodeId y = g.leaf(by);
        const NodeId loss = g.cross_entropy(f.probs, y);
        const Gradients grads = g.backward(loss, false);
        opt.step(model.params, gather_grads(grads, f.param_nodes));

        detail::BatchStats stats;
        stats.loss = g.value(loss).item();
        const Tensor& probs = g.value(f.probs);
        int correct = 0;
        for (size_t i = 0; i < labels.size(); ++i) {
            int best = 0;
            for (int j = 1; j < k; ++j)
                if (probs[static_cast<int64_t>(i) * k + j] > probs[static_cast<int64_t>(i) * k + best])
                    best = j;
            if (best == labels[i]) ++correct;
        }
        stats.acc = static_cast<double>(correct) / static_cast<double>(labels.size());
        return stats;
    };
    return detail::run_training(model, data, cfg, step);
}

}  // namespace advgrad
