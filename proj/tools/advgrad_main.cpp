#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "advgrad/attack.h"
#include "advgrad/data.h"
#include "advgrad/defense.h"
#include "advgrad/model.h"
#include "advgrad/report.h"
#include "advgrad/train.h"

namespace {

using namespace advgrad;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SynthOpts {
    int64_t n = 2000;
    int classes = 4;
    float separation = 2.0f;
    int channels = 3;
    int size = 8;
};

struct CommonOpts {
    std::string dataset = "synth";
    std::string data_dir = "data";
    uint32_t seed = 0;
    SynthOpts synth;
};

const std::vector<std::string> kDatasets = {"mnist", "fashion-mnist", "cifar10", "synth"};

std::vector<std::string> class_names(const std::string& dataset, int k) {
    if (dataset == "mnist") return {"0", "1", "2", "3", "4", "5", "6", "7", "8", "9"};
    if (dataset == "fashion-mnist")
        return {"T-shirt/top", "Trouser", "Pullover", "Dress",   "Coat",
                "Sandal",      "Shirt",   "Sneaker",  "Bag",     "Ankle boot"};
    if (dataset == "cifar10")
        return {"airplane", "automobile", "bird",  "cat",  "deer",
                "dog",      "frog",       "horse", "ship", "truck"};
    std::vector<std::string> names;
    for (int i = 0; i < k; ++i) names.push_back("class" + std::to_string(i));
    return names;
}

std::string idx_path(const std::string& dir, const std::string& dataset, Split split, bool images) {
    const std::string base = split == Split::Train ? "train" : "t10k";
    const std::string file = base + (images ? "-images-idx3-ubyte" : "-labels-idx1-ubyte");
    return (std::filesystem::path(dir) / dataset / file).string();
}

std::string cifar_dir(const std::string& data_dir) {
    namespace fs = std::filesystem;
    for (const char* sub : {"cifar-10-batches-bin", "cifar10"}) {
        const fs::path p = fs::path(data_dir) / sub;
        if (fs::exists(p)) return p.string();
    }
    return data_dir;
}

/// Raw (unnormalized) split of the configured dataset.
Dataset load_raw(const CommonOpts& opts, Split split) {
    if (opts.dataset == "mnist" || opts.dataset == "fashion-mnist") {
        Dataset d = load_idx(idx_path(opts.data_dir, opts.dataset, split, true),
                             idx_path(opts.data_dir, opts.dataset, split, false));
        d.name = opts.dataset;
        return d;
    }
    if (opts.dataset == "cifar10") return load_cifar10_bin(cifar_dir(opts.data_dir), split);
    if (opts.dataset == "synth") {
        SynthSpec spec;
        spec.n = opts.synth.n;
        spec.classes = opts.synth.classes;
        spec.separation = opts.synth.separation;
        spec.channels = opts.synth.channels;
        spec.height = spec.width = opts.synth.size;
        Dataset all = synth_dataset(spec, opts.seed);
        const int64_t n_train = all.size() * 8 / 10;
        Dataset d = split == Split::Train ? all.slice(0, n_train)
                                          : all.slice(n_train, all.size() - n_train);
        d.name = "synth";
        return d;
    }
    throw UsageError("unknown dataset '" + opts.dataset + "'");
}

bool grayscale(const std::string& dataset) {
    return dataset == "mnist" || dataset == "fashion-mnist";
}

ModelConfig default_config(const CommonOpts& opts) {
    if (grayscale(opts.dataset)) return ModelConfig::grayscale_default(10, 28, 28, opts.seed);
    if (opts.dataset == "cifar10") return ModelConfig::color_default(3, 10, 32, 32, opts.seed);
    // synth: a compact stack sized for small synthetic images
    ModelConfig c;
    c.channels = opts.synth.channels;
    c.height = c.width = opts.synth.size;
    c.classes = opts.synth.classes;
    c.head = HeadVariant::SmallK;
    c.seed = opts.seed;
    c.layers = {LayerSpec::conv(16, 3), LayerSpec::maxpool(2),
                LayerSpec::conv(32, 3), LayerSpec::flatten(),
                LayerSpec::dense(64, true), LayerSpec::dense(c.classes, false),
                LayerSpec::softmax()};
    return c;
}

Dataset normalize_for_training(const CommonOpts& opts, Dataset raw) {
    return normalize(raw, grayscale(opts.dataset) ? NormMode::Div255 : NormMode::Standardized);
}

Dataset normalize_like_model(const Model& model, Dataset raw) {
    const Normalization& norm = model.config.normalization;
    switch (norm.mode) {
        case NormMode::Div255:
            return normalize(raw, NormMode::Div255);
        case NormMode::Standardized:
            return normalize(raw, NormMode::Standardized, norm);
        case NormMode::None:
            return raw;
    }
    return raw;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--dataset", opts.dataset, "Dataset: mnist, fashion-mnist, cifar10 or synth")
        ->check(CLI::IsMember(kDatasets));
    cmd->add_option("--data-dir", opts.data_dir, "Directory holding the dataset files");
    cmd->add_option("--seed", opts.seed, "Seed for every random choice in the run");
    cmd->add_option("--synth-n", opts.synth.n, "Synthetic dataset: sample count");
    cmd->add_option("--synth-classes", opts.synth.classes, "Synthetic dataset: class count");
    cmd->add_option("--synth-sep", opts.synth.separation, "Synthetic dataset: class separation");
    cmd->add_option("--synth-channels", opts.synth.channels, "Synthetic dataset: channels");
    cmd->add_option("--synth-size", opts.synth.size, "Synthetic dataset: image height/width");
    cmd->set_config("--config", "", "Config file with key=value lines; flags override it");
}

void add_train_flags(CLI::App* cmd, TrainConfig& cfg, std::string& optimizer) {
    cmd->add_option("--epochs", cfg.epochs, "Training epochs");
    cmd->add_option("--batch", cfg.batch, "Minibatch size");
    cmd->add_option("--lr", cfg.lr, "Learning rate");
    cmd->add_option("--optimizer", optimizer, "Optimizer: sgd or adam")
        ->check(CLI::IsMember({"sgd", "adam"}));
    cmd->add_option("--patience", cfg.patience, "Early-stop patience in epochs");
    cmd->add_option("--val-frac", cfg.val_fraction, "Fraction of training data held out");
}

TrainConfig finish_train_config(TrainConfig cfg, const std::string& optimizer, uint32_t seed) {
    cfg.optimizer = optimizer == "sgd" ? OptimizerKind::Sgd : OptimizerKind::Adam;
    cfg.seed = seed;
    return cfg;
}

void print_history_tail(const TrainHistory& history) {
    if (history.epochs.empty()) return;
    const EpochRecord& last = history.epochs.back();
    std::cout << "epochs: " << history.epochs.size() << "  train_loss: " << last.train_loss
              << "  train_acc: " << last.train_acc;
    if (!std::isnan(last.val_loss))
        std::cout << "  val_loss: " << last.val_loss << "  val_acc: " << last.val_acc;
    std::cout << "\n";
}

int cmd_train(const CommonOpts& opts, const TrainConfig& cfg, const std::string& out,
              const std::string& history_path) {
    Dataset data = normalize_for_training(opts, load_raw(opts, Split::Train));
    ModelConfig config = default_config(opts);
    config.normalization = data.normalization;
    Model model = build_model(config);
    const TrainHistory history = fit(model, data, cfg);
    save_model(model, out);
    history.save_csv(history_path.empty() ? out + ".history.csv" : history_path);
    print_history_tail(history);
    std::cout << "model: " << out << "\n";
    return 0;
}

void dump_samples(const Model& model, const Dataset& data, const AdvBatch& adv,
                  const std::string& dataset, const std::string& dir) {
    std::filesystem::create_directories(dir);
    // First flipped sample, or sample 0 if the attack flipped nothing.
    int64_t pick = 0;
    for (int64_t i = 0; i < data.size(); ++i)
        if (adv.flipped[static_cast<size_t>(i)]) {
            pick = i;
            break;
        }
    const Dataset clean_one = data.slice(pick, 1);
    Dataset adv_one = clean_one;
    const int64_t per = data.images.size() / data.size();
    std::copy(adv.x_adv.data() + pick * per, adv.x_adv.data() + (pick + 1) * per,
              adv_one.images.data());
    const int pred_clean = predict(model, clean_one.images)[0];
    const int pred_adv = predict(model, adv_one.images)[0];
    const std::string prefix =
        (std::filesystem::path(dir) / ("sample" + std::to_string(pick))).string();
    dump_image_pair(clean_one.images, adv_one.images, pred_clean, pred_adv,
                    class_names(dataset, data.classes), data.normalization, prefix);
    std::cout << "images: " << prefix << "_{clean,adv}"
              << (data.channels() == 1 ? ".pgm" : ".ppm") << "\n";
}

int cmd_attack(const CommonOpts& opts, const std::string& model_path, float epsilon,
               const std::string& out, const std::string& dump_dir, bool no_clip) {
    if (epsilon < 0.0f) throw UsageError("--epsilon must be >= 0");
    const Model model = load_model(model_path);
    Dataset test = normalize_like_model(model, load_raw(opts, Split::Test));
    AttackConfig base;
    base.auto_clip = !no_clip;
    const RobustnessReport report =
        robustness_report(model, nullptr, test, epsilon, opts.seed, &base);
    std::cout << "dataset: " << report.dataset << "  epsilon: " << report.epsilon
              << "  clean: " << report.clean_acc * 100.0
              << "%  attacked: " << report.attacked_acc * 100.0
              << "%  reduction: " << report.reduction * 100.0 << " points\n";
    if (!out.empty()) {
        export_reports({report}, report_format_for_path(out), out);
        std::cout << "report: " << out << "\n";
    }
    if (!dump_dir.empty()) {
        AttackConfig cfg = base;
        cfg.epsilon = epsilon;
        const AdvBatch adv = fgsm_batch(model, test, cfg);
        dump_samples(model, test, adv, opts.dataset, dump_dir);
    }
    return 0;
}

int cmd_defend(const CommonOpts& opts, const TrainConfig& base_cfg, float epsilon,
               const std::string& model_in, bool finetune, bool no_clip, const std::string& out,
               const std::string& history_path) {
    if (epsilon < 0.0f) throw UsageError("--epsilon must be >= 0");
    if (finetune && model_in.empty()) throw UsageError("--finetune requires --model");

    AdvTrainConfig cfg;
    cfg.base = base_cfg;
    cfg.epsilon = epsilon;
    cfg.from_scratch = !finetune;
    cfg.attack.auto_clip = !no_clip;

    Model model;
    Dataset data;
    if (finetune) {
        model = load_model(model_in);
        data = normalize_like_model(model, load_raw(opts, Split::Train));
    } else {
        data = normalize_for_training(opts, load_raw(opts, Split::Train));
        ModelConfig config = default_config(opts);
        config.normalization = data.normalization;
        model = build_model(config);
    }
    const TrainHistory history = adversarial_fit(model, data, cfg);
    save_model(model, out);
    history.save_csv(history_path.empty() ? out + ".history.csv" : history_path);
    print_history_tail(history);
    std::cout << "model: " << out << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& model_path) {
    const Model model = load_model(model_path);
    Dataset test = normalize_like_model(model, load_raw(opts, Split::Test));
    const double acc = accuracy(model, test);
    std::cout << "dataset: " << (test.name.empty() ? opts.dataset : test.name)
              << "  samples: " << test.size() << "  accuracy: " << acc * 100.0 << "%\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out) {
    std::vector<RobustnessReport> merged;
    for (const std::string& path : inputs) {
        const auto part = import_reports(path, report_format_for_path(path));
        merged.insert(merged.end(), part.begin(), part.end());
    }
    export_reports(merged, report_format_for_path(out), out);
    std::cout << "merged " << merged.size() << " rows into " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Train small CNN classifiers, attack them with single-step sign perturbations, "
                 "and harden them by training on mixed clean/adversarial batches."};
    app.require_subcommand(1);

    CommonOpts train_opts, attack_opts, defend_opts, eval_opts;
    TrainConfig train_cfg, defend_base;
    std::string train_optimizer = "adam", defend_optimizer = "adam";
    std::string train_out = "model.advg", defend_out = "defended.advg";
    std::string train_history, defend_history;
    std::string attack_model, defend_model, eval_model;
    std::string attack_out, attack_dump;
    float attack_epsilon = 0.1f, defend_epsilon = 0.1f;
    bool attack_no_clip = false, defend_no_clip = false, defend_finetune = false;
    std::vector<std::string> report_inputs;
    std::string report_out;

    CLI::App* train_cmd = app.add_subcommand("train", "Fit a model and save it with its history");
    add_common(train_cmd, train_opts);
    add_train_flags(train_cmd, train_cfg, train_optimizer);
    train_cmd->add_option("--out", train_out, "Model output path");
    train_cmd->add_option("--history", train_history, "History CSV path (default <out>.history.csv)");

    CLI::App* attack_cmd =
        app.add_subcommand("attack", "Perturb the test split against a trained model");
    add_common(attack_cmd, attack_opts);
    attack_cmd->add_option("--model", attack_model, "Model file")->required();
    attack_cmd->add_option("--epsilon", attack_epsilon, "Perturbation magnitude");
    attack_cmd->add_option("--out", attack_out, "Report path (.csv or .json)");
    attack_cmd->add_option("--dump-images", attack_dump, "Directory for clean/adversarial dumps");
    attack_cmd->add_flag("--no-clip", attack_no_clip, "Skip clipping to the valid pixel range");

    CLI::App* defend_cmd =
        app.add_subcommand("defend", "Adversarially train a model on clean+perturbed batches");
    add_common(defend_cmd, defend_opts);
    add_train_flags(defend_cmd, defend_base, defend_optimizer);
    defend_cmd->add_option("--epsilon", defend_epsilon, "Perturbation magnitude for training");
    defend_cmd->add_option("--model", defend_model, "Starting model for --finetune");
    defend_cmd->add_option("--out", defend_out, "Model output path");
    defend_cmd->add_option("--history", defend_history, "History CSV path (default <out>.history.csv)");
    defend_cmd->add_flag("--no-clip", defend_no_clip, "Skip clipping to the valid pixel range");
    auto* scratch_flag =
        defend_cmd->add_flag("--from-scratch", "Train from fresh parameters (default)");
    defend_cmd->add_flag("--finetune", defend_finetune, "Continue from --model instead")
        ->excludes(scratch_flag);

    CLI::App* eval_cmd = app.add_subcommand("eval", "Clean accuracy of a model on the test split");
    add_common(eval_cmd, eval_opts);
    eval_cmd->add_option("--model", eval_model, "Model file")->required();

    CLI::App* report_cmd = app.add_subcommand("report", "Merge report files into one");
    report_cmd->add_option("--out", report_out, "Merged report path (.csv or .json)")->required();
    report_cmd->add_option("inputs", report_inputs, "Report files to merge")
        ->required()
        ->expected(-1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (train_cmd->parsed())
            return cmd_train(train_opts, finish_train_config(train_cfg, train_optimizer, train_opts.seed),
                             train_out, train_history);
        if (attack_cmd->parsed())
            return cmd_attack(attack_opts, attack_model, attack_epsilon, attack_out, attack_dump,
                              attack_no_clip);
        if (defend_cmd->parsed())
            return cmd_defend(defend_opts,
                              finish_train_config(defend_base, defend_optimizer, defend_opts.seed),
                              defend_epsilon, defend_model, defend_finetune, defend_no_clip,
                              defend_out, defend_history);
        if (eval_cmd->parsed()) return cmd_eval(eval_opts, eval_model);
        if (report_cmd->parsed()) return cmd_report(report_inputs, report_out);
    } catch (const UsageError& e) {
        std::cerr << "advgrad: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "advgrad: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
