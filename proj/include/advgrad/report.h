#pragma once

#include <optional>
#include <string>
#include <vector>

#include "advgrad/data.h"
#include "advgrad/model.h"

namespace advgrad {

class ReportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One row of the robustness story. Accuracies are fractions in [0,1];
/// exports render them as percentages with two decimals.
struct RobustnessReport {
    std::string dataset;
    float epsilon = 0.0f;
    double clean_acc = 0.0;
    double attacked_acc = 0.0;
    double reduction = 0.0;  // clean_acc - attacked_acc
    std::optional<double> defended_attacked_acc;
    int64_t samples = 0;
    uint32_t seed = 0;
};

/// Fraction of argmax predictions matching the labels.
double accuracy(const Model& model, const Dataset& data);

struct AttackConfig;

/// Clean accuracy, FGSM accuracy against the plain model, and (when a
/// defended model is given) FGSM accuracy against the defended model with
/// examples generated from the defended model's own gradients.
RobustnessReport robustness_report(const Model& plain, const Model* defended, const Dataset& data,
                                   float epsilon, uint32_t seed = 0,
                                   const AttackConfig* attack_base = nullptr);

enum class ReportFormat { Csv, Json };

ReportFormat report_format_for_path(const std::string& path);
void export_reports(const std::vector<RobustnessReport>& reports, ReportFormat format,
                    const std::string& path);
std::vector<RobustnessReport> import_reports(const std::string& path, ReportFormat format);

/// Clean/adversarial pair as PGM (grayscale) or PPM (color) plus a text
/// sidecar with the two predictions. Pixels are denormalized with the
/// dataset's recorded normalization. Writes <prefix>_clean.pgm|ppm,
/// <prefix>_adv.pgm|ppm and <prefix>_labels.txt.
void dump_image_pair(const Tensor& x, const Tensor& x_adv, int pred_clean, int pred_adv,
                     const std::vector<std::string>& class_names, const Normalization& norm,
                     const std::string& path_prefix);

}  // namespace advgrad
