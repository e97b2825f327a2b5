#include "advgrad/report.h"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "advgrad/attack.h"
#include "advgrad/util.h"
#include "json.hpp"

namespace advgrad {

using nlohmann::json;

double accuracy(const Model& model, const Dataset& data) {
    if (data.size() == 0) throw ReportError("accuracy: empty dataset");
    const std::vector<int> pred = predict(model, data.images);
    int64_t correct = 0;
    for (int64_t i = 0; i < data.size(); ++i)
        if (pred[static_cast<size_t>(i)] == data.labels[static_cast<size_t>(i)]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

double attacked_accuracy(const Model& model, const Dataset& data, float epsilon,
                         const AttackConfig* base) {
    AttackConfig cfg = base ? *base : AttackConfig{};
    cfg.epsilon = epsilon;
    const AdvBatch batch = fgsm_batch(model, data, cfg);
    const std::vector<int> pred = predict(model, batch.x_adv);
    int64_t correct = 0;
    for (int64_t i = 0; i < data.size(); ++i)
        if (pred[static_cast<size_t>(i)] == data.labels[static_cast<size_t>(i)]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::string pct(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
    return buf;
}

std::string format_epsilon(float e) {
    std::ostringstream os;
    os << e;
    return os.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    cells.push_back(cur);
    return cells;
}

json report_to_json(const RobustnessReport& r) {
    json j;
    j["dataset"] = r.dataset;
    j["epsilon"] = r.epsilon;
    j["clean_acc"] = r.clean_acc * 100.0;
    j["attacked_acc"] = r.attacked_acc * 100.0;
    j["reduction"] = r.reduction * 100.0;
    if (r.defended_attacked_acc)
        j["defended_attacked_acc"] = *r.defended_attacked_acc * 100.0;
    else
        j["defended_attacked_acc"] = nullptr;
    j["samples"] = r.samples;
    j["seed"] = r.seed;
    return j;
}

RobustnessReport report_from_json(const json& j) {
    RobustnessReport r;
    r.dataset = j.at("dataset");
    r.epsilon = j.at("epsilon");
    r.clean_acc = j.at("clean_acc").get<double>() / 100.0;
    r.attacked_acc = j.at("attacked_acc").get<double>() / 100.0;
    r.reduction = j.at("reduction").get<double>() / 100.0;
    if (!j.at("defended_attacked_acc").is_null())
        r.defended_attacked_acc = j.at("defended_attacked_acc").get<double>() / 100.0;
    r.samples = j.value("samples", int64_t(0));
    r.seed = j.value("seed", uint32_t(0));
    return r;
}

}  // namespace

RobustnessReport robustness_report(const Model& plain, const Model* defended, const Dataset& data,
                                   float epsilon, uint32_t seed, const AttackConfig* attack_base) {
    if (epsilon < 0.0f) throw ReportError("robustness_report: epsilon must be >= 0");
    RobustnessReport r;
    r.dataset = data.name.empty() ? "dataset" : data.name;
    r.epsilon = epsilon;
    r.samples = data.size();
    r.seed = seed;
    r.clean_acc = accuracy(plain, data);
    r.attacked_acc = attacked_accuracy(plain, data, epsilon, attack_base);
    r.reduction = r.clean_acc - r.attacked_acc;
    if (defended) r.defended_attacked_acc = attacked_accuracy(*defended, data, epsilon, attack_base);
    return r;
}

ReportFormat report_format_for_path(const std::string& path) {
    const auto dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    if (ext == "csv") return ReportFormat::Csv;
    if (ext == "json") return ReportFormat::Json;
    throw ReportError(path + ": unknown report format (use .csv or .json)");
}

void export_reports(const std::vector<RobustnessReport>& reports, ReportFormat format,
                    const std::string& path) {
    if (format == ReportFormat::Csv) {
        std::ostringstream os;
        os << "dataset,epsilon,clean_acc,attacked_acc,reduction,defended_attacked_acc\n";
        for (const RobustnessReport& r : reports) {
            os << r.dataset << ',' << format_epsilon(r.epsilon) << ',' << pct(r.clean_acc) << ','
               << pct(r.attacked_acc) << ',' << pct(r.reduction) << ','
               << (r.defended_attacked_acc ? pct(*r.defended_attacked_acc) : "") << "\n";
        }
        write_file_atomic(path, os.str());
        return;
    }
    json j = json::array();
    for (const RobustnessReport& r : reports) j.push_back(report_to_json(r));
    write_file_atomic(path, j.dump(2) + "\n");
}

std::vector<RobustnessReport> import_reports(const std::string& path, ReportFormat format) {
    const std::string bytes = read_file(path);
    std::vector<RobustnessReport> out;
    if (format == ReportFormat::Json) {
        json j;
        try {
            j = json::parse(bytes);
        } catch (const json::exception& e) {
            throw ReportError(path + ": " + e.what());
        }
        if (j.is_object()) {
            out.push_back(report_from_json(j));
        } else {
            for (const json& item : j) out.push_back(report_from_json(item));
        }
        return out;
    }
    std::istringstream in(bytes);
    std::string line;
    if (!std::getline(in, line)) throw ReportError(path + ": empty csv");
    if (split_csv_line(line) !=
        std::vector<std::string>{"dataset", "epsilon", "clean_acc", "attacked_acc", "reduction",
                                 "defended_attacked_acc"})
        throw ReportError(path + ": unexpected csv header '" + line + "'");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 6) throw ReportError(path + ": bad csv row '" + line + "'");
        RobustnessReport r;
        r.dataset = cells[0];
        r.epsilon = std::stof(cells[1]);
        r.clean_acc = std::stod(cells[2]) / 100.0;
        r.attacked_acc = std::stod(cells[3]) / 100.0;
        r.reduction = std::stod(cells[4]) / 100.0;
        if (!cells[5].empty()) r.defended_attacked_acc = std::stod(cells[5]) / 100.0;
        out.push_back(r);
    }
    return out;
}

namespace {

unsigned char to_byte(float raw) {
    const float r = std::round(raw);
    return static_cast<unsigned char>(std::min(255.0f, std::max(0.0f, r)));
}

void write_image(const Tensor& x, const Normalization& norm, const std::string& path) {
    const int c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (c != 1 && c != 3)
        throw ReportError(path + ": image dumps support 1 or 3 channels, got " +
                          std::to_string(c));
    std::string out;
    out += (c == 1) ? "P5\n" : "P6\n";
    out += std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    const int64_t plane = static_cast<int64_t>(h) * w;
    for (int64_t p = 0; p < plane; ++p)
        for (int ch = 0; ch < c; ++ch)
            out += static_cast<char>(to_byte(denormalize_pixel(x[ch * plane + p], norm, ch)));
    write_file_atomic(path, out);
}

}  // namespace

void dump_image_pair(const Tensor& x, const Tensor& x_adv, int pred_clean, int pred_adv,
                     const std::vector<std::string>& class_names, const Normalization& norm,
                     const std::string& path_prefix) {
    if (!x.same_shape(x_adv))
        throw ReportError("dump_image_pair: clean " + x.shape_str() + " vs adversarial " +
                          x_adv.shape_str());
    if (x.rank() != 4 || x.dim(0) != 1)
        throw ReportError("dump_image_pair: expected a single (1,C,H,W) sample");
    const std::string ext = x.dim(1) == 1 ? ".pgm" : ".ppm";
    write_image(x, norm, path_prefix + "_clean" + ext);
    write_image(x_adv, norm, path_prefix + "_adv" + ext);

    auto name_of = [&](int k) {
        return (k >= 0 && k < static_cast<int>(class_names.size())) ? class_names[(size_t)k]
                                                                    : std::to_string(k);
    };
    std::ostringstream os;
    os << "prediction_before: " << name_of(pred_clean) << "\n"
       << "prediction_after: " << name_of(pred_adv) << "\n"
       << "flipped: " << (pred_clean != pred_adv ? "yes" : "no") << "\n";
    write_file_atomic(path_prefix + "_labels.txt", os.str());
}

}  // namespace advgrad
