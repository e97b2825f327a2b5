#include "advgrad/model.h"

#include <bit>
#include <cmath>
#include <cstring>

#include "advgrad/util.h"
#include "json.hpp"

namespace advgrad {

using nlohmann::json;

LayerSpec LayerSpec::conv(int filters, int kernel, bool relu) {
    LayerSpec s;
    s.kind = LayerKind::Conv;
    s.filters = filters;
    s.kernel = kernel;
    s.relu = relu;
    return s;
}
LayerSpec LayerSpec::maxpool(int pool) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool;
    s.pool = pool;
    return s;
}
LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
}
LayerSpec LayerSpec::dense(int neurons, bool relu) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.neurons = neurons;
    s.relu = relu;
    return s;
}
LayerSpec LayerSpec::dropout(float rate) {
    LayerSpec s;
    s.kind = LayerKind::Dropout;
    s.rate = rate;
    return s;
}
LayerSpec LayerSpec::softmax() {
    LayerSpec s;
    s.kind = LayerKind::Softmax;
    return s;
}

std::string layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv: return "conv";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Dense: return "dense";
        case LayerKind::Dropout: return "dropout";
        case LayerKind::Softmax: return "softmax";
    }
    return "?";
}

std::string head_name(HeadVariant head) {
    return head == HeadVariant::SmallK ? "small_K" : "large_K";
}

ModelConfig ModelConfig::grayscale_default(int classes, int height, int width, uint32_t seed) {
    ModelConfig c;
    c.channels = 1;
    c.height = height;
    c.width = width;
    c.classes = classes;
    c.head = HeadVariant::SmallK;
    c.seed = seed;
    c.layers = {LayerSpec::conv(32, 3), LayerSpec::maxpool(2),  LayerSpec::conv(64, 3),
                LayerSpec::maxpool(2),  LayerSpec::flatten(),   LayerSpec::dense(128, true),
                LayerSpec::dense(classes, false), LayerSpec::softmax()};
    return c;
}

ModelConfig ModelConfig::color_default(int channels, int classes, int height, int width,
                                       uint32_t seed) {
    ModelConfig c;
    c.channels = channels;
    c.height = height;
    c.width = width;
    c.classes = classes;
    c.head = HeadVariant::LargeK;
    c.seed = seed;
    c.layers = {LayerSpec::conv(32, 3),  LayerSpec::maxpool(2),      LayerSpec::conv(64, 3),
                LayerSpec::maxpool(2),   LayerSpec::conv(128, 3),    LayerSpec::flatten(),
                LayerSpec::dense(256, true), LayerSpec::dropout(0.5f), LayerSpec::dense(128, true),
                LayerSpec::dense(classes, false), LayerSpec::softmax()};
    return c;
}

namespace {

struct ParamEntry {
    std::string name;
    std::vector<int> shape;
    int fan_in = 0;  // 0 for biases
};

std::string layer_tag(LayerKind kind, int ordinal) {
    return layer_kind_name(kind) + std::to_string(ordinal);
}

}  // namespace

std::vector<std::pair<std::string, std::vector<int>>> shape_trace(const ModelConfig& config) {
    std::vector<std::pair<std::string, std::vector<int>>> trace;
    int c = config.channels, h = config.height, w = config.width;
    bool flat = false;
    int64_t d = 0;
    trace.push_back({"input", {c, h, w}});
    int conv_i = 0, pool_i = 0, dense_i = 0, drop_i = 0;
    for (size_t li = 0; li < config.layers.size(); ++li) {
        const LayerSpec& l = config.layers[li];
        switch (l.kind) {
            case LayerKind::Conv: {
                ++conv_i;
                const std::string tag = layer_tag(l.kind, conv_i);
                if (flat) throw ModelError(tag + ": conv after flatten");
                if (l.filters < 1 || l.kernel < 1)
                    throw ModelError(tag + ": needs positive filters and kernel");
                if (l.kernel > h || l.kernel > w)
                    throw ModelError(tag + ": kernel " + std::to_string(l.kernel) +
                                     " larger than input " + std::to_string(h) + "x" +
                                     std::to_string(w));
                c = l.filters;
                h = h - l.kernel + 1;
                w = w - l.kernel + 1;
                trace.push_back({tag, {c, h, w}});
                break;
            }
            case LayerKind::MaxPool: {
                ++pool_i;
                const std::string tag = layer_tag(l.kind, pool_i);
                if (flat) throw ModelError(tag + ": maxpool after flatten");
                if (l.pool < 1) throw ModelError(tag + ": pool size must be positive");
                if (h / l.pool < 1 || w / l.pool < 1)
                    throw ModelError(tag + ": pool " + std::to_string(l.pool) +
                                     " exceeds extent " + std::to_string(h) + "x" +
                                     std::to_string(w));
                h /= l.pool;  // forward crops the remainder rows/cols first
                w /= l.pool;
                trace.push_back({tag, {c, h, w}});
                break;
            }
            case LayerKind::Flatten: {
                if (flat) throw ModelError("flatten: appears twice");
                flat = true;
                d = static_cast<int64_t>(c) * h * w;
                if (d < 1) throw ModelError("flatten: empty feature map");
                trace.push_back({"flatten", {static_cast<int>(d)}});
                break;
            }
            case LayerKind::Dense: {
                ++dense_i;
                const std::string tag = layer_tag(l.kind, dense_i);
                if (!flat) throw ModelError(tag + ": dense before flatten");
                if (l.neurons < 1) throw ModelError(tag + ": needs positive neuron count");
                d = l.neurons;
                trace.push_back({tag, {static_cast<int>(d)}});
                break;
            }
            case LayerKind::Dropout: {
                ++drop_i;
                const std::string tag = layer_tag(l.kind, drop_i);
                if (l.rate < 0.0f || l.rate >= 1.0f)
                    throw ModelError(tag + ": rate must be in [0,1)");
                trace.push_back({tag, flat ? std::vector<int>{static_cast<int>(d)}
                                           : std::vector<int>{c, h, w}});
                break;
            }
            case LayerKind::Softmax: {
                if (!flat) throw ModelError("softmax: requires flattened features");
                if (li + 1 != config.layers.size()) throw ModelError("softmax: must be the last layer");
                trace.push_back({"softmax", {static_cast<int>(d)}});
                break;
            }
        }
    }
    return trace;
}

namespace {

void validate_config(const ModelConfig& config) {
    if (config.classes < 1) throw ModelError("config: class count must be positive");
    if (config.channels < 1 || config.height < 1 || config.width < 1)
        throw ModelError("config: input shape must be positive");
    if (config.layers.empty()) throw ModelError("config: no layers");
    if (config.layers.back().kind != LayerKind::Softmax)
        throw ModelError("config: last layer must be softmax");

    // The dense feeding softmax is the output layer and must emit K logits.
    int output_dense = -1;
    for (int i = static_cast<int>(config.layers.size()) - 2; i >= 0; --i) {
        if (config.layers[static_cast<size_t>(i)].kind == LayerKind::Dense) {
            output_dense = i;
            break;
        }
        if (config.layers[static_cast<size_t>(i)].kind != LayerKind::Dropout)
            throw ModelError("config: softmax must follow the output dense layer");
    }
    if (output_dense < 0) throw ModelError("config: no output dense layer");
    const LayerSpec& out = config.layers[static_cast<size_t>(output_dense)];
    if (out.neurons != config.classes)
        throw ModelError("config: output dense has " + std::to_string(out.neurons) +
                         " neurons, expected K=" + std::to_string(config.classes));
    if (out.relu) throw ModelError("config: output dense must not apply relu");

    int hidden_dense = 0, dropouts = 0;
    for (int i = 0; i < output_dense; ++i) {
        if (config.layers[static_cast<size_t>(i)].kind == LayerKind::Dense) ++hidden_dense;
        if (config.layers[static_cast<size_t>(i)].kind == LayerKind::Dropout) ++dropouts;
    }
    if (config.head == HeadVariant::SmallK) {
        if (hidden_dense != 1)
            throw ModelError("config: small_K head needs exactly one pre-output dense layer, got " +
                             std::to_string(hidden_dense));
    } else {
        if (hidden_dense != 2)
            throw ModelError("config: large_K head needs two pre-output dense layers, got " +
                             std::to_string(hidden_dense));
        if (dropouts < 1) throw ModelError("config: large_K head needs a dropout layer");
    }
    shape_trace(config);  // throws on any shape inconsistency
}

std::vector<ParamEntry> param_layout(const ModelConfig& config) {
    std::vector<ParamEntry> out;
    int c = config.channels, h = config.height, w = config.width;
    int64_t d = 0;
    int conv_i = 0, dense_i = 0;
    for (const LayerSpec& l : config.layers) {
        switch (l.kind) {
            case LayerKind::Conv: {
                ++conv_i;
                const std::string tag = layer_tag(l.kind, conv_i);
                out.push_back({tag + ".weight", {l.filters, c, l.kernel, l.kernel},
                               c * l.kernel * l.kernel});
                out.push_back({tag + ".bias", {l.filters}, 0});
                c = l.filters;
                h = h - l.kernel + 1;
                w = w - l.kernel + 1;
                break;
            }
            case LayerKind::MaxPool:
                h /= l.pool;
                w /= l.pool;
                break;
            case LayerKind::Flatten:
                d = static_cast<int64_t>(c) * h * w;
                break;
            case LayerKind::Dense: {
                ++dense_i;
                const std::string tag = layer_tag(l.kind, dense_i);
                out.push_back({tag + ".weight", {static_cast<int>(d), l.neurons},
                               static_cast<int>(d)});
                out.push_back({tag + ".bias", {l.neurons}, 0});
                d = l.neurons;
                break;
            }
            case LayerKind::Dropout:
            case LayerKind::Softmax:
                break;
        }
    }
    return out;
}

}  // namespace

int64_t Model::param_count() const {
    int64_t n = 0;
    for (const Tensor& p : params) n += p.size();
    return n;
}

Model build_model(const ModelConfig& config) {
    validate_config(config);
    Model m;
    m.config = config;
    Rng rng(mix_seed(config.seed, 0x1417));
    for (const ParamEntry& e : param_layout(config)) {
        Tensor t = Tensor::zeros(e.shape);
        if (e.fan_in > 0) {
            const float sd = std::sqrt(2.0f / static_cast<float>(e.fan_in));
            for (int64_t i = 0; i < t.size(); ++i)
                t[i] = sd * static_cast<float>(rng.normal());
        }
        t.requires_grad = true;
        m.param_names.push_back(e.name);
        m.params.push_back(std::move(t));
    }
    return m;
}

GraphForward forward_on(const Model& model, Graph& g, NodeId input, bool training,
                        Rng* dropout_rng) {
    const Tensor& batch = g.value(input);
    const ModelConfig& cfg = model.config;
    if (batch.rank() != 4 || batch.dim(1) != cfg.channels || batch.dim(2) != cfg.height ||
        batch.dim(3) != cfg.width)
        throw ModelError("forward: batch " + batch.shape_str() + " does not match input (n," +
                         std::to_string(cfg.channels) + "," + std::to_string(cfg.height) + "," +
                         std::to_string(cfg.width) + ")");
    GraphForward out;
    out.input = input;
    out.param_nodes.reserve(model.params.size());
    for (const Tensor& p : model.params) out.param_nodes.push_back(g.leaf(p));

    NodeId cur = input;
    size_t pi = 0;
    const int n = batch.dim(0);
    for (const LayerSpec& l : cfg.layers) {
        switch (l.kind) {
            case LayerKind::Conv: {
                const NodeId wn = out.param_nodes[pi++];
                const NodeId bn = out.param_nodes[pi++];
                cur = g.conv2d(cur, wn, bn, 1, 0);
                if (l.relu) cur = g.relu(cur);
                break;
            }
            case LayerKind::MaxPool: {
                const Tensor& v = g.value(cur);
                const int h = v.dim(2), w = v.dim(3);
                if (h % l.pool || w % l.pool)
                    cur = g.crop2d(cur, (h / l.pool) * l.pool, (w / l.pool) * l.pool);
                cur = g.maxpool2d(cur, l.pool);
                break;
            }
            case LayerKind::Flatten: {
                const Tensor& v = g.value(cur);
                cur = g.reshape(cur, {n, static_cast<int>(v.size() / n)});
                break;
            }
            case LayerKind::Dense: {
                const NodeId wn = out.param_nodes[pi++];
                const NodeId bn = out.param_nodes[pi++];
                cur = g.affine(cur, wn, bn);
                if (l.relu) cur = g.relu(cur);
                break;
            }
            case LayerKind::Dropout:
                if (training && l.rate > 0.0f) {
                    if (!dropout_rng)
                        throw ModelError("forward: training with dropout needs an rng");
                    cur = g.dropout(cur, l.rate, *dropout_rng);
                }
                break;
            case LayerKind::Softmax:
                cur = g.softmax(cur);
                break;
        }
    }
    out.probs = cur;
    return out;
}

GraphForward forward_graph(const Model& model, Graph& g, const Tensor& batch, bool training,
                           Rng* dropout_rng) {
    return forward_on(model, g, g.input(batch), training, dropout_rng);
}

Tensor forward(const Model& model, const Tensor& batch, bool training, Rng* dropout_rng) {
    Graph g;
    const GraphForward f = forward_graph(model, g, batch, training, dropout_rng);
    return g.value(f.probs);
}

std::vector<int> predict(const Model& model, const Tensor& batch) {
    if (batch.rank() != 4) throw ModelError("predict: expected (n,C,H,W) batch");
    const int n = batch.dim(0);
    const int64_t per = batch.size() / std::max(n, 1);
    std::vector<int> out(static_cast<size_t>(n));
    const int chunk = 512;  // bounds activation memory on large batches
    for (int start = 0; start < n; start += chunk) {
        const int count = std::min(chunk, n - start);
        Tensor part = Tensor::uninit({count, batch.dim(1), batch.dim(2), batch.dim(3)});
        std::copy(batch.data() + start * per, batch.data() + (start + count) * per, part.data());
        const Tensor probs = forward(model, part, false);
        const int k = probs.dim(1);
        for (int i = 0; i < count; ++i) {
            int best = 0;
            for (int j = 1; j < k; ++j)
                if (probs[(int64_t)i * k + j] > probs[(int64_t)i * k + best]) best = j;
            out[static_cast<size_t>(start + i)] = best;
        }
    }
    return out;
}

namespace {

constexpr char kMagic[4] = {'A', 'D', 'V', 'G'};
constexpr uint32_t kVersion = 1;

json layer_to_json(const LayerSpec& l) {
    json j;
    j["kind"] = layer_kind_name(l.kind);
    switch (l.kind) {
        case LayerKind::Conv:
            j["filters"] = l.filters;
            j["kernel"] = l.kernel;
            j["relu"] = l.relu;
            break;
        case LayerKind::MaxPool:
            j["pool"] = l.pool;
            break;
        case LayerKind::Dense:
            j["neurons"] = l.neurons;
            j["relu"] = l.relu;
            break;
        case LayerKind::Dropout:
            j["rate"] = l.rate;
            break;
        default:
            break;
    }
    return j;
}

LayerSpec layer_from_json(const json& j) {
    const std::string kind = j.at("kind");
    if (kind == "conv") return LayerSpec::conv(j.at("filters"), j.at("kernel"), j.at("relu"));
    if (kind == "maxpool") return LayerSpec::maxpool(j.at("pool"));
    if (kind == "flatten") return LayerSpec::flatten();
    if (kind == "dense") return LayerSpec::dense(j.at("neurons"), j.at("relu"));
    if (kind == "dropout") return LayerSpec::dropout(j.at("rate"));
    if (kind == "softmax") return LayerSpec::softmax();
    throw ModelError("config: unknown layer kind '" + kind + "'");
}

json config_to_json(const ModelConfig& c) {
    json j;
    j["input"] = {c.channels, c.height, c.width};
    j["classes"] = c.classes;
    j["head"] = head_name(c.head);
    j["seed"] = c.seed;
    j["layers"] = json::array();
    for (const LayerSpec& l : c.layers) j["layers"].push_back(layer_to_json(l));
    switch (c.normalization.mode) {
        case NormMode::None:
            j["normalization"] = {{"mode", "none"}};
            break;
        case NormMode::Div255:
            j["normalization"] = {{"mode", "div255"}};
            break;
        case NormMode::Standardized:
            j["normalization"] = {{"mode", "standardize"},
                                  {"mean", c.normalization.mean},
                                  {"std", c.normalization.stdev}};
            break;
    }
    return j;
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.channels = j.at("input").at(0);
    c.height = j.at("input").at(1);
    c.width = j.at("input").at(2);
    c.classes = j.at("classes");
    const std::string head = j.at("head");
    if (head == "small_K")
        c.head = HeadVariant::SmallK;
    else if (head == "large_K")
        c.head = HeadVariant::LargeK;
    else
        throw ModelError("config: unknown head '" + head + "'");
    c.seed = j.at("seed");
    for (const json& lj : j.at("layers")) c.layers.push_back(layer_from_json(lj));
    const json& nj = j.at("normalization");
    const std::string mode = nj.at("mode");
    if (mode == "none") {
        c.normalization.mode = NormMode::None;
    } else if (mode == "div255") {
        c.normalization.mode = NormMode::Div255;
    } else if (mode == "standardize") {
        c.normalization.mode = NormMode::Standardized;
        c.normalization.mean = nj.at("mean").get<std::vector<float>>();
        c.normalization.stdev = nj.at("std").get<std::vector<float>>();
    } else {
        throw ModelError("config: unknown normalization mode '" + mode + "'");
    }
    return c;
}

class Cursor {
public:
    Cursor(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

    const char* take(size_t n) {
        if (pos_ + n > bytes_.size())
            throw ModelError(path_ + ": truncated, expected " + std::to_string(pos_ + n) +
                             " bytes, file has " + std::to_string(bytes_.size()));
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    uint32_t u32() {
        const unsigned char* p = reinterpret_cast<const unsigned char*>(take(4));
        return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) |
               (uint32_t(p[3]) << 24);
    }
    bool done() const { return pos_ == bytes_.size(); }
    size_t pos() const { return pos_; }

private:
    const std::string& bytes_;
    std::string path_;
    size_t pos_ = 0;
};

}  // namespace

void save_model(const Model& model, const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    append_u32_le(out, kVersion);
    const std::string cfg = config_to_json(model.config).dump();
    append_u32_le(out, static_cast<uint32_t>(cfg.size()));
    out += cfg;
    for (size_t i = 0; i < model.params.size(); ++i) {
        const std::string& name = model.param_names[i];
        const Tensor& t = model.params[i];
        append_u32_le(out, static_cast<uint32_t>(name.size()));
        out += name;
        append_u32_le(out, static_cast<uint32_t>(t.rank()));
        for (int dmi = 0; dmi < t.rank(); ++dmi)
            append_u32_le(out, static_cast<uint32_t>(t.dim(dmi)));
        for (int64_t v = 0; v < t.size(); ++v) append_f32_le(out, t[v]);
    }
    write_file_atomic(path, out);
}

Model load_model(const std::string& path) {
    const std::string bytes = read_file(path);
    Cursor cur(bytes, path);
    const char* magic = cur.take(4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw ModelError(path + ": bad magic, not a model file");
    const uint32_t version = cur.u32();
    if (version != kVersion)
        throw ModelError(path + ": unsupported version " + std::to_string(version));
    const uint32_t cfg_len = cur.u32();
    const char* cfg_bytes = cur.take(cfg_len);
    ModelConfig config;
    try {
        config = config_from_json(json::parse(std::string(cfg_bytes, cfg_len)));
    } catch (const json::exception& e) {
        throw ModelError(path + ": bad config block: " + e.what());
    }
    validate_config(config);

    Model m;
    m.config = config;
    const auto layout = param_layout(config);
    for (const ParamEntry& e : layout) {
        const uint32_t name_len = cur.u32();
        const std::string name(cur.take(name_len), name_len);
        if (name != e.name)
            throw ModelError(path + ": parameter '" + name + "', expected '" + e.name + "'");
        const uint32_t rank = cur.u32();
        std::vector<int> dims(rank);
        for (auto& dmi : dims) dmi = static_cast<int>(cur.u32());
        if (dims != e.shape)
            throw ModelError(path + ": parameter '" + name + "' has unexpected shape");
        const int64_t count = shape_size(dims);
        Tensor t = Tensor::uninit(dims);
        const char* data = cur.take(static_cast<size_t>(count) * 4);
        for (int64_t i = 0; i < count; ++i) {
            const unsigned char* p = reinterpret_cast<const unsigned char*>(data + i * 4);
            const uint32_t u = uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) |
                               (uint32_t(p[3]) << 24);
            t[i] = std::bit_cast<float>(u);
        }
        t.requires_grad = true;
        m.param_names.push_back(e.name);
        m.params.push_back(std::move(t));
    }
    if (!cur.done())
        throw ModelError(path + ": " + std::to_string(bytes.size() - cur.pos()) +
                         " trailing bytes after parameters");
    return m;
}

}  // namespace advgrad
