#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "advgrad/data.h"
#include "advgrad/graph.h"
#include "advgrad/tensor.h"

namespace advgrad {

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class LayerKind { Conv, MaxPool, Flatten, Dense, Dropout, Softmax };

struct LayerSpec {
    LayerKind kind = LayerKind::Conv;
    int filters = 0;     // conv
    int kernel = 0;      // conv
    bool relu = false;   // conv/dense activation
    int pool = 0;        // maxpool
    int neurons = 0;     // dense
    float rate = 0.0f;   // dropout

    static LayerSpec conv(int filters, int kernel, bool relu = true);
    static LayerSpec maxpool(int pool);
    static LayerSpec flatten();
    static LayerSpec dense(int neurons, bool relu);
    static LayerSpec dropout(float rate);
    static LayerSpec softmax();
};

enum class HeadVariant { SmallK, LargeK };

struct ModelConfig {
    int channels = 1, height = 28, width = 28;
    int classes = 10;
    HeadVariant head = HeadVariant::SmallK;
    uint32_t seed = 0;
    std::vector<LayerSpec> layers;
    Normalization normalization;  // stats the model was trained with

    /// conv(32,3)-pool(2)-conv(64,3)-pool(2)-flatten-dense(128)-dense(K)-softmax
    static ModelConfig grayscale_default(int classes, int height, int width, uint32_t seed);
    /// conv(32,3)-pool(2)-conv(64,3)-pool(2)-conv(128,3)-flatten-dense(256)-
    /// dropout(0.5)-dense(128)-dense(K)-softmax
    static ModelConfig color_default(int channels, int classes, int height, int width,
                                     uint32_t seed);
};

struct Model {
    ModelConfig config;
    std::vector<std::string> param_names;
    std::vector<Tensor> params;  // requires_grad set on all
    bool training = false;

    int64_t param_count() const;
};

/// Per-layer output shapes, starting from the input shape. Entry 0 is the
/// input; pooling of a non-divisible extent appears as its floored result
/// (the forward pass crops before pooling).
std::vector<std::pair<std::string, std::vector<int>>> shape_trace(const ModelConfig& config);

/// Validates the layer stack, allocates parameters, and initializes them
/// (He-style fan-in scaling, zero biases) from config.seed.
Model build_model(const ModelConfig& config);

struct GraphForward {
    NodeId probs;
    NodeId input;
    std::vector<NodeId> param_nodes;  // aligned with model.params
};

/// Records the full forward pass on an existing graph input node.
GraphForward forward_on(const Model& model, Graph& g, NodeId input, bool training,
                        Rng* dropout_rng = nullptr);
/// Same, creating the input node from a batch tensor.
GraphForward forward_graph(const Model& model, Graph& g, const Tensor& batch, bool training,
                           Rng* dropout_rng = nullptr);

/// Class probabilities (n,K) for a batch.
Tensor forward(const Model& model, const Tensor& batch, bool training = false,
               Rng* dropout_rng = nullptr);

/// Argmax class per row; ties go to the lowest index.
std::vector<int> predict(const Model& model, const Tensor& batch);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

std::string head_name(HeadVariant head);
std::string layer_kind_name(LayerKind kind);

}  // namespace advgrad
