#include "advgrad/graph.h"

#include <cmath>
#include <cstring>
#include <string>

#include "advgrad/kernels.h"

namespace advgrad {

namespace {

void add_into(Tensor& dst, const Tensor& src) {
    float* d = dst.data();
    const float* s = src.data();
    const int64_t n = dst.size();
    for (int64_t i = 0; i < n; ++i) d[i] += s[i];
}

kernels::ConvDims conv_dims_of(const Tensor& in, const Tensor& kern, int stride, int pad) {
    return kernels::conv_dims(in.dim(0), in.dim(1), in.dim(2), in.dim(3), kern.dim(0),
                              kern.dim(2), stride, pad);
}

void check_onehot(const Tensor& onehot) {
    const int n = onehot.dim(0), k = onehot.dim(1);
    for (int i = 0; i < n; ++i) {
        int ones = 0;
        for (int j = 0; j < k; ++j) {
            const float v = onehot[(int64_t)i * k + j];
            if (v == 1.0f)
                ++ones;
            else if (v != 0.0f)
                throw GraphError("cross_entropy: row " + std::to_string(i) +
                                 " is not one-hot (entry " + std::to_string(v) + ")");
        }
        if (ones != 1)
            throw GraphError("cross_entropy: row " + std::to_string(i) + " has " +
                             std::to_string(ones) + " ones");
    }
}

}  // namespace

const Node& Graph::node(NodeId id) const {
    check_id(id);
    return nodes_[static_cast<size_t>(id)];
}

void Graph::check_id(NodeId id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
        throw GraphError("invalid node id " + std::to_string(id));
}

NodeId Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::leaf(Tensor t) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(t);
    return push(std::move(n));
}

NodeId Graph::input(Tensor t) {
    if (input_) throw GraphError("graph already has a designated input");
    const NodeId id = leaf(std::move(t));
    input_ = id;
    return id;
}

NodeId Graph::conv2d(NodeId in, NodeId kernels_id, NodeId bias, int stride, int padding) {
    const Tensor& x = value(in);
    const Tensor& k = value(kernels_id);
    const Tensor& b = value(bias);
    if (x.rank() != 4 || k.rank() != 4)
        throw GraphError("conv2d: expected rank-4 input and kernels, got " + x.shape_str() +
                         " and " + k.shape_str());
    if (x.dim(1) != k.dim(1))
        throw GraphError("conv2d: input channels " + std::to_string(x.dim(1)) +
                         " != kernel channels " + std::to_string(k.dim(1)));
    if (k.dim(2) != k.dim(3)) throw GraphError("conv2d: kernels must be square");
    if (b.size() != k.dim(0)) throw GraphError("conv2d: bias size != filter count");
    const auto d = conv_dims_of(x, k, stride, padding);
    Node n;
    n.op = Op::Conv2d;
    n.inputs = {in, kernels_id, bias};
    n.stride = stride;
    n.pad = padding;
    n.value = Tensor::uninit({d.n, d.f, d.out_h, d.out_w});
    kernels::conv2d_forward(x.data(), k.data(), b.data(), n.value.data(), d);
    return push(std::move(n));
}

NodeId Graph::maxpool2d(NodeId in, int pool) {
    const Tensor& x = value(in);
    if (pool <= 0) throw GraphError("maxpool2d: pool must be positive, got " + std::to_string(pool));
    if (x.rank() != 4) throw GraphError("maxpool2d: expected rank-4 input, got " + x.shape_str());
    if (x.dim(2) % pool || x.dim(3) % pool)
        throw GraphError("maxpool2d: extent " + std::to_string(x.dim(2)) + "x" +
                         std::to_string(x.dim(3)) + " not divisible by pool " +
                         std::to_string(pool));
    Node n;
    n.op = Op::MaxPool2d;
    n.inputs = {in};
    n.pool = pool;
    n.value = Tensor::uninit({x.dim(0), x.dim(1), x.dim(2) / pool, x.dim(3) / pool});
    n.argmax.resize(static_cast<size_t>(n.value.size()));
    kernels::maxpool_forward(x.data(), n.value.data(), n.argmax.data(), x.dim(0), x.dim(1),
                             x.dim(2), x.dim(3), pool);
    return push(std::move(n));
}

NodeId Graph::crop2d(NodeId in, int new_h, int new_w) {
    const Tensor& x = value(in);
    if (x.rank() != 4) throw GraphError("crop2d: expected rank-4 input");
    const int h = x.dim(2), w = x.dim(3);
    if (new_h <= 0 || new_h > h || new_w <= 0 || new_w > w)
        throw GraphError("crop2d: target " + std::to_string(new_h) + "x" + std::to_string(new_w) +
                         " outside input " + std::to_string(h) + "x" + std::to_string(w));
    Node n;
    n.op = Op::Crop2d;
    n.inputs = {in};
    n.crop_h = new_h;
    n.crop_w = new_w;
    n.value = Tensor::uninit({x.dim(0), x.dim(1), new_h, new_w});
    const int planes = x.dim(0) * x.dim(1);
    for (int p = 0; p < planes; ++p)
        for (int y = 0; y < new_h; ++y)
            std::memcpy(n.value.data() + ((int64_t)p * new_h + y) * new_w,
                        x.data() + ((int64_t)p * h + y) * w, sizeof(float) * (size_t)new_w);
    return push(std::move(n));
}

NodeId Graph::affine(NodeId in, NodeId weights, NodeId bias) {
    const Tensor& x = value(in);
    const Tensor& w = value(weights);
    const Tensor& b = value(bias);
    if (x.rank() != 2 || w.rank() != 2)
        throw GraphError("affine: expected rank-2 input and weights, got " + x.shape_str() +
                         " and " + w.shape_str());
    if (x.dim(1) != w.dim(0))
        throw GraphError("affine: inner dimensions " + std::to_string(x.dim(1)) + " and " +
                         std::to_string(w.dim(0)) + " do not match");
    if (b.size() != w.dim(1)) throw GraphError("affine: bias size != output width");
    Node n;
    n.op = Op::Affine;
    n.inputs = {in, weights, bias};
    n.value = Tensor::uninit({x.dim(0), w.dim(1)});
    kernels::matmul(x.data(), w.data(), n.value.data(), x.dim(0), x.dim(1), w.dim(1));
    kernels::add_row_bias(n.value.data(), b.data(), x.dim(0), w.dim(1));
    return push(std::move(n));
}

NodeId Graph::relu(NodeId in) {
    const Tensor& x = value(in);
    Node n;
    n.op = Op::Relu;
    n.inputs = {in};
    n.value = Tensor::uninit(x.shape());
    kernels::relu_forward(x.data(), n.value.data(), x.size());
    return push(std::move(n));
}

NodeId Graph::softmax(NodeId in) {
    const Tensor& x = value(in);
    if (x.rank() != 2 || x.dim(1) < 1)
        throw GraphError("softmax: expected (n,k) input with k >= 1, got " + x.shape_str());
    Node n;
    n.op = Op::Softmax;
    n.inputs = {in};
    n.value = Tensor::uninit(x.shape());
    kernels::softmax_rows(x.data(), n.value.data(), x.dim(0), x.dim(1));
    return push(std::move(n));
}

NodeId Graph::dropout(NodeId in, float rate, Rng& rng) {
    const Tensor& x = value(in);
    if (rate < 0.0f || rate >= 1.0f)
        throw GraphError("dropout: rate must be in [0,1), got " + std::to_string(rate));
    Node n;
    n.op = Op::Dropout;
    n.inputs = {in};
    n.mask = Tensor::uninit(x.shape());
    const float keep_scale = 1.0f / (1.0f - rate);
    for (int64_t i = 0; i < x.size(); ++i)
        n.mask[i] = (rng.uniform() >= rate) ? keep_scale : 0.0f;
    n.value = Tensor::uninit(x.shape());
    for (int64_t i = 0; i < x.size(); ++i) n.value[i] = x[i] * n.mask[i];
    return push(std::move(n));
}

NodeId Graph::reshape(NodeId in, std::vector<int> shape) {
    const Tensor& x = value(in);
    if (shape_size(shape) != x.size())
        throw GraphError("reshape: size mismatch " + x.shape_str());
    Node n;
    n.op = Op::Reshape;
    n.inputs = {in};
    n.value = Tensor(std::move(shape), x.values());
    return push(std::move(n));
}

NodeId Graph::cross_entropy(NodeId probs, NodeId onehot) {
    const Tensor& p = value(probs);
    const Tensor& y = value(onehot);
    if (p.rank() != 2 || !p.same_shape(y))
        throw GraphError("cross_entropy: probs " + p.shape_str() + " vs onehot " + y.shape_str());
    const int n = p.dim(0), k = p.dim(1);
    if (n == 0) throw GraphError("cross_entropy: empty batch");
    for (int i = 0; i < n; ++i) {
        float row = 0.0f;
        for (int j = 0; j < k; ++j) row += p[(int64_t)i * k + j];
        if (std::fabs(row - 1.0f) > 1e-5f)
            throw GraphError("cross_entropy: probs row " + std::to_string(i) + " sums to " +
                             std::to_string(row));
    }
    check_onehot(y);
    double total = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j)
            if (y[(int64_t)i * k + j] == 1.0f)
                total += -std::log(std::max((double)p[(int64_t)i * k + j], 1e-12));
    Node nd;
    nd.op = Op::CrossEntropy;
    nd.inputs = {probs, onehot};
    nd.value = Tensor({1}, {(float)(total / n)});
    return push(std::move(nd));
}

NodeId Graph::sum(NodeId in) {
    const Tensor& x = value(in);
    double total = 0;
    for (int64_t i = 0; i < x.size(); ++i) total += x[i];
    Node n;
    n.op = Op::Sum;
    n.inputs = {in};
    n.value = Tensor({1}, {(float)total});
    return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& xa = value(a);
    const Tensor& xb = value(b);
    if (!xa.same_shape(xb))
        throw GraphError("add: shape mismatch " + xa.shape_str() + " vs " + xb.shape_str());
    Node n;
    n.op = Op::Add;
    n.inputs = {a, b};
    n.value = Tensor::uninit(xa.shape());
    for (int64_t i = 0; i < xa.size(); ++i) n.value[i] = xa[i] + xb[i];
    return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
    const Tensor& xa = value(a);
    const Tensor& xb = value(b);
    if (!xa.same_shape(xb))
        throw GraphError("mul: shape mismatch " + xa.shape_str() + " vs " + xb.shape_str());
    Node n;
    n.op = Op::Mul;
    n.inputs = {a, b};
    n.value = Tensor::uninit(xa.shape());
    for (int64_t i = 0; i < xa.size(); ++i) n.value[i] = xa[i] * xb[i];
    return push(std::move(n));
}

NodeId Graph::scale(NodeId in, float factor) {
    const Tensor& x = value(in);
    Node n;
    n.op = Op::Scale;
    n.inputs = {in};
    n.scale_factor = factor;
    n.value = Tensor::uninit(x.shape());
    for (int64_t i = 0; i < x.size(); ++i) n.value[i] = x[i] * factor;
    return push(std::move(n));
}

Gradients Graph::backward(NodeId loss, bool want_input_grad) const {
    if (nodes_.empty()) throw GraphError("backward on empty graph");
    check_id(loss);
    const Tensor& loss_value = nodes_[(size_t)loss].value;
    if (loss_value.size() != 1)
        throw GraphError("backward: loss must be scalar, got " + loss_value.shape_str());
    if (want_input_grad && !input_)
        throw GraphError("backward: input gradient requested but no input was designated");

    std::vector<Tensor> grads(static_cast<size_t>(loss) + 1);
    std::vector<char> seen(static_cast<size_t>(loss) + 1, 0);
    auto buf = [&](NodeId id) -> Tensor& {
        if (!seen[(size_t)id]) {
            grads[(size_t)id] = Tensor::zeros(nodes_[(size_t)id].value.shape());
            seen[(size_t)id] = 1;
        }
        return grads[(size_t)id];
    };
    buf(loss)[0] = 1.0f;

    for (NodeId id = loss; id >= 0; --id) {
        if (!seen[(size_t)id]) continue;
        const Node& nd = nodes_[(size_t)id];
        const Tensor& g = grads[(size_t)id];
        switch (nd.op) {
            case Op::Leaf:
                break;
            case Op::Conv2d: {
                const Tensor& x = nodes_[(size_t)nd.inputs[0]].value;
                const Tensor& k = nodes_[(size_t)nd.inputs[1]].value;
                const auto d = conv_dims_of(x, k, nd.stride, nd.pad);
                Tensor t = Tensor::uninit(x.shape());
                kernels::conv2d_backward_input(g.data(), k.data(), t.data(), d);
                add_into(buf(nd.inputs[0]), t);
                Tensor tk = Tensor::uninit(k.shape());
                kernels::conv2d_backward_kernels(g.data(), x.data(), tk.data(), d);
                add_into(buf(nd.inputs[1]), tk);
                Tensor tb = Tensor::uninit({d.f});
                kernels::conv2d_backward_bias(g.data(), tb.data(), d);
                add_into(buf(nd.inputs[2]), tb);
                break;
            }
            case Op::MaxPool2d:
                kernels::maxpool_backward(g.data(), nd.argmax.data(), buf(nd.inputs[0]).data(),
                                          nd.value.size());
                break;
            case Op::Crop2d: {
                const Tensor& x = nodes_[(size_t)nd.inputs[0]].value;
                Tensor& gin = buf(nd.inputs[0]);
                const int h = x.dim(2), w = x.dim(3);
                const int planes = x.dim(0) * x.dim(1);
                for (int p = 0; p < planes; ++p)
                    for (int y = 0; y < nd.crop_h; ++y)
                        for (int xx = 0; xx < nd.crop_w; ++xx)
                            gin[((int64_t)p * h + y) * w + xx] +=
                                g[((int64_t)p * nd.crop_h + y) * nd.crop_w + xx];
                break;
            }
            case Op::Affine: {
                const Tensor& x = nodes_[(size_t)nd.inputs[0]].value;
                const Tensor& w = nodes_[(size_t)nd.inputs[1]].value;
                const int n = x.dim(0), d = x.dim(1), m = w.dim(1);
                Tensor t = Tensor::uninit(x.shape());
                kernels::matmul_a_bt(g.data(), w.data(), t.data(), n, d, m);
                add_into(buf(nd.inputs[0]), t);
                Tensor tw = Tensor::uninit(w.shape());
                kernels::matmul_at_b(x.data(), g.data(), tw.data(), n, d, m);
                add_into(buf(nd.inputs[1]), tw);
                Tensor tb = Tensor::uninit({m});
                kernels::col_sums(g.data(), tb.data(), n, m);
                add_into(buf(nd.inputs[2]), tb);
                break;
            }
            case Op::Relu: {
                const Tensor& x = nodes_[(size_t)nd.inputs[0]].value;
                Tensor t = Tensor::uninit(x.shape());
                kernels::relu_backward(g.data(), x.data(), t.data(), x.size());
                add_into(buf(nd.inputs[0]), t);
                break;
            }
            case Op::Softmax: {
                const Tensor& p = nd.value;
                Tensor t = Tensor::uninit(p.shape());
                kernels::softmax_backward_rows(g.data(), p.data(), t.data(), p.dim(0), p.dim(1));
                add_into(buf(nd.inputs[0]), t);
                break;
            }
            case Op::Dropout: {
                Tensor& gin = buf(nd.inputs[0]);
                for (int64_t i = 0; i < gin.size(); ++i) gin[i] += g[i] * nd.mask[i];
                break;
            }
            case Op::Reshape: {
                const Tensor& x = nodes_[(size_t)nd.inputs[0]].value;
                Tensor& gin = buf(nd.inputs[0]);
                for (int64_t i = 0; i < x.size(); ++i) gin[i] += g[i];
                break;
            }
            case Op::CrossEntropy: {
                const Tensor& p = nodes_[(size_t)nd.inputs[0]].value;
                const Tensor& y = nodes_[(size_t)nd.inputs[1]].value;
                const int n = p.dim(0), k = p.dim(1);
                Tensor& gin = buf(nd.inputs[0]);
                const float gs = g[0];
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < k; ++j) {
                        const int64_t at = (int64_t)i * k + j;
                        if (y[at] == 1.0f && p[at] > 1e-12f)
                            gin[at] += gs * (-1.0f / ((float)n * p[at]));
                    }
                break;
            }
            case Op::Sum: {
                Tensor& gin = buf(nd.inputs[0]);
                const float gs = g[0];
                for (int64_t i = 0; i < gin.size(); ++i) gin[i] += gs;
                break;
            }
            case Op::Add:
                add_into(buf(nd.inputs[0]), g);
                add_into(buf(nd.inputs[1]), g);
                break;
            case Op::Mul: {
                const Tensor& xa = nodes_[(size_t)nd.inputs[0]].value;
                const Tensor& xb = nodes_[(size_t)nd.inputs[1]].value;
                Tensor& ga = buf(nd.inputs[0]);
                for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * xb[i];
                Tensor& gb = buf(nd.inputs[1]);
                for (int64_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * xa[i];
                break;
            }
            case Op::Scale: {
                Tensor& gin = buf(nd.inputs[0]);
                for (int64_t i = 0; i < gin.size(); ++i) gin[i] += g[i] * nd.scale_factor;
                break;
            }
        }
    }

    Gradients out;
    for (NodeId id = 0; id <= loss; ++id) {
        const Node& nd = nodes_[(size_t)id];
        if (nd.op == Op::Leaf && nd.value.requires_grad) {
            out.by_parameter[id] =
                seen[(size_t)id] ? std::move(grads[(size_t)id]) : Tensor::zeros(nd.value.shape());
        }
    }
    if (want_input_grad) {
        const NodeId id = *input_;
        if (id > loss || !seen[(size_t)id])
            out.by_input = Tensor::zeros(nodes_[(size_t)id].value.shape());
        else if (out.by_parameter.count(id))
            out.by_input = out.by_parameter[id];
        else
            out.by_input = std::move(grads[(size_t)id]);
    }
    return out;
}

double Graph::replay_double(NodeId out, NodeId varied_leaf, const std::vector<double>& leaf_values) const {
    check_id(out);
    check_id(varied_leaf);
    if (nodes_[(size_t)varied_leaf].op != Op::Leaf)
        throw GraphError("replay: varied node is not a leaf");
    if (leaf_values.size() != (size_t)nodes_[(size_t)varied_leaf].value.size())
        throw GraphError("replay: leaf value count mismatch");
    if (nodes_[(size_t)out].value.size() != 1)
        throw GraphError("replay: output must be scalar");

    std::vector<std::vector<double>> vals(static_cast<size_t>(out) + 1);
    for (NodeId id = 0; id <= out; ++id) {
        const Node& nd = nodes_[(size_t)id];
        auto& v = vals[(size_t)id];
        switch (nd.op) {
            case Op::Leaf:
                if (id == varied_leaf) {
                    v = leaf_values;
                } else {
                    v.assign(nd.value.values().begin(), nd.value.values().end());
                }
                break;
            case Op::Conv2d: {
                const Tensor& x = nodes_[(size_t)nd.inputs[0]].value;
                const Tensor& k = nodes_[(size_t)nd.inputs[1]].value;
                const auto d = conv_dims_of(x, k, nd.stride, nd.pad);
                v.assign((size_t)nd.value.size(), 0.0);
                kernels::conv2d_forward(vals[(size_t)nd.inputs[0]].data(),
                                        vals[(size_t)nd.inputs[1]].data(),
                                        vals[(size_t)nd.inputs[2]].data(), v.data(), d);
                break;
            }
            case Op::MaxPool2d: {
                const Tensor& x = nodes_[(size_t)nd.inputs[0]].value;
                v.assign((size_t)nd.value.size(), 0.0);
                std::vector<int64_t> am((size_t)nd.value.size());
                kernels::maxpool_forward(vals[(size_t)nd.inputs[0]].data(), v.data(), am.data(),
                                         x.dim(0), x.dim(1), x.dim(2), x.dim(3), nd.pool);
                break;
            }
            case Op::Crop2d: {
                const Tensor& x = nodes_[(size_t)nd.inputs[0]].value;
                const auto& src = vals[(size_t)nd.inputs[0]];
                const int h = x.dim(2), w = x.dim(3);
                const int planes = x.dim(0) * x.dim(1);
                v.resize((size_t)nd.value.size());
                for (int p = 0; p < planes; ++p)
                    for (int y = 0; y < nd.crop_h; ++y)
                        for (int xx = 0; xx < nd.crop_w; ++xx)
                            v[((size_t)p * nd.crop_h + y) * nd.crop_w + xx] =
                                src[((size_t)p * h + y) * w + xx];
                break;
            }
            case Op::Affine: {
                const Tensor& x = nodes_[(size_t)nd.inputs[0]].value;
                const Tensor& w = nodes_[(size_t)nd.inputs[1]].value;
                v.assign((size_t)nd.value.size(), 0.0);
                kernels::matmul(vals[(size_t)nd.inputs[0]].data(), vals[(size_t)nd.inputs[1]].data(),
                                v.data(), x.dim(0), x.dim(1), w.dim(1));
                kernels::add_row_bias(v.data(), vals[(size_t)nd.inputs[2]].data(), x.dim(0),
                                      w.dim(1));
                break;
            }
            case Op::Relu: {
                const auto& src = vals[(size_t)nd.inputs[0]];
                v.resize(src.size());
                kernels::relu_forward(src.data(), v.data(), (int64_t)src.size());
                break;
            }
            case Op::Softmax: {
                const Tensor& x = nodes_[(size_t)nd.inputs[0]].value;
                v.assign((size_t)nd.value.size(), 0.0);
                kernels::softmax_rows(vals[(size_t)nd.inputs[0]].data(), v.data(), x.dim(0),
                                      x.dim(1));
                break;
            }
            case Op::Dropout: {
                const auto& src = vals[(size_t)nd.inputs[0]];
                v.resize(src.size());
                for (size_t i = 0; i < src.size(); ++i) v[i] = src[i] * nd.mask[(int64_t)i];
                break;
            }
            case Op::Reshape:
                v = vals[(size_t)nd.inputs[0]];
                break;
            case Op::CrossEntropy: {
                const Tensor& p = nodes_[(size_t)nd.inputs[0]].value;
                const auto& probs = vals[(size_t)nd.inputs[0]];
                const auto& onehot = vals[(size_t)nd.inputs[1]];
                const int n = p.dim(0), k = p.dim(1);
                double total = 0;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < k; ++j)
                        if (onehot[(size_t)i * k + j] == 1.0)
                            total += -std::log(std::max(probs[(size_t)i * k + j], 1e-12));
                v = {total / n};
                break;
            }
            case Op::Sum: {
                const auto& src = vals[(size_t)nd.inputs[0]];
                double total = 0;
                for (double s : src) total += s;
                v = {total};
                break;
            }
            case Op::Add: {
                const auto& a = vals[(size_t)nd.inputs[0]];
                const auto& b = vals[(size_t)nd.inputs[1]];
                v.resize(a.size());
                for (size_t i = 0; i < a.size(); ++i) v[i] = a[i] + b[i];
                break;
            }
            case Op::Mul: {
                const auto& a = vals[(size_t)nd.inputs[0]];
                const auto& b = vals[(size_t)nd.inputs[1]];
                v.resize(a.size());
                for (size_t i = 0; i < a.size(); ++i) v[i] = a[i] * b[i];
                break;
            }
            case Op::Scale: {
                const auto& src = vals[(size_t)nd.inputs[0]];
                v.resize(src.size());
                for (size_t i = 0; i < src.size(); ++i) v[i] = src[i] * nd.scale_factor;
                break;
            }
        }
    }
    return vals[(size_t)out][0];
}

double finite_difference_check(const std::function<NodeId(Graph&, NodeId)>& f, const Tensor& x,
                               double h) {
    if (h <= 0) throw GraphError("finite_difference_check: h must be positive");
    Graph g;
    const NodeId xid = g.input(x);
    const NodeId out = f(g, xid);
    if (g.value(out).size() != 1)
        throw GraphError("finite_difference_check: f must produce a scalar");
    const Gradients grads = g.backward(out, true);
    const Tensor& analytic = *grads.by_input;

    std::vector<double> vals(x.values().begin(), x.values().end());
    double worst = 0.0;
    for (size_t i = 0; i < vals.size(); ++i) {
        const double v = vals[i];
        vals[i] = v + h;
        const double fp = g.replay_double(out, xid, vals);
        vals[i] = v - h;
        const double fm = g.replay_double(out, xid, vals);
        vals[i] = v;
        const double central = (fp - fm) / (2.0 * h);
        const double a = analytic[(int64_t)i];
        const double rel =
            std::fabs(a - central) / std::max({std::fabs(a), std::fabs(central), 1e-8});
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace advgrad
