#include "advgrad/tensor.h"

#include <cmath>
#include <sstream>

namespace advgrad {

int64_t shape_size(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw TensorError("negative shape extent " + std::to_string(d));
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape, std::vector<float> values, bool req_grad)
    : requires_grad(req_grad), shape_(std::move(shape)), data_(std::move(values)) {
    const int64_t expect = shape_size(shape_);
    if (expect != static_cast<int64_t>(data_.size())) {
        throw TensorError("shape " + shape_str() + " implies " + std::to_string(expect) +
                          " values, got " + std::to_string(data_.size()));
    }
    for (float v : data_) {
        if (!std::isfinite(v)) throw TensorError("non-finite value in tensor construction");
    }
}

Tensor Tensor::zeros(std::vector<int> shape) { return uninit(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, float value) {
    Tensor t = uninit(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
}

Tensor Tensor::uninit(std::vector<int> shape) {
    Tensor t;
    const int64_t n = shape_size(shape);
    t.shape_ = std::move(shape);
    t.data_.assign(static_cast<size_t>(n), 0.0f);
    return t;
}

float Tensor::at(std::initializer_list<int> idx) const {
    if (static_cast<int>(idx.size()) != rank())
        throw TensorError("index rank mismatch in at()");
    int64_t flat = 0;
    int axis = 0;
    for (int i : idx) {
        const int extent = shape_[static_cast<size_t>(axis)];
        if (i < 0 || i >= extent) throw TensorError("index out of range in at()");
        flat = flat * extent + i;
        ++axis;
    }
    return data_[static_cast<size_t>(flat)];
}

float Tensor::item() const {
    if (data_.size() != 1)
        throw TensorError("item() on tensor of size " + std::to_string(data_.size()));
    return data_[0];
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ',';
        os << shape_[i];
    }
    os << ')';
    return os.str();
}

Tensor tensor_new(std::vector<int> shape, std::vector<float> values, bool requires_grad) {
    return Tensor(std::move(shape), std::move(values), requires_grad);
}

}  // namespace advgrad
