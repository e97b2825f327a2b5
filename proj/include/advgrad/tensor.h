#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace advgrad {

class TensorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major tensor of 32-bit floats. Plain value type: copying
/// copies the buffer, there is no aliasing between tensors.
class Tensor {
public:
    Tensor() = default;

    /// Validating constructor: shape product must equal value count and
    /// every value must be finite.
    Tensor(std::vector<int> shape, std::vector<float> values, bool requires_grad = false);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, float value);
    /// Allocates zeroed storage without the finiteness scan. For kernels
    /// that overwrite the buffer right after.
    static Tensor uninit(std::vector<int> shape);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& values() { return data_; }
    const std::vector<float>& values() const { return data_; }

    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    /// Multi-index access (row-major), bounds-checked. Test convenience.
    float at(std::initializer_list<int> idx) const;

    /// Value of a single-element tensor.
    float item() const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;

    bool requires_grad = false;

private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

/// Element count implied by a shape; rejects negative extents.
int64_t shape_size(const std::vector<int>& shape);

/// Equivalent of Tensor's validating constructor.
Tensor tensor_new(std::vector<int> shape, std::vector<float> values, bool requires_grad = false);

}  // namespace advgrad
