#pragma once

#include "advgrad/tensor.h"

// Serial, naive implementations used as oracles by the tests and as the
// baseline in the kernel benchmark. Deliberately written as plain nested
// loops with double accumulators, independent of the parallel kernels.

namespace advgrad::ref {

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride,
              int padding);
Tensor maxpool2d(const Tensor& input, int pool);
Tensor affine(const Tensor& input, const Tensor& weights, const Tensor& bias);
Tensor softmax(const Tensor& input);
double cross_entropy(const Tensor& probs, const Tensor& onehot);

}  // namespace advgrad::ref
