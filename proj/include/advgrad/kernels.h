#pragma once

#include <cstdint>

namespace advgrad::kernels {

/// Geometry of a 2-d cross-correlation. Input (n,c,h,w), kernels
/// (f,c,k,k), output (n,f,out_h,out_w) with
/// out_h = (h + 2*pad - k)/stride + 1.
struct ConvDims {
    int n, c, h, w;
    int f, k;
    int stride, pad;
    int out_h, out_w;
};

ConvDims conv_dims(int n, int c, int h, int w, int f, int k, int stride, int pad);

template <typename T>
void conv2d_forward(const T* in, const T* kern, const T* bias, T* out, const ConvDims& d);
template <typename T>
void conv2d_backward_input(const T* gout, const T* kern, T* gin, const ConvDims& d);
template <typename T>
void conv2d_backward_kernels(const T* gout, const T* in, T* gkern, const ConvDims& d);
template <typename T>
void conv2d_backward_bias(const T* gout, T* gbias, const ConvDims& d);

/// Window max over non-overlapping pool x pool tiles; h and w must be
/// divisible by pool. argmax records the flat input offset that won each
/// window (first maximal element in row-major scan).
template <typename T>
void maxpool_forward(const T* in, T* out, int64_t* argmax, int n, int c, int h, int w, int pool);
template <typename T>
void maxpool_backward(const T* gout, const int64_t* argmax, T* gin, int64_t out_size);

/// out(n,m) = a(n,d) * b(d,m)
template <typename T>
void matmul(const T* a, const T* b, T* out, int n, int d, int m);
/// out(d,m) = a(n,d)^T * g(n,m)
template <typename T>
void matmul_at_b(const T* a, const T* g, T* out, int n, int d, int m);
/// out(n,d) = g(n,m) * b(d,m)^T
template <typename T>
void matmul_a_bt(const T* g, const T* b, T* out, int n, int d, int m);

template <typename T>
void add_row_bias(T* x, const T* bias, int n, int m);
template <typename T>
void col_sums(const T* x, T* out, int n, int m);

template <typename T>
void relu_forward(const T* in, T* out, int64_t size);
/// Passes gradient where the forward input was > 0, zero elsewhere
/// (including exactly 0).
template <typename T>
void relu_backward(const T* gout, const T* in, T* gin, int64_t size);

/// Row-wise softmax with max subtraction.
template <typename T>
void softmax_rows(const T* in, T* out, int n, int k);
template <typename T>
void softmax_backward_rows(const T* gout, const T* probs, T* gin, int n, int k);

}  // namespace advgrad::kernels
