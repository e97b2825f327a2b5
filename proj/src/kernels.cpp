#include "advgrad/kernels.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

// Parallelization picks loops whose iterations write disjoint outputs and
// keeps every accumulation inside one iteration, so results are identical
// for any thread count.

namespace advgrad::kernels {

ConvDims conv_dims(int n, int c, int h, int w, int f, int k, int stride, int pad) {
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    if (pad < 0) throw std::invalid_argument("conv2d: padding must be >= 0");
    if (h + 2 * pad < k || w + 2 * pad < k)
        throw std::invalid_argument("conv2d: kernel " + std::to_string(k) +
                                    " larger than padded input " + std::to_string(h + 2 * pad) +
                                    "x" + std::to_string(w + 2 * pad));
    ConvDims d{n, c, h, w, f, k, stride, pad, 0, 0};
    d.out_h = (h + 2 * pad - k) / stride + 1;
    d.out_w = (w + 2 * pad - k) / stride + 1;
    return d;
}

template <typename T>
void conv2d_forward(const T* in, const T* kern, const T* bias, T* out, const ConvDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < d.n; ++i) {
        for (int f = 0; f < d.f; ++f) {
            const T* img = in + (int64_t)i * d.c * d.h * d.w;
            const T* ker = kern + (int64_t)f * d.c * d.k * d.k;
            T* dst = out + ((int64_t)i * d.f + f) * d.out_h * d.out_w;
            for (int oh = 0; oh < d.out_h; ++oh) {
                for (int ow = 0; ow < d.out_w; ++ow) {
                    T acc = bias[f];
                    const int h0 = oh * d.stride - d.pad;
                    const int w0 = ow * d.stride - d.pad;
                    for (int c = 0; c < d.c; ++c) {
                        const T* plane = img + (int64_t)c * d.h * d.w;
                        const T* kp = ker + (int64_t)c * d.k * d.k;
                        for (int kh = 0; kh < d.k; ++kh) {
                            const int ih = h0 + kh;
                            if (ih < 0 || ih >= d.h) continue;
                            for (int kw = 0; kw < d.k; ++kw) {
                                const int iw = w0 + kw;
                                if (iw < 0 || iw >= d.w) continue;
                                acc += plane[(int64_t)ih * d.w + iw] * kp[kh * d.k + kw];
                            }
                        }
                    }
                    dst[(int64_t)oh * d.out_w + ow] = acc;
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_input(const T* gout, const T* kern, T* gin, const ConvDims& d) {
    // Gather form: each input element sums the output positions whose
    // window covers it.
#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < d.n; ++i) {
        for (int c = 0; c < d.c; ++c) {
            T* dst = gin + ((int64_t)i * d.c + c) * d.h * d.w;
            for (int ih = 0; ih < d.h; ++ih) {
                for (int iw = 0; iw < d.w; ++iw) {
                    T acc = 0;
                    for (int f = 0; f < d.f; ++f) {
                        const T* go = gout + ((int64_t)i * d.f + f) * d.out_h * d.out_w;
                        const T* kp = kern + ((int64_t)f * d.c + c) * d.k * d.k;
                        for (int kh = 0; kh < d.k; ++kh) {
                            const int oh_num = ih + d.pad - kh;
                            if (oh_num < 0 || oh_num % d.stride) continue;
                            const int oh = oh_num / d.stride;
                            if (oh >= d.out_h) continue;
                            for (int kw = 0; kw < d.k; ++kw) {
                                const int ow_num = iw + d.pad - kw;
                                if (ow_num < 0 || ow_num % d.stride) continue;
                                const int ow = ow_num / d.stride;
                                if (ow >= d.out_w) continue;
                                acc += go[(int64_t)oh * d.out_w + ow] * kp[kh * d.k + kw];
                            }
                        }
                    }
                    dst[(int64_t)ih * d.w + iw] = acc;
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_kernels(const T* gout, const T* in, T* gkern, const ConvDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int f = 0; f < d.f; ++f) {
        for (int c = 0; c < d.c; ++c) {
            T* dst = gkern + ((int64_t)f * d.c + c) * d.k * d.k;
            for (int kh = 0; kh < d.k; ++kh) {
                for (int kw = 0; kw < d.k; ++kw) {
                    T acc = 0;
                    for (int i = 0; i < d.n; ++i) {
                        const T* go = gout + ((int64_t)i * d.f + f) * d.out_h * d.out_w;
                        const T* plane = in + ((int64_t)i * d.c + c) * d.h * d.w;
                        for (int oh = 0; oh < d.out_h; ++oh) {
                            const int ih = oh * d.stride - d.pad + kh;
                            if (ih < 0 || ih >= d.h) continue;
                            for (int ow = 0; ow < d.out_w; ++ow) {
                                const int iw = ow * d.stride - d.pad + kw;
                                if (iw < 0 || iw >= d.w) continue;
                                acc += go[(int64_t)oh * d.out_w + ow] * plane[(int64_t)ih * d.w + iw];
                            }
                        }
                    }
                    dst[kh * d.k + kw] = acc;
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_bias(const T* gout, T* gbias, const ConvDims& d) {
#pragma omp parallel for schedule(static)
    for (int f = 0; f < d.f; ++f) {
        T acc = 0;
        for (int i = 0; i < d.n; ++i) {
            const T* go = gout + ((int64_t)i * d.f + f) * d.out_h * d.out_w;
            for (int64_t p = 0; p < (int64_t)d.out_h * d.out_w; ++p) acc += go[p];
        }
        gbias[f] = acc;
    }
}

template <typename T>
void maxpool_forward(const T* in, T* out, int64_t* argmax, int n, int c, int h, int w, int pool) {
    const int oh = h / pool, ow = w / pool;
#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < n; ++i) {
        for (int ch = 0; ch < c; ++ch) {
            const int64_t plane_off = ((int64_t)i * c + ch) * h * w;
            const int64_t out_off = ((int64_t)i * c + ch) * oh * ow;
            for (int y = 0; y < oh; ++y) {
                for (int x = 0; x < ow; ++x) {
                    T best = in[plane_off + (int64_t)y * pool * w + (int64_t)x * pool];
                    int64_t best_at = plane_off + (int64_t)y * pool * w + (int64_t)x * pool;
                    for (int py = 0; py < pool; ++py) {
                        for (int px = 0; px < pool; ++px) {
                            const int64_t at = plane_off + (int64_t)(y * pool + py) * w + x * pool + px;
                            if (in[at] > best) {
                                best = in[at];
                                best_at = at;
                            }
                        }
                    }
                    out[out_off + (int64_t)y * ow + x] = best;
                    argmax[out_off + (int64_t)y * ow + x] = best_at;
                }
            }
        }
    }
}

template <typename T>
void maxpool_backward(const T* gout, const int64_t* argmax, T* gin, int64_t out_size) {
    // Windows are disjoint, so scattering is race-free; gin must be zeroed
    // by the caller.
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < out_size; ++p) gin[argmax[p]] += gout[p];
}

template <typename T>
void matmul(const T* a, const T* b, T* out, int n, int d, int m) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const T* row = a + (int64_t)i * d;
        T* dst = out + (int64_t)i * m;
        for (int j = 0; j < m; ++j) dst[j] = 0;
        for (int p = 0; p < d; ++p) {
            const T av = row[p];
            const T* brow = b + (int64_t)p * m;
            for (int j = 0; j < m; ++j) dst[j] += av * brow[j];
        }
    }
}

template <typename T>
void matmul_at_b(const T* a, const T* g, T* out, int n, int d, int m) {
#pragma omp parallel for schedule(static)
    for (int p = 0; p < d; ++p) {
        T* dst = out + (int64_t)p * m;
        for (int j = 0; j < m; ++j) dst[j] = 0;
        for (int i = 0; i < n; ++i) {
            const T av = a[(int64_t)i * d + p];
            const T* grow = g + (int64_t)i * m;
            for (int j = 0; j < m; ++j) dst[j] += av * grow[j];
        }
    }
}

template <typename T>
void matmul_a_bt(const T* g, const T* b, T* out, int n, int d, int m) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const T* grow = g + (int64_t)i * m;
        T* dst = out + (int64_t)i * d;
        for (int p = 0; p < d; ++p) {
            const T* brow = b + (int64_t)p * m;
            T acc = 0;
            for (int j = 0; j < m; ++j) acc += grow[j] * brow[j];
            dst[p] = acc;
        }
    }
}

template <typename T>
void add_row_bias(T* x, const T* bias, int n, int m) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        T* row = x + (int64_t)i * m;
        for (int j = 0; j < m; ++j) row[j] += bias[j];
    }
}

template <typename T>
void col_sums(const T* x, T* out, int n, int m) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < m; ++j) {
        T acc = 0;
        for (int i = 0; i < n; ++i) acc += x[(int64_t)i * m + j];
        out[j] = acc;
    }
}

template <typename T>
void relu_forward(const T* in, T* out, int64_t size) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < size; ++i) out[i] = in[i] > 0 ? in[i] : T(0);
}

template <typename T>
void relu_backward(const T* gout, const T* in, T* gin, int64_t size) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < size; ++i) gin[i] = in[i] > 0 ? gout[i] : T(0);
}

template <typename T>
void softmax_rows(const T* in, T* out, int n, int k) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const T* row = in + (int64_t)i * k;
        T* dst = out + (int64_t)i * k;
        T mx = row[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        T denom = 0;
        for (int j = 0; j < k; ++j) {
            const T e = std::exp(row[j] - mx);
            dst[j] = e;
            denom += e;
        }
        for (int j = 0; j < k; ++j) dst[j] /= denom;
    }
}

template <typename T>
void softmax_backward_rows(const T* gout, const T* probs, T* gin, int n, int k) {
    // dx_i = p_i * (g_i - sum_j g_j p_j), per row
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const T* g = gout + (int64_t)i * k;
        const T* p = probs + (int64_t)i * k;
        T* dst = gin + (int64_t)i * k;
        T dot = 0;
        for (int j = 0; j < k; ++j) dot += g[j] * p[j];
        for (int j = 0; j < k; ++j) dst[j] = p[j] * (g[j] - dot);
    }
}

#define ADVGRAD_INSTANTIATE(T)                                                              \
    template void conv2d_forward<T>(const T*, const T*, const T*, T*, const ConvDims&);    \
    template void conv2d_backward_input<T>(const T*, const T*, T*, const ConvDims&);       \
    template void conv2d_backward_kernels<T>(const T*, const T*, T*, const ConvDims&);     \
    template void conv2d_backward_bias<T>(const T*, T*, const ConvDims&);                  \
    template void maxpool_forward<T>(const T*, T*, int64_t*, int, int, int, int, int);     \
    template void maxpool_backward<T>(const T*, const int64_t*, T*, int64_t);              \
    template void matmul<T>(const T*, const T*, T*, int, int, int);                        \
    template void matmul_at_b<T>(const T*, const T*, T*, int, int, int);                   \
    template void matmul_a_bt<T>(const T*, const T*, T*, int, int, int);                   \
    template void add_row_bias<T>(T*, const T*, int, int);                                 \
    template void col_sums<T>(const T*, T*, int, int);                                     \
    template void relu_forward<T>(const T*, T*, int64_t);                                  \
    template void relu_backward<T>(const T*, const T*, T*, int64_t);                       \
    template void softmax_rows<T>(const T*, T*, int, int);                                 \
    template void softmax_backward_rows<T>(const T*, const T*, T*, int, int);

ADVGRAD_INSTANTIATE(float)
ADVGRAD_INSTANTIATE(double)

#undef ADVGRAD_INSTANTIATE

}  // namespace advgrad::kernels
