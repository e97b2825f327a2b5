#include "advgrad/reference.h"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace advgrad::ref {

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride,
              int padding) {
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int f = kernels.dim(0), k = kernels.dim(2);
    const int oh = (h + 2 * padding - k) / stride + 1;
    const int ow = (w + 2 * padding - k) / stride + 1;
    Tensor out = Tensor::zeros({n, f, oh, ow});
    for (int i = 0; i < n; ++i)
        for (int fi = 0; fi < f; ++fi)
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) {
                    double acc = bias[fi];
                    for (int ci = 0; ci < c; ++ci)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int iy = y * stride - padding + ky;
                                const int ix = x * stride - padding + kx;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                acc += (double)input[((int64_t)(i * c + ci) * h + iy) * w + ix] *
                                       (double)kernels[((int64_t)(fi * c + ci) * k + ky) * k + kx];
                            }
                    out[((int64_t)(i * f + fi) * oh + y) * ow + x] = (float)acc;
                }
    return out;
}

Tensor maxpool2d(const Tensor& input, int pool) {
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (pool <= 0 || h % pool || w % pool)
        throw std::invalid_argument("ref::maxpool2d: bad pool size");
    const int oh = h / pool, ow = w / pool;
    Tensor out = Tensor::zeros({n, c, oh, ow});
    for (int i = 0; i < n; ++i)
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) {
                    float best = -std::numeric_limits<float>::infinity();
                    for (int py = 0; py < pool; ++py)
                        for (int px = 0; px < pool; ++px) {
                            const float v =
                                input[((int64_t)(i * c + ci) * h + y * pool + py) * w + x * pool + px];
                            if (v > best) best = v;
                        }
                    out[((int64_t)(i * c + ci) * oh + y) * ow + x] = best;
                }
    return out;
}

Tensor affine(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    const int n = input.dim(0), d = input.dim(1), m = weights.dim(1);
    Tensor out = Tensor::zeros({n, m});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
            double acc = bias[j];
            for (int p = 0; p < d; ++p)
                acc += (double)input[(int64_t)i * d + p] * (double)weights[(int64_t)p * m + j];
            out[(int64_t)i * m + j] = (float)acc;
        }
    return out;
}

Tensor softmax(const Tensor& input) {
    const int n = input.dim(0), k = input.dim(1);
    Tensor out = Tensor::zeros({n, k});
    for (int i = 0; i < n; ++i) {
        double mx = input[(int64_t)i * k];
        for (int j = 1; j < k; ++j) mx = std::max(mx, (double)input[(int64_t)i * k + j]);
        double denom = 0;
        for (int j = 0; j < k; ++j) denom += std::exp((double)input[(int64_t)i * k + j] - mx);
        for (int j = 0; j < k; ++j)
            out[(int64_t)i * k + j] = (float)(std::exp((double)input[(int64_t)i * k + j] - mx) / denom);
    }
    return out;
}

double cross_entropy(const Tensor& probs, const Tensor& onehot) {
    const int n = probs.dim(0), k = probs.dim(1);
    double total = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j)
            if (onehot[(int64_t)i * k + j] != 0.0f)
                total += -std::log(std::max((double)probs[(int64_t)i * k + j], 1e-12));
    return total / n;
}

}  // namespace advgrad::ref
