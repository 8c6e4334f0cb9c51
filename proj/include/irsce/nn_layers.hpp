// Forward and backward passes for the three layer types the denoiser needs:
// 3x3 same-padding convolution, batch normalization and ReLU. Double
// precision throughout; every backward pass is checked against finite
// differences in the test suite.

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "irsce/parallel.hpp"
#include "irsce/rng.hpp"
#include "irsce/tensor.hpp"

namespace irsce {

// Worker count for intra-op parallelism. Partitioning is static over
// disjoint output ranges, so any value produces identical results.
inline int& nn_threads() {
    static int t = 1;
    return t;
}
inline void set_nn_threads(int t) { nn_threads() = t < 1 ? 1 : t; }

enum class Mode { kTrain, kEval };

inline constexpr std::size_t kKernel = 3;  // spatial kernel size is fixed

struct ConvLayer {
    std::size_t in_ch = 0;
    std::size_t out_ch = 0;
    std::vector<double> w;  // [out_ch][3][3][in_ch]
    std::vector<double> b;  // [out_ch]

    ConvLayer() = default;
    ConvLayer(std::size_t in, std::size_t out)
        : in_ch(in), out_ch(out), w(out * kKernel * kKernel * in, 0.0), b(out, 0.0) {}

    std::size_t w_index(std::size_t oc, std::size_t ky, std::size_t kx, std::size_t ic) const {
        return ((oc * kKernel + ky) * kKernel + kx) * in_ch + ic;
    }

    // Fan-in scaled uniform weights, zero bias.
    void init(RngStream& rng) {
        const double bound = std::sqrt(6.0 / double(kKernel * kKernel * in_ch));
        for (auto& x : w) x = bound * (2.0 * rng.uniform01() - 1.0);
        for (auto& x : b) x = 0.0;
    }
};

// 3x3 cross-correlation, stride 1, zero padding 1: output spatial size
// equals input spatial size.
inline RealTensor conv2d_forward(const RealTensor& x, const ConvLayer& layer) {
    const auto& s = x.shape();
    if (s.channels != layer.in_ch)
        throw std::invalid_argument("conv2d_forward: channel count mismatch");
    RealTensor out(s.height, s.width, layer.out_ch, s.batch);
    const std::size_t h = s.height, w = s.width, ic = layer.in_ch, oc = layer.out_ch;

    parallel_for(s.batch, nn_threads(), [&](std::size_t n) {
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                double* o = out.pixel(i, j, n);
                for (std::size_t f = 0; f < oc; ++f) o[f] = layer.b[f];
                for (std::size_t ky = 0; ky < kKernel; ++ky) {
                    const std::size_t ii = i + ky;
                    if (ii < 1 || ii > h) continue;  // padded row
                    for (std::size_t kx = 0; kx < kKernel; ++kx) {
                        const std::size_t jj = j + kx;
                        if (jj < 1 || jj > w) continue;
                        const double* px = x.pixel(ii - 1, jj - 1, n);
                        const double* wk = layer.w.data() + ((0 * kKernel + ky) * kKernel + kx) * ic;
                        const std::size_t wstride = kKernel * kKernel * ic;
                        for (std::size_t f = 0; f < oc; ++f) {
                            const double* wf = wk + f * wstride;
                            double acc = 0.0;
                            for (std::size_t q = 0; q < ic; ++q) acc += wf[q] * px[q];
                            o[f] += acc;
                        }
                    }
                }
            }
        }
    });
    return out;
}

struct ConvGrads {
    RealTensor grad_x;
    std::vector<double> grad_w;
    std::vector<double> grad_b;
};

inline ConvGrads conv2d_backward(const RealTensor& x, const ConvLayer& layer,
                                 const RealTensor& grad_out) {
    const auto& s = x.shape();
    if (s.channels != layer.in_ch)
        throw std::invalid_argument("conv2d_backward: channel count mismatch");
    const auto& g = grad_out.shape();
    if (g.height != s.height || g.width != s.width || g.channels != layer.out_ch || g.batch != s.batch)
        throw std::invalid_argument("conv2d_backward: grad_out shape mismatch");

    const std::size_t h = s.height, w = s.width, ic = layer.in_ch, oc = layer.out_ch;
    ConvGrads out{RealTensor(s), std::vector<double>(layer.w.size(), 0.0),
                  std::vector<double>(layer.b.size(), 0.0)};

    // Bias: per-channel sum over batch and space.
    for (std::size_t n = 0; n < s.batch; ++n)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const double* go = grad_out.pixel(i, j, n);
                for (std::size_t f = 0; f < oc; ++f) out.grad_b[f] += go[f];
            }

    // Input gradient: disjoint writes per batch element.
    parallel_for(s.batch, nn_threads(), [&](std::size_t n) {
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                const double* go = grad_out.pixel(i, j, n);
                for (std::size_t ky = 0; ky < kKernel; ++ky) {
                    const std::size_t ii = i + ky;
                    if (ii < 1 || ii > h) continue;
                    for (std::size_t kx = 0; kx < kKernel; ++kx) {
                        const std::size_t jj = j + kx;
                        if (jj < 1 || jj > w) continue;
                        double* gx = out.grad_x.pixel(ii - 1, jj - 1, n);
                        const std::size_t wstride = kKernel * kKernel * ic;
                        const double* wk = layer.w.data() + (ky * kKernel + kx) * ic;
                        for (std::size_t f = 0; f < oc; ++f) {
                            const double gof = go[f];
                            if (gof == 0.0) continue;
                            const double* wf = wk + f * wstride;
                            for (std::size_t q = 0; q < ic; ++q) gx[q] += gof * wf[q];
                        }
                    }
                }
            }
        }
    });

    // Weight gradient: each worker owns a filter range and walks the batch
    // in order, so accumulation order is fixed.
    const std::size_t wstride = kKernel * kKernel * ic;
    parallel_for(oc, nn_threads(), [&](std::size_t f) {
        double* gwf = out.grad_w.data() + f * wstride;
        for (std::size_t n = 0; n < s.batch; ++n)
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    const double gof = grad_out.at(i, j, f, n);
                    if (gof == 0.0) continue;
                    for (std::size_t ky = 0; ky < kKernel; ++ky) {
                        const std::size_t ii = i + ky;
                        if (ii < 1 || ii > h) continue;
                        for (std::size_t kx = 0; kx < kKernel; ++kx) {
                            const std::size_t jj = j + kx;
                            if (jj < 1 || jj > w) continue;
                            const double* px = x.pixel(ii - 1, jj - 1, n);
                            double* gw = gwf + (ky * kKernel + kx) * ic;
                            for (std::size_t q = 0; q < ic; ++q) gw[q] += gof * px[q];
                        }
                    }
                }
    });

    return out;
}

struct BatchNormLayer {
    std::size_t channels = 0;
    double epsilon = 1e-5;
    double momentum = 0.9;  // running = momentum*running + (1-momentum)*batch
    std::vector<double> gain;          // gamma
    std::vector<double> shift;         // beta
    std::vector<double> running_mean;
    std::vector<double> running_var;

    BatchNormLayer() = default;
    explicit BatchNormLayer(std::size_t ch, double eps = 1e-5, double mom = 0.9)
        : channels(ch), epsilon(eps), momentum(mom), gain(ch, 1.0), shift(ch, 0.0),
          running_mean(ch, 0.0), running_var(ch, 1.0) {}
};

// Batch statistics captured by the train-mode forward pass; required by the
// backward pass.
struct BnCache {
    std::vector<double> mean;
    std::vector<double> var;  // biased (population) variance
    bool valid = false;
};

inline RealTensor batchnorm_forward(const RealTensor& x, BatchNormLayer& layer, Mode mode,
                                    BnCache* cache = nullptr) {
    const auto& s = x.shape();
    if (s.channels != layer.channels)
        throw std::invalid_argument("batchnorm_forward: channel count mismatch");
    const std::size_t per_ch = s.batch * s.height * s.width;
    RealTensor out(s);

    if (mode == Mode::kTrain) {
        if (per_ch < 2)
            throw std::invalid_argument("batchnorm_forward: train mode needs at least 2 samples per channel");
        std::vector<double> mean(layer.channels, 0.0), var(layer.channels, 0.0);
        parallel_for(layer.channels, nn_threads(), [&](std::size_t ch) {
            double m = 0.0;
            for (std::size_t n = 0; n < s.batch; ++n)
                for (std::size_t i = 0; i < s.height; ++i)
                    for (std::size_t j = 0; j < s.width; ++j) m += x.at(i, j, ch, n);
            m /= double(per_ch);
            double v = 0.0;
            for (std::size_t n = 0; n < s.batch; ++n)
                for (std::size_t i = 0; i < s.height; ++i)
                    for (std::size_t j = 0; j < s.width; ++j) {
                        const double d = x.at(i, j, ch, n) - m;
                        v += d * d;
                    }
            v /= double(per_ch);
            mean[ch] = m;
            var[ch] = v;
            const double inv_sd = 1.0 / std::sqrt(v + layer.epsilon);
            const double g = layer.gain[ch], b = layer.shift[ch];
            for (std::size_t n = 0; n < s.batch; ++n)
                for (std::size_t i = 0; i < s.height; ++i)
                    for (std::size_t j = 0; j < s.width; ++j)
                        out.at(i, j, ch, n) = g * (x.at(i, j, ch, n) - m) * inv_sd + b;
        });
        for (std::size_t ch = 0; ch < layer.channels; ++ch) {
            layer.running_mean[ch] = layer.momentum * layer.running_mean[ch] + (1.0 - layer.momentum) * mean[ch];
            layer.running_var[ch] = layer.momentum * layer.running_var[ch] + (1.0 - layer.momentum) * var[ch];
        }
        if (cache) {
            cache->mean = std::move(mean);
            cache->var = std::move(var);
            cache->valid = true;
        }
    } else {
        parallel_for(layer.channels, nn_threads(), [&](std::size_t ch) {
            const double inv_sd = 1.0 / std::sqrt(layer.running_var[ch] + layer.epsilon);
            const double g = layer.gain[ch], b = layer.shift[ch], m = layer.running_mean[ch];
            for (std::size_t n = 0; n < s.batch; ++n)
                for (std::size_t i = 0; i < s.height; ++i)
                    for (std::size_t j = 0; j < s.width; ++j)
                        out.at(i, j, ch, n) = g * (x.at(i, j, ch, n) - m) * inv_sd + b;
        });
    }
    return out;
}

// Eval-mode forward that leaves the layer untouched (inference on a shared
// model).
inline RealTensor batchnorm_forward_eval(const RealTensor& x, const BatchNormLayer& layer) {
    BatchNormLayer& mut = const_cast<BatchNormLayer&>(layer);
    return batchnorm_forward(x, mut, Mode::kEval, nullptr);
}

struct BnGrads {
    RealTensor grad_x;
    std::vector<double> grad_gain;
    std::vector<double> grad_shift;
};

inline BnGrads batchnorm_backward(const RealTensor& x, const BatchNormLayer& layer,
                                  const RealTensor& grad_out, const BnCache& cache) {
    if (!cache.valid)
        throw std::invalid_argument("batchnorm_backward: missing train-mode cache");
    const auto& s = x.shape();
    if (s.channels != layer.channels || !(grad_out.shape() == s))
        throw std::invalid_argument("batchnorm_backward: shape mismatch");
    const double cnt = double(s.batch * s.height * s.width);

    BnGrads out{RealTensor(s), std::vector<double>(layer.channels, 0.0),
                std::vector<double>(layer.channels, 0.0)};

    parallel_for(layer.channels, nn_threads(), [&](std::size_t ch) {
        const double m = cache.mean[ch];
        const double inv_sd = 1.0 / std::sqrt(cache.var[ch] + layer.epsilon);
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t n = 0; n < s.batch; ++n)
            for (std::size_t i = 0; i < s.height; ++i)
                for (std::size_t j = 0; j < s.width; ++j) {
                    const double g = grad_out.at(i, j, ch, n);
                    const double xhat = (x.at(i, j, ch, n) - m) * inv_sd;
                    sum_g += g;
                    sum_gx += g * xhat;
                }
        out.grad_shift[ch] = sum_g;
        out.grad_gain[ch] = sum_gx;
        const double scale = layer.gain[ch] * inv_sd / cnt;
        for (std::size_t n = 0; n < s.batch; ++n)
            for (std::size_t i = 0; i < s.height; ++i)
                for (std::size_t j = 0; j < s.width; ++j) {
                    const double g = grad_out.at(i, j, ch, n);
                    const double xhat = (x.at(i, j, ch, n) - m) * inv_sd;
                    out.grad_x.at(i, j, ch, n) = scale * (cnt * g - sum_g - xhat * sum_gx);
                }
    });
    return out;
}

inline RealTensor relu_forward(const RealTensor& x) {
    RealTensor out(x.shape());
    const double* in = x.data();
    double* o = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
    return out;
}

// Subgradient 0 at the kink.
inline RealTensor relu_backward(const RealTensor& x, const RealTensor& grad_out) {
    if (!(x.shape() == grad_out.shape()))
        throw std::invalid_argument("relu_backward: shape mismatch");
    RealTensor out(x.shape());
    const double* in = x.data();
    const double* g = grad_out.data();
    double* o = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) o[i] = in[i] > 0.0 ? g[i] : 0.0;
    return out;
}

}  // namespace irsce
