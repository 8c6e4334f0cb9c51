// Cascaded denoising network: D identical blocks, each an N_l-layer
// convolutional residual subnetwork whose output is subtracted element-wise
// from the block input. The network input is the coarse pseudoinverse
// estimate split into real/imaginary channels; the output is the denoised
// channel matrix in the same representation.

#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "irsce/complex_matrix.hpp"
#include "irsce/estimators.hpp"
#include "irsce/nn_layers.hpp"
#include "irsce/optimizer.hpp"
#include "irsce/pilot_protocol.hpp"
#include "irsce/rng.hpp"

namespace irsce {

// Real/imaginary split: channel 0 carries Re, channel 1 carries Im.
inline RealTensor to_real_channels(const CMatrix& x) {
    RealTensor out(x.rows(), x.cols(), 2, 1);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) {
            out.at(i, j, 0) = x(i, j).real();
            out.at(i, j, 1) = x(i, j).imag();
        }
    return out;
}

inline CMatrix from_real_channels(const RealTensor& a, std::size_t batch_item = 0) {
    if (a.shape().channels != 2)
        throw std::invalid_argument("from_real_channels: tensor must have exactly 2 channels");
    CMatrix out(a.shape().height, a.shape().width);
    for (std::size_t i = 0; i < a.shape().height; ++i)
        for (std::size_t j = 0; j < a.shape().width; ++j)
            out(i, j) = cxd(a.at(i, j, 0, batch_item), a.at(i, j, 1, batch_item));
    return out;
}

struct CdrnHyper {
    std::size_t height = 4;            // M
    std::size_t width = 9;             // N + 1
    std::size_t depth = 3;             // number of denoising blocks
    std::size_t layers_per_block = 5;  // N_l
    std::size_t filters = 64;
    double bn_epsilon = 1e-5;
    double bn_momentum = 0.9;

    void validate() const {
        if (height < 1 || width < 1)
            throw std::invalid_argument("CdrnHyper: spatial dimensions must be >= 1");
        if (depth < 1) throw std::invalid_argument("CdrnHyper: depth must be >= 1");
        if (layers_per_block < 2)
            throw std::invalid_argument("CdrnHyper: layers_per_block must be >= 2");
        if (filters < 1) throw std::invalid_argument("CdrnHyper: filters must be >= 1");
        if (!(bn_epsilon > 0.0)) throw std::invalid_argument("CdrnHyper: bn_epsilon must be > 0");
        if (!(bn_momentum > 0.0 && bn_momentum < 1.0))
            throw std::invalid_argument("CdrnHyper: bn_momentum must be in (0,1)");
    }
};

// Layer i of a block: conv (+ BN + ReLU for all but the last layer). First
// conv maps 2 -> filters, middle convs filters -> filters, last conv
// filters -> 2 with no normalization or activation.
struct DenoisingBlock {
    std::vector<ConvLayer> convs;      // layers_per_block entries
    std::vector<BatchNormLayer> bns;   // layers_per_block - 1 entries
};

struct LayerCache {
    RealTensor conv_in;
    RealTensor bn_in;
    BnCache bn_stats;
    RealTensor relu_in;
};

struct BlockCache {
    std::vector<LayerCache> layers;
};

struct ModelCache {
    std::vector<RealTensor> block_inputs;  // A_0 .. A_{D-1}
    std::vector<BlockCache> blocks;
};

class CdrnModel {
  public:
    CdrnModel() = default;

    explicit CdrnModel(const CdrnHyper& hyper) : hyper_(hyper) {
        hyper_.validate();
        blocks_.resize(hyper_.depth);
        for (auto& blk : blocks_) {
            blk.convs.reserve(hyper_.layers_per_block);
            for (std::size_t i = 0; i < hyper_.layers_per_block; ++i) {
                const std::size_t in = (i == 0) ? 2 : hyper_.filters;
                const std::size_t out = (i + 1 == hyper_.layers_per_block) ? 2 : hyper_.filters;
                blk.convs.emplace_back(in, out);
                if (i + 1 < hyper_.layers_per_block)
                    blk.bns.emplace_back(out, hyper_.bn_epsilon, hyper_.bn_momentum);
            }
        }
    }

    const CdrnHyper& hyper() const { return hyper_; }
    std::vector<DenoisingBlock>& blocks() { return blocks_; }
    const std::vector<DenoisingBlock>& blocks() const { return blocks_; }

    // Fan-in scaled uniform weights everywhere, zero bias, unit gain.
    void init_params(RngStream& rng) {
        for (auto& blk : blocks_) {
            for (auto& conv : blk.convs) conv.init(rng);
            for (auto& bn : blk.bns) {
                std::fill(bn.gain.begin(), bn.gain.end(), 1.0);
                std::fill(bn.shift.begin(), bn.shift.end(), 0.0);
                std::fill(bn.running_mean.begin(), bn.running_mean.end(), 0.0);
                std::fill(bn.running_var.begin(), bn.running_var.end(), 1.0);
            }
        }
    }

    // Training initialization: as init_params, but the final conv of every
    // block starts at zero, so each block begins as an identity map and
    // learns an incremental denoising step. Keeps the trained network's
    // intermediate outputs on the signal scale instead of drifting into an
    // arbitrary internal representation.
    void init_training_params(RngStream& rng) {
        init_params(rng);
        for (auto& blk : blocks_) {
            auto& last = blk.convs.back();
            std::fill(last.w.begin(), last.w.end(), 0.0);
            std::fill(last.b.begin(), last.b.end(), 0.0);
        }
    }

    void zero_params() {
        for (auto& blk : blocks_) {
            for (auto& conv : blk.convs) {
                std::fill(conv.w.begin(), conv.w.end(), 0.0);
                std::fill(conv.b.begin(), conv.b.end(), 0.0);
            }
            for (auto& bn : blk.bns) {
                std::fill(bn.gain.begin(), bn.gain.end(), 0.0);
                std::fill(bn.shift.begin(), bn.shift.end(), 0.0);
            }
        }
    }

    // Trainable parameters in a fixed order: per block, per layer, conv
    // weights, conv bias, then BN gain and shift where present.
    std::vector<ParamRef> parameters() {
        std::vector<ParamRef> out;
        for (auto& blk : blocks_) {
            for (std::size_t i = 0; i < blk.convs.size(); ++i) {
                out.push_back({blk.convs[i].w.data(), blk.convs[i].w.size()});
                out.push_back({blk.convs[i].b.data(), blk.convs[i].b.size()});
                if (i < blk.bns.size()) {
                    out.push_back({blk.bns[i].gain.data(), blk.bns[i].gain.size()});
                    out.push_back({blk.bns[i].shift.data(), blk.bns[i].shift.size()});
                }
            }
        }
        return out;
    }

    std::vector<std::size_t> parameter_sizes() {
        std::vector<std::size_t> sizes;
        for (const auto& ref : parameters()) sizes.push_back(ref.size);
        return sizes;
    }

  private:
    CdrnHyper hyper_;
    std::vector<DenoisingBlock> blocks_;
};

// Gradient buffers mirroring CdrnModel::parameters() order.
struct CdrnGrads {
    std::vector<std::vector<double>> buffers;

    static CdrnGrads like(CdrnModel& model) {
        CdrnGrads g;
        for (std::size_t n : model.parameter_sizes()) g.buffers.emplace_back(n, 0.0);
        return g;
    }

    void zero() {
        for (auto& b : buffers) std::fill(b.begin(), b.end(), 0.0);
    }

    std::vector<const double*> flat() const {
        std::vector<const double*> out;
        out.reserve(buffers.size());
        for (const auto& b : buffers) out.push_back(b.data());
        return out;
    }
};

namespace detail {

inline void check_block_input(const RealTensor& x, const CdrnHyper& hyper) {
    const auto& s = x.shape();
    if (s.height != hyper.height || s.width != hyper.width || s.channels != 2)
        throw std::invalid_argument("cdrn: input tensor shape does not match the model");
}

inline RealTensor residual_forward(const RealTensor& x, DenoisingBlock& blk, Mode mode,
                                   BlockCache* cache) {
    RealTensor a = x;
    if (cache) cache->layers.assign(blk.convs.size(), LayerCache{});
    for (std::size_t i = 0; i < blk.convs.size(); ++i) {
        if (cache) cache->layers[i].conv_in = a;
        a = conv2d_forward(a, blk.convs[i]);
        if (i < blk.bns.size()) {
            if (cache) cache->layers[i].bn_in = a;
            a = batchnorm_forward(a, blk.bns[i], mode, cache ? &cache->layers[i].bn_stats : nullptr);
            if (cache) cache->layers[i].relu_in = a;
            a = relu_forward(a);
        }
    }
    return a;
}

inline RealTensor residual_forward_eval(const RealTensor& x, const DenoisingBlock& blk) {
    RealTensor a = x;
    for (std::size_t i = 0; i < blk.convs.size(); ++i) {
        a = conv2d_forward(a, blk.convs[i]);
        if (i < blk.bns.size()) {
            a = batchnorm_forward_eval(a, blk.bns[i]);
            a = relu_forward(a);
        }
    }
    return a;
}

// Backpropagates `upstream` (gradient w.r.t. the residual output) through the
// layer stack, accumulating parameter gradients into the per-layer slots
// starting at grad_base within grads. Returns the gradient w.r.t. the block
// input.
inline RealTensor residual_backward(const DenoisingBlock& blk, const BlockCache& cache,
                                    RealTensor upstream, CdrnGrads& grads, std::size_t grad_base) {
    for (std::size_t ri = blk.convs.size(); ri-- > 0;) {
        const LayerCache& lc = cache.layers[ri];
        if (ri < blk.bns.size()) {
            upstream = relu_backward(lc.relu_in, upstream);
            BnGrads bg = batchnorm_backward(lc.bn_in, blk.bns[ri], upstream, lc.bn_stats);
            std::size_t slot = grad_base + ri * 4;  // w, b, gain, shift per full layer
            auto& ggain = grads.buffers[slot + 2];
            auto& gshift = grads.buffers[slot + 3];
            for (std::size_t q = 0; q < ggain.size(); ++q) {
                ggain[q] += bg.grad_gain[q];
                gshift[q] += bg.grad_shift[q];
            }
            upstream = std::move(bg.grad_x);
        }
        ConvGrads cg = conv2d_backward(lc.conv_in, blk.convs[ri], upstream);
        std::size_t slot = grad_base + ri * 4;
        auto& gw = grads.buffers[slot];
        auto& gb = grads.buffers[slot + 1];
        for (std::size_t q = 0; q < gw.size(); ++q) gw[q] += cg.grad_w[q];
        for (std::size_t q = 0; q < gb.size(); ++q) gb[q] += cg.grad_b[q];
        upstream = std::move(cg.grad_x);
    }
    return upstream;
}

// Parameter-slot offset of block d in the flat gradient layout.
inline std::size_t block_grad_base(const CdrnHyper& hyper, std::size_t d) {
    // Full layers contribute 4 slots (w, b, gain, shift), the last conv 2.
    const std::size_t per_block = (hyper.layers_per_block - 1) * 4 + 2;
    return d * per_block;
}

}  // namespace detail

// One denoising block: returns (input - residual, residual).
inline std::pair<RealTensor, RealTensor> block_forward(const RealTensor& x, DenoisingBlock& blk,
                                                       Mode mode, BlockCache* cache = nullptr) {
    RealTensor residual = detail::residual_forward(x, blk, mode, cache);
    if (!(residual.shape() == x.shape()))
        throw std::invalid_argument("block_forward: residual shape mismatch");
    RealTensor next(x.shape());
    for (std::size_t i = 0; i < next.size(); ++i)
        next.values()[i] = x.values()[i] - residual.values()[i];
    return {std::move(next), std::move(residual)};
}

// Chained blocks; optionally reports per-block residuals and training caches.
inline RealTensor cdrn_forward(const RealTensor& a, CdrnModel& model, Mode mode,
                               std::vector<RealTensor>* residuals = nullptr,
                               ModelCache* cache = nullptr) {
    detail::check_block_input(a, model.hyper());
    RealTensor cur = a;
    if (residuals) residuals->clear();
    if (cache) {
        cache->block_inputs.clear();
        cache->blocks.assign(model.blocks().size(), BlockCache{});
    }
    for (std::size_t d = 0; d < model.blocks().size(); ++d) {
        if (cache) cache->block_inputs.push_back(cur);
        auto [next, residual] =
            block_forward(cur, model.blocks()[d], mode, cache ? &cache->blocks[d] : nullptr);
        if (residuals) residuals->push_back(std::move(residual));
        cur = std::move(next);
    }
    return cur;
}

// Eval-mode forward on a const model (running statistics, no mutation).
inline RealTensor cdrn_forward(const RealTensor& a, const CdrnModel& model,
                               std::vector<RealTensor>* residuals = nullptr) {
    detail::check_block_input(a, model.hyper());
    RealTensor cur = a;
    if (residuals) residuals->clear();
    for (const auto& blk : model.blocks()) {
        RealTensor residual = detail::residual_forward_eval(cur, blk);
        RealTensor next(cur.shape());
        for (std::size_t i = 0; i < next.size(); ++i)
            next.values()[i] = cur.values()[i] - residual.values()[i];
        if (residuals) residuals->push_back(std::move(residual));
        cur = std::move(next);
    }
    return cur;
}

// Empirical half-mean-squared error over the batch:
// J = 1/(2b) * sum_i ||out_i - label_i||_F^2.
inline double cdrn_loss(CdrnModel& model, const RealTensor& inputs, const RealTensor& labels,
                        Mode mode) {
    if (!(inputs.shape() == labels.shape()))
        throw std::invalid_argument("cdrn_loss: input/label shape mismatch");
    if (inputs.shape().batch < 1) throw std::invalid_argument("cdrn_loss: empty batch");
    const RealTensor out = cdrn_forward(inputs, model, mode);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double d = out.values()[i] - labels.values()[i];
        s += d * d;
    }
    return s / (2.0 * double(inputs.shape().batch));
}

// Forward + backward for one minibatch; accumulates parameter gradients and
// returns the loss.
inline double cdrn_loss_and_grad(CdrnModel& model, const RealTensor& inputs,
                                 const RealTensor& labels, CdrnGrads& grads) {
    if (!(inputs.shape() == labels.shape()))
        throw std::invalid_argument("cdrn_loss_and_grad: input/label shape mismatch");
    const std::size_t batch = inputs.shape().batch;
    if (batch < 1) throw std::invalid_argument("cdrn_loss_and_grad: empty batch");

    ModelCache cache;
    const RealTensor out = cdrn_forward(inputs, model, Mode::kTrain, nullptr, &cache);

    double loss = 0.0;
    RealTensor grad(out.shape());
    const double inv_b = 1.0 / double(batch);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double d = out.values()[i] - labels.values()[i];
        loss += d * d;
        grad.values()[i] = d * inv_b;
    }
    loss *= 0.5 * inv_b;

    // Block d output: A_d = A_{d-1} - R_d(A_{d-1}). Backprop the negated
    // upstream through the residual stack and add the skip path.
    for (std::size_t d = model.blocks().size(); d-- > 0;) {
        RealTensor neg(grad.shape());
        for (std::size_t i = 0; i < grad.size(); ++i) neg.values()[i] = -grad.values()[i];
        RealTensor through = detail::residual_backward(
            model.blocks()[d], cache.blocks[d], std::move(neg), grads,
            detail::block_grad_base(model.hyper(), d));
        for (std::size_t i = 0; i < grad.size(); ++i) grad.values()[i] += through.values()[i];
    }
    return loss;
}

struct TrainingSet {
    std::vector<RealTensor> inputs;  // each M x (N+1) x 2, batch 1
    std::vector<RealTensor> labels;

    std::size_t size() const { return inputs.size(); }

    void validate() const {
        if (inputs.size() != labels.size())
            throw std::invalid_argument("TrainingSet: input/label count mismatch");
        for (std::size_t i = 0; i < inputs.size(); ++i)
            if (!(inputs[i].shape() == labels[i].shape()))
                throw std::invalid_argument("TrainingSet: shape mismatch at example " + std::to_string(i));
    }
};

struct TrainConfig {
    std::size_t batch_size = 64;
    std::size_t epochs = 10;  // outer iterations over the training set
    AdamParams adam;
    double lr_decay = 1.0;  // per-epoch multiplicative learning-rate decay
    double validation_fraction = 0.0;
    std::uint64_t seed = 1;
    int threads = 1;
};

struct TrainReport {
    std::vector<double> train_loss;  // per epoch, averaged over examples
    std::vector<double> val_loss;    // per epoch, eval mode; empty if no split
};

namespace detail {

inline RealTensor gather_batch(const std::vector<RealTensor>& items,
                               const std::vector<std::size_t>& order, std::size_t begin,
                               std::size_t end) {
    const auto& s = items[order[begin]].shape();
    RealTensor out(s.height, s.width, s.channels, end - begin);
    for (std::size_t i = begin; i < end; ++i) out.set_batch_item(i - begin, items[order[i]]);
    return out;
}

}  // namespace detail

// Minibatch training with per-epoch reshuffling. Aborts with a diagnostic if
// the loss turns non-finite.
inline TrainReport train_cdrn(CdrnModel& model, const TrainingSet& data, const TrainConfig& cfg) {
    data.validate();
    if (data.size() == 0) throw std::invalid_argument("train_cdrn: empty training set");
    if (cfg.batch_size < 1) throw std::invalid_argument("train_cdrn: batch_size must be >= 1");

    TrainReport report;
    if (cfg.epochs == 0) return report;

    const std::size_t n_val = std::size_t(cfg.validation_fraction * double(data.size()));
    const std::size_t n_train = data.size() - n_val;
    if (n_train == 0) throw std::invalid_argument("train_cdrn: validation split leaves no training data");

    struct ThreadGuard {
        int saved = nn_threads();
        ~ThreadGuard() { set_nn_threads(saved); }
    } thread_guard;
    set_nn_threads(cfg.threads);
    AdamOptimizer opt(cfg.adam, model.parameter_sizes());
    CdrnGrads grads = CdrnGrads::like(model);

    std::vector<std::size_t> order(n_train);
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        opt.set_learning_rate(cfg.adam.learning_rate * std::pow(cfg.lr_decay, double(epoch)));
        RngStream shuffle_rng = make_stream(cfg.seed, SeedDomain::kShuffle, epoch);
        for (std::size_t i = n_train; i-- > 1;) {
            const std::size_t j = shuffle_rng.below(i + 1);
            std::swap(order[i], order[j]);
        }

        double epoch_err = 0.0;
        for (std::size_t begin = 0; begin < n_train; begin += cfg.batch_size) {
            const std::size_t end = std::min(begin + cfg.batch_size, n_train);
            const RealTensor bx = detail::gather_batch(data.inputs, order, begin, end);
            const RealTensor by = detail::gather_batch(data.labels, order, begin, end);
            grads.zero();
            const double loss = cdrn_loss_and_grad(model, bx, by, grads);
            if (!std::isfinite(loss))
                throw std::runtime_error("train_cdrn: training diverged (non-finite loss) at epoch " +
                                         std::to_string(epoch) + ", step " +
                                         std::to_string(opt.step_count()));
            opt.step(model.parameters(), grads.flat());
            epoch_err += loss * double(end - begin);
        }
        report.train_loss.push_back(epoch_err / double(n_train));

        if (n_val > 0) {
            std::vector<std::size_t> val_order(n_val);
            for (std::size_t i = 0; i < n_val; ++i) val_order[i] = n_train + i;
            double val_err = 0.0;
            for (std::size_t begin = 0; begin < n_val; begin += cfg.batch_size) {
                const std::size_t end = std::min(begin + cfg.batch_size, n_val);
                const RealTensor bx = detail::gather_batch(data.inputs, val_order, begin, end);
                const RealTensor by = detail::gather_batch(data.labels, val_order, begin, end);
                val_err += cdrn_loss(model, bx, by, Mode::kEval) * double(end - begin);
            }
            report.val_loss.push_back(val_err / double(n_val));
        }
    }
    return report;
}

// Full estimator: coarse pseudoinverse estimate, denoise, back to complex.
inline CMatrix cdrn_estimate(const Observation& obs, const ReflectionSchedule& sched,
                             const CdrnModel& model) {
    const CMatrix coarse = denoise_observation(obs, sched);
    const RealTensor out = cdrn_forward(to_real_channels(coarse), model);
    return from_real_channels(out);
}

struct ActivationTrace {
    RealTensor input;                 // A_0
    std::vector<RealTensor> outputs;  // A_1 .. A_D
};

// Stage-by-stage outputs for visualizing the progressive noise removal.
inline ActivationTrace export_block_activations(const CMatrix& coarse, const CdrnModel& model) {
    ActivationTrace trace;
    trace.input = to_real_channels(coarse);
    RealTensor cur = trace.input;
    for (const auto& blk : model.blocks()) {
        const RealTensor residual = detail::residual_forward_eval(cur, blk);
        RealTensor next(cur.shape());
        for (std::size_t i = 0; i < next.size(); ++i)
            next.values()[i] = cur.values()[i] - residual.values()[i];
        trace.outputs.push_back(next);
        cur = std::move(next);
    }
    return trace;
}

}  // namespace irsce
