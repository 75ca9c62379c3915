#include <pnkit/nn.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include <pnkit/kernels.hpp>
#include <pnkit/resize.hpp>
#include <pnkit/rng.hpp>

namespace pnkit::nn {

namespace {

struct Pad {
    int top = 0, left = 0;
};

int effective_k(int k, int dilation) { return (k - 1) * dilation + 1; }

Pad same_pad(int in_h, int in_w, int eff_kh, int eff_kw, int sh, int sw) {
    const int out_h = same_out(in_h, sh);
    const int out_w = same_out(in_w, sw);
    const int ph = std::max(0, (out_h - 1) * sh + eff_kh - in_h);
    const int pw = std::max(0, (out_w - 1) * sw + eff_kw - in_w);
    return {ph / 2, pw / 2};  // extra padding falls on bottom/right
}

}  // namespace

int CnnModel::fc_input_size() const {
    const int h1 = same_out(config.input_h, config.conv1_stride);
    const int w1 = same_out(config.input_w, config.conv1_stride);
    const int h2 = same_out(h1, config.pool_stride);
    const int w2 = same_out(w1, config.pool_stride);
    const int h3 = same_out(h2, config.conv2_stride);
    const int w3 = same_out(w2, config.conv2_stride);
    return h3 * w3 * config.conv2_filters;
}

Tensor4 conv2d_forward(const Tensor4& x, const ConvLayer& layer) {
    if (x.c != layer.in_ch) raise(Errc::shape_mismatch, "conv2d_forward: channel mismatch");
    const auto& k = simd::active_kernels();
    const int eff_kh = effective_k(layer.kh, layer.dil_h);
    const int eff_kw = effective_k(layer.kw, layer.dil_w);
    const Pad pad = same_pad(x.h, x.w, eff_kh, eff_kw, layer.stride_h, layer.stride_w);
    const int out_h = same_out(x.h, layer.stride_h);
    const int out_w = same_out(x.w, layer.stride_w);

    Tensor4 out(x.n, out_h, out_w, layer.out_ch);
    const std::size_t tap_stride = static_cast<std::size_t>(layer.in_ch) * layer.out_ch;
    const std::size_t row_stride = static_cast<std::size_t>(layer.dil_h) * x.w * x.c;
    const std::size_t col_stride = static_cast<std::size_t>(layer.dil_w) * x.c;
    for (int n = 0; n < x.n; ++n) {
        for (int oy = 0; oy < out_h; ++oy) {
            const int y0 = oy * layer.stride_h - pad.top;
            const bool full_y = y0 >= 0 && y0 + (layer.kh - 1) * layer.dil_h < x.h;
            for (int ox = 0; ox < out_w; ++ox) {
                double* acc = out.slice(n, oy, ox);
                std::copy(layer.bias.begin(), layer.bias.end(), acc);
                const int x0 = ox * layer.stride_w - pad.left;
                if (full_y && x0 >= 0 && x0 + (layer.kw - 1) * layer.dil_w < x.w) {
                    k.conv_mac(acc, x.slice(n, y0, x0), row_stride, col_stride,
                               layer.kernel.data(), static_cast<std::size_t>(layer.kh),
                               static_cast<std::size_t>(layer.kw),
                               static_cast<std::size_t>(layer.in_ch),
                               static_cast<std::size_t>(layer.out_ch));
                    continue;
                }
                for (int ky = 0; ky < layer.kh; ++ky) {
                    const int iy = y0 + ky * layer.dil_h;
                    if (iy < 0 || iy >= x.h) continue;
                    for (int kx = 0; kx < layer.kw; ++kx) {
                        const int ix = x0 + kx * layer.dil_w;
                        if (ix < 0 || ix >= x.w) continue;
                        const double* w =
                            layer.kernel.data() + (static_cast<std::size_t>(ky) * layer.kw + kx) * tap_stride;
                        k.mac_outer(acc, x.slice(n, iy, ix), w,
                                    static_cast<std::size_t>(layer.in_ch),
                                    static_cast<std::size_t>(layer.out_ch));
                    }
                }
            }
        }
    }
    return out;
}

namespace {

// Per-channel batch statistics over N*H*W. Variance is the biased (1/M)
// estimate, used consistently for normalization and the running stats.
void batch_stats(const Tensor4& x, std::vector<double>& mean, std::vector<double>& var) {
    const int C = x.c;
    mean.assign(static_cast<std::size_t>(C), 0.0);
    var.assign(static_cast<std::size_t>(C), 0.0);
    const std::size_t pixels = x.size() / C;
    const double* p = x.data.data();
    for (std::size_t i = 0; i < pixels; ++i, p += C)
        for (int c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] += p[c];
    for (double& m : mean) m /= static_cast<double>(pixels);
    p = x.data.data();
    for (std::size_t i = 0; i < pixels; ++i, p += C)
        for (int c = 0; c < C; ++c) {
            const double d = p[c] - mean[static_cast<std::size_t>(c)];
            var[static_cast<std::size_t>(c)] += d * d;
        }
    for (double& v : var) v /= static_cast<double>(pixels);
}

Tensor4 bn_apply(const Tensor4& x, const BatchNormLayer& layer, const std::vector<double>& mean,
                 const std::vector<double>& var) {
    const auto& k = simd::active_kernels();
    const int C = x.c;
    std::vector<double> scale(static_cast<std::size_t>(C)), shift(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c) {
        const auto uc = static_cast<std::size_t>(c);
        const double inv = 1.0 / std::sqrt(var[uc] + layer.epsilon);
        scale[uc] = layer.gamma[uc] * inv;
        shift[uc] = layer.beta[uc] - mean[uc] * scale[uc];
    }
    Tensor4 out(x.n, x.h, x.w, x.c);
    const std::size_t pixels = x.size() / C;
    for (std::size_t i = 0; i < pixels; ++i)
        k.mul_add(out.data.data() + i * C, x.data.data() + i * C, scale.data(), shift.data(),
                  static_cast<std::size_t>(C));
    return out;
}

}  // namespace

Tensor4 batchnorm_forward(const Tensor4& x, BatchNormLayer& layer, BnMode mode) {
    if (x.c != layer.channels) raise(Errc::shape_mismatch, "batchnorm_forward: channel mismatch");
    if (mode == BnMode::infer) return bn_apply(x, layer, layer.running_mean, layer.running_var);

    std::vector<double> mean, var;
    batch_stats(x, mean, var);
    Tensor4 out = bn_apply(x, layer, mean, var);
    const double m = layer.momentum_stat;
    for (int c = 0; c < layer.channels; ++c) {
        const auto uc = static_cast<std::size_t>(c);
        layer.running_mean[uc] = (1.0 - m) * layer.running_mean[uc] + m * mean[uc];
        layer.running_var[uc] = (1.0 - m) * layer.running_var[uc] + m * var[uc];
    }
    return out;
}

Tensor4 clipped_relu(const Tensor4& x, double ceiling) {
    if (ceiling <= 0.0) raise(Errc::bad_config, "clipped_relu: ceiling must be > 0");
    Tensor4 out(x.n, x.h, x.w, x.c);
    for (std::size_t i = 0; i < x.size(); ++i)
        out.data[i] = std::min(std::max(x.data[i], 0.0), ceiling);
    return out;
}

namespace {

Tensor4 maxpool_impl(const Tensor4& x, const PoolSpec& pool, std::vector<std::size_t>* argmax) {
    const Pad pad = same_pad(x.h, x.w, pool.kh, pool.kw, pool.stride_h, pool.stride_w);
    const int out_h = same_out(x.h, pool.stride_h);
    const int out_w = same_out(x.w, pool.stride_w);
    Tensor4 out(x.n, out_h, out_w, x.c);
    if (argmax) argmax->assign(out.size(), 0);

    for (int n = 0; n < x.n; ++n) {
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                double* dst = out.slice(n, oy, ox);
                for (int c = 0; c < x.c; ++c) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_idx = 0;
                    for (int ky = 0; ky < pool.kh; ++ky) {
                        const int iy = oy * pool.stride_h - pad.top + ky;
                        if (iy < 0 || iy >= x.h) continue;
                        for (int kx = 0; kx < pool.kw; ++kx) {
                            const int ix = ox * pool.stride_w - pad.left + kx;
                            if (ix < 0 || ix >= x.w) continue;
                            const std::size_t idx =
                                ((static_cast<std::size_t>(n) * x.h + iy) * x.w + ix) * x.c + c;
                            if (x.data[idx] > best) {
                                best = x.data[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    dst[c] = best;
                    if (argmax) {
                        const std::size_t oidx =
                            ((static_cast<std::size_t>(n) * out_h + oy) * out_w + ox) * x.c + c;
                        (*argmax)[oidx] = best_idx;
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace

Tensor4 maxpool(const Tensor4& x, const PoolSpec& pool) { return maxpool_impl(x, pool, nullptr); }

std::vector<std::array<double, 2>> fc_softmax_forward(const Tensor4& x, const FcLayer& fc) {
    const std::size_t per_sample = x.size() / static_cast<std::size_t>(std::max(1, x.n));
    if (per_sample != static_cast<std::size_t>(fc.in) || fc.out != 2)
        raise(Errc::shape_mismatch, "fc_softmax_forward: weight shape mismatch");
    const auto& k = simd::active_kernels();
    std::vector<std::array<double, 2>> probs(static_cast<std::size_t>(x.n));
    for (int n = 0; n < x.n; ++n) {
        double logits[2] = {fc.bias[0], fc.bias[1]};
        k.mac_outer(logits, x.data.data() + static_cast<std::size_t>(n) * per_sample,
                    fc.weights.data(), per_sample, 2);
        const double mx = std::max(logits[0], logits[1]);
        const double e0 = std::exp(logits[0] - mx);
        const double e1 = std::exp(logits[1] - mx);
        probs[static_cast<std::size_t>(n)] = {e0 / (e0 + e1), e1 / (e0 + e1)};
    }
    return probs;
}

double cross_entropy_loss(const std::array<double, 2>& probs, int label) {
    const double p = std::max(probs[static_cast<std::size_t>(label)], 1e-12);
    return -std::log(p);
}

void sgdm_step(std::vector<double>& params, std::vector<double>& velocity,
               const std::vector<double>& grads, double lr, double momentum) {
    if (params.size() != velocity.size() || params.size() != grads.size())
        raise(Errc::shape_mismatch, "sgdm_step: size mismatch");
    simd::active_kernels().sgdm_update(params.data(), velocity.data(), grads.data(), lr, momentum,
                                       params.size());
}

// --- model construction ----------------------------------------------------

namespace {

ConvLayer make_conv(int k, int in_ch, int out_ch, int dilation, int stride, Rng& rng) {
    ConvLayer layer;
    layer.kh = layer.kw = k;
    layer.in_ch = in_ch;
    layer.out_ch = out_ch;
    layer.dil_h = layer.dil_w = dilation;
    layer.stride_h = layer.stride_w = stride;
    layer.kernel.resize(static_cast<std::size_t>(k) * k * in_ch * out_ch);
    const double std_dev = std::sqrt(2.0 / (static_cast<double>(k) * k * in_ch));
    for (double& w : layer.kernel) w = rng.normal(0.0, std_dev);
    layer.bias.assign(static_cast<std::size_t>(out_ch), 0.0);
    return layer;
}

BatchNormLayer make_bn(int channels) {
    BatchNormLayer bn;
    bn.channels = channels;
    bn.gamma.assign(static_cast<std::size_t>(channels), 1.0);
    bn.beta.assign(static_cast<std::size_t>(channels), 0.0);
    bn.running_mean.assign(static_cast<std::size_t>(channels), 0.0);
    bn.running_var.assign(static_cast<std::size_t>(channels), 1.0);
    return bn;
}

CnnModel init_model(const CnnConfig& config, Rng& rng, std::uint64_t seed) {
    CnnModel model;
    model.config = config;
    model.options.seed = seed;
    model.conv1 = make_conv(config.conv1_k, config.input_c, config.conv1_filters,
                            config.conv1_dilation, config.conv1_stride, rng);
    model.bn1 = make_bn(config.conv1_filters);
    model.conv2 = make_conv(config.conv2_k, config.conv1_filters, config.conv2_filters,
                            config.conv2_dilation, config.conv2_stride, rng);
    model.bn2 = make_bn(config.conv2_filters);
    model.fc.in = model.fc_input_size();
    model.fc.out = 2;
    model.fc.weights.resize(static_cast<std::size_t>(model.fc.in) * 2);
    const double std_dev = std::sqrt(2.0 / static_cast<double>(model.fc.in));
    for (double& w : model.fc.weights) w = rng.normal(0.0, std_dev);
    model.fc.bias.assign(2, 0.0);
    return model;
}

}  // namespace

CnnModel make_model(const CnnConfig& config, std::uint64_t seed) {
    Rng rng(seed);
    return init_model(config, rng, seed);
}

// --- forward/backward ----------------------------------------------------------

namespace {

struct BnCache {
    std::vector<double> mean, inv;  // inv = 1/sqrt(var + eps)
    std::vector<double> var;
};

struct ForwardCache {
    Tensor4 z1;  // conv1 out
    BnCache bn1;
    Tensor4 z2;  // bn1 out
    Tensor4 z3;  // relu1 out
    Tensor4 z4;  // pool out
    std::vector<std::size_t> pool_argmax;
    Tensor4 z5;  // conv2 out
    BnCache bn2;
    Tensor4 z6;  // bn2 out
    Tensor4 z7;  // relu2 out
    std::vector<std::array<double, 2>> probs;
};

Tensor4 bn_forward_cached(const Tensor4& x, const BatchNormLayer& layer, BnCache& cache) {
    batch_stats(x, cache.mean, cache.var);
    cache.inv.resize(cache.var.size());
    for (std::size_t c = 0; c < cache.var.size(); ++c)
        cache.inv[c] = 1.0 / std::sqrt(cache.var[c] + layer.epsilon);
    return bn_apply(x, layer, cache.mean, cache.var);
}

double forward_train_cached(const CnnModel& model, const Tensor4& x, const std::vector<int>& labels,
                            ForwardCache& cache) {
    cache.z1 = conv2d_forward(x, model.conv1);
    cache.z2 = bn_forward_cached(cache.z1, model.bn1, cache.bn1);
    cache.z3 = clipped_relu(cache.z2, model.config.relu_ceiling);
    PoolSpec pool{model.config.pool_k, model.config.pool_k, model.config.pool_stride,
                  model.config.pool_stride};
    cache.z4 = maxpool_impl(cache.z3, pool, &cache.pool_argmax);
    cache.z5 = conv2d_forward(cache.z4, model.conv2);
    cache.z6 = bn_forward_cached(cache.z5, model.bn2, cache.bn2);
    cache.z7 = clipped_relu(cache.z6, model.config.relu_ceiling);
    cache.probs = fc_softmax_forward(cache.z7, model.fc);

    double loss = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        loss += cross_entropy_loss(cache.probs[i], labels[i]);
    return loss / static_cast<double>(labels.size());
}

// dLoss/dx for a batch-norm layer given dLoss/dy and the batch statistics.
Tensor4 bn_backward(const Tensor4& x, const Tensor4& dy, const BatchNormLayer& layer,
                    const BnCache& cache, std::vector<double>& dgamma, std::vector<double>& dbeta) {
    const int C = x.c;
    const std::size_t pixels = x.size() / C;
    dgamma.assign(static_cast<std::size_t>(C), 0.0);
    dbeta.assign(static_cast<std::size_t>(C), 0.0);
    for (std::size_t i = 0; i < pixels; ++i) {
        const double* xp = x.data.data() + i * C;
        const double* dp = dy.data.data() + i * C;
        for (int c = 0; c < C; ++c) {
            const auto uc = static_cast<std::size_t>(c);
            const double xhat = (xp[c] - cache.mean[uc]) * cache.inv[uc];
            dbeta[uc] += dp[c];
            dgamma[uc] += dp[c] * xhat;
        }
    }
    Tensor4 dx(x.n, x.h, x.w, x.c);
    const double inv_m = 1.0 / static_cast<double>(pixels);
    for (std::size_t i = 0; i < pixels; ++i) {
        const double* xp = x.data.data() + i * C;
        const double* dp = dy.data.data() + i * C;
        double* dst = dx.data.data() + i * C;
        for (int c = 0; c < C; ++c) {
            const auto uc = static_cast<std::size_t>(c);
            const double xhat = (xp[c] - cache.mean[uc]) * cache.inv[uc];
            dst[c] = layer.gamma[uc] * cache.inv[uc] *
                     (dp[c] - dbeta[uc] * inv_m - xhat * dgamma[uc] * inv_m);
        }
    }
    return dx;
}

// Gradient gate of clipped ReLU: passes only where the pre-activation is
// strictly inside (0, ceiling).
void relu_backward_inplace(Tensor4& dy, const Tensor4& pre, double ceiling) {
    for (std::size_t i = 0; i < dy.size(); ++i)
        if (pre.data[i] <= 0.0 || pre.data[i] >= ceiling) dy.data[i] = 0.0;
}

Tensor4 conv2d_backward(const Tensor4& x, const Tensor4& dy, const ConvLayer& layer,
                        std::vector<double>& dkernel, std::vector<double>& dbias) {
    const auto& k = simd::active_kernels();
    const int eff_kh = effective_k(layer.kh, layer.dil_h);
    const int eff_kw = effective_k(layer.kw, layer.dil_w);
    const Pad pad = same_pad(x.h, x.w, eff_kh, eff_kw, layer.stride_h, layer.stride_w);

    dkernel.assign(layer.kernel.size(), 0.0);
    dbias.assign(layer.bias.size(), 0.0);
    Tensor4 dx(x.n, x.h, x.w, x.c);
    const std::size_t tap_stride = static_cast<std::size_t>(layer.in_ch) * layer.out_ch;
    const std::size_t row_stride = static_cast<std::size_t>(layer.dil_h) * x.w * x.c;
    const std::size_t col_stride = static_cast<std::size_t>(layer.dil_w) * x.c;

    for (int n = 0; n < dy.n; ++n) {
        for (int oy = 0; oy < dy.h; ++oy) {
            const int y0 = oy * layer.stride_h - pad.top;
            const bool full_y = y0 >= 0 && y0 + (layer.kh - 1) * layer.dil_h < x.h;
            for (int ox = 0; ox < dy.w; ++ox) {
                const double* dyp = dy.slice(n, oy, ox);
                k.add_acc(dbias.data(), dyp, static_cast<std::size_t>(layer.out_ch));
                const int x0 = ox * layer.stride_w - pad.left;
                if (full_y && x0 >= 0 && x0 + (layer.kw - 1) * layer.dil_w < x.w) {
                    k.conv_grad_mac(dx.slice(n, y0, x0), dkernel.data(), x.slice(n, y0, x0),
                                    row_stride, col_stride, layer.kernel.data(), dyp,
                                    static_cast<std::size_t>(layer.kh),
                                    static_cast<std::size_t>(layer.kw),
                                    static_cast<std::size_t>(layer.in_ch),
                                    static_cast<std::size_t>(layer.out_ch));
                    continue;
                }
                for (int ky = 0; ky < layer.kh; ++ky) {
                    const int iy = y0 + ky * layer.dil_h;
                    if (iy < 0 || iy >= x.h) continue;
                    for (int kx = 0; kx < layer.kw; ++kx) {
                        const int ix = x0 + kx * layer.dil_w;
                        if (ix < 0 || ix >= x.w) continue;
                        const std::size_t tap = (static_cast<std::size_t>(ky) * layer.kw + kx) * tap_stride;
                        k.outer_acc(dkernel.data() + tap, x.slice(n, iy, ix), dyp,
                                    static_cast<std::size_t>(layer.in_ch),
                                    static_cast<std::size_t>(layer.out_ch));
                        k.matvec_acc(dx.slice(n, iy, ix), layer.kernel.data() + tap, dyp,
                                     static_cast<std::size_t>(layer.in_ch),
                                     static_cast<std::size_t>(layer.out_ch));
                    }
                }
            }
        }
    }
    return dx;
}

struct BatchStats {
    std::vector<double> bn1_mean, bn1_var, bn2_mean, bn2_var;
};

Gradients backward_impl(const CnnModel& model, const Tensor4& batch, const std::vector<int>& labels,
                        double* loss_out, BatchStats* stats_out) {
    if (batch.n != static_cast<int>(labels.size()))
        raise(Errc::shape_mismatch, "backward: batch/label count mismatch");
    ForwardCache cache;
    const double loss = forward_train_cached(model, batch, labels, cache);
    if (loss_out) *loss_out = loss;
    if (stats_out) {
        stats_out->bn1_mean = cache.bn1.mean;
        stats_out->bn1_var = cache.bn1.var;
        stats_out->bn2_mean = cache.bn2.mean;
        stats_out->bn2_var = cache.bn2.var;
    }

    Gradients g;
    const auto& k = simd::active_kernels();
    const int N = batch.n;
    const std::size_t flat = static_cast<std::size_t>(model.fc.in);

    // Softmax + mean cross-entropy -> dlogits = (p - onehot)/N.
    g.fc_weights.assign(model.fc.weights.size(), 0.0);
    g.fc_bias.assign(2, 0.0);
    Tensor4 d7(cache.z7.n, cache.z7.h, cache.z7.w, cache.z7.c);
    for (int n = 0; n < N; ++n) {
        const auto un = static_cast<std::size_t>(n);
        double dlogit[2];
        for (int j = 0; j < 2; ++j) {
            const double onehot = (labels[un] == j) ? 1.0 : 0.0;
            dlogit[j] = (cache.probs[un][static_cast<std::size_t>(j)] - onehot) / N;
            g.fc_bias[static_cast<std::size_t>(j)] += dlogit[j];
        }
        const double* xin = cache.z7.data.data() + un * flat;
        k.outer_acc(g.fc_weights.data(), xin, dlogit, flat, 2);
        k.matvec_acc(d7.data.data() + un * flat, model.fc.weights.data(), dlogit, flat, 2);
    }

    relu_backward_inplace(d7, cache.z6, model.config.relu_ceiling);
    Tensor4 d5 = bn_backward(cache.z5, d7, model.bn2, cache.bn2, g.bn2_gamma, g.bn2_beta);
    Tensor4 d4 = conv2d_backward(cache.z4, d5, model.conv2, g.conv2_kernel, g.conv2_bias);

    // Max-pool scatters gradient back to the winning input cells.
    Tensor4 d3(cache.z3.n, cache.z3.h, cache.z3.w, cache.z3.c);
    for (std::size_t i = 0; i < d4.size(); ++i) d3.data[cache.pool_argmax[i]] += d4.data[i];

    relu_backward_inplace(d3, cache.z2, model.config.relu_ceiling);
    Tensor4 d1 = bn_backward(cache.z1, d3, model.bn1, cache.bn1, g.bn1_gamma, g.bn1_beta);
    conv2d_backward(batch, d1, model.conv1, g.conv1_kernel, g.conv1_bias);
    return g;
}

}  // namespace

double training_loss(const CnnModel& model, const Tensor4& batch, const std::vector<int>& labels) {
    ForwardCache cache;
    return forward_train_cached(model, batch, labels, cache);
}

Gradients backward(const CnnModel& model, const Tensor4& batch, const std::vector<int>& labels,
                   double* loss_out) {
    return backward_impl(model, batch, labels, loss_out, nullptr);
}

std::vector<std::array<double, 2>> forward_infer(const CnnModel& model, const Tensor4& batch) {
    Tensor4 z1 = conv2d_forward(batch, model.conv1);
    Tensor4 z2 = bn_apply(z1, model.bn1, model.bn1.running_mean, model.bn1.running_var);
    Tensor4 z3 = clipped_relu(z2, model.config.relu_ceiling);
    PoolSpec pool{model.config.pool_k, model.config.pool_k, model.config.pool_stride,
                  model.config.pool_stride};
    Tensor4 z4 = maxpool(z3, pool);
    Tensor4 z5 = conv2d_forward(z4, model.conv2);
    Tensor4 z6 = bn_apply(z5, model.bn2, model.bn2.running_mean, model.bn2.running_var);
    Tensor4 z7 = clipped_relu(z6, model.config.relu_ceiling);
    return fc_softmax_forward(z7, model.fc);
}

// --- training loop ---------------------------------------------------------

namespace {

Tensor4 to_tensor(const std::vector<const RgbImage*>& images) {
    const int h = images[0]->height, w = images[0]->width;
    Tensor4 out(static_cast<int>(images.size()), h, w, 3);
    for (std::size_t n = 0; n < images.size(); ++n) {
        const std::uint8_t* src = images[n]->data.data();
        double* dst = out.data.data() + n * static_cast<std::size_t>(h) * w * 3;
        const std::size_t count = static_cast<std::size_t>(h) * w * 3;
        for (std::size_t i = 0; i < count; ++i) dst[i] = src[i] / 255.0;
    }
    return out;
}

double evaluate_accuracy(const CnnModel& model, const std::vector<LabeledRaster>& samples,
                         int batch_size) {
    std::size_t correct = 0;
    std::size_t i = 0;
    while (i < samples.size()) {
        const std::size_t end = std::min(samples.size(), i + static_cast<std::size_t>(batch_size));
        std::vector<const RgbImage*> ptrs;
        for (std::size_t j = i; j < end; ++j) ptrs.push_back(&samples[j].image);
        const auto probs = forward_infer(model, to_tensor(ptrs));
        for (std::size_t j = i; j < end; ++j) {
            const auto& p = probs[j - i];
            const int label = (p[1] > p[0]) ? 1 : 0;
            correct += (label == samples[j].label);
        }
        i = end;
    }
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

void apply_updates(CnnModel& model, Gradients& velocity, const Gradients& grads,
                   const TrainOptions& opt) {
    const auto step = [&](std::vector<double>& p, std::vector<double>& v, const std::vector<double>& g) {
        if (v.empty()) v.assign(p.size(), 0.0);
        sgdm_step(p, v, g, opt.learning_rate, opt.momentum);
    };
    step(model.conv1.kernel, velocity.conv1_kernel, grads.conv1_kernel);
    step(model.conv1.bias, velocity.conv1_bias, grads.conv1_bias);
    step(model.bn1.gamma, velocity.bn1_gamma, grads.bn1_gamma);
    step(model.bn1.beta, velocity.bn1_beta, grads.bn1_beta);
    step(model.conv2.kernel, velocity.conv2_kernel, grads.conv2_kernel);
    step(model.conv2.bias, velocity.conv2_bias, grads.conv2_bias);
    step(model.bn2.gamma, velocity.bn2_gamma, grads.bn2_gamma);
    step(model.bn2.beta, velocity.bn2_beta, grads.bn2_beta);
    step(model.fc.weights, velocity.fc_weights, grads.fc_weights);
    step(model.fc.bias, velocity.fc_bias, grads.fc_bias);
}

void update_running_stats(BatchNormLayer& bn, const std::vector<double>& mean,
                          const std::vector<double>& var) {
    const double m = bn.momentum_stat;
    for (std::size_t c = 0; c < mean.size(); ++c) {
        bn.running_mean[c] = (1.0 - m) * bn.running_mean[c] + m * mean[c];
        bn.running_var[c] = (1.0 - m) * bn.running_var[c] + m * var[c];
    }
}

}  // namespace

TrainResult train_cnn(const std::vector<LabeledRaster>& train_set,
                      const std::vector<LabeledRaster>& val_set, const CnnConfig& config,
                      const TrainOptions& options) {
    if (train_set.empty() || val_set.empty())
        raise(Errc::empty_dataset, "train_cnn: empty training or validation set");
    int class_counts[2] = {0, 0};
    for (const auto& s : train_set) {
        if (s.label != 0 && s.label != 1) raise(Errc::bad_label, "train_cnn: label must be 0 or 1");
        ++class_counts[s.label];
    }
    if (class_counts[0] == 0 || class_counts[1] == 0)
        raise(Errc::empty_class, "train_cnn: a class has no training samples");
    if (options.learning_rate <= 0.0 || options.momentum < 0.0 || options.momentum >= 1.0 ||
        options.max_epochs < 1 || options.batch_size < 1 || options.validation_frequency < 1)
        raise(Errc::bad_config, "train_cnn: invalid training options");

    // All randomness (init + shuffling) flows from one seeded stream.
    Rng rng(options.seed);
    TrainResult result;
    result.model = init_model(config, rng, options.seed);
    result.model.options = options;

    // Resize once up front; mini-batch tensors are built on the fly.
    auto prepared = [&](const std::vector<LabeledRaster>& src) {
        std::vector<LabeledRaster> out;
        out.reserve(src.size());
        for (const auto& s : src) {
            if (s.image.width == config.input_w && s.image.height == config.input_h)
                out.push_back(s);
            else
                out.push_back({resize_image(s.image, config.input_w, config.input_h), s.label});
        }
        return out;
    };
    const std::vector<LabeledRaster> train = prepared(train_set);
    const std::vector<LabeledRaster> val = prepared(val_set);

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    Gradients velocity;
    int iteration = 0;
    double last_val_acc = 0.0;
    double last_loss = 0.0;

    for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
        if (options.shuffle_each_epoch) rng.shuffle(order);
        std::size_t pos = 0;
        while (pos < order.size()) {
            const std::size_t end =
                std::min(order.size(), pos + static_cast<std::size_t>(options.batch_size));
            std::vector<const RgbImage*> ptrs;
            std::vector<int> labels;
            for (std::size_t i = pos; i < end; ++i) {
                ptrs.push_back(&train[order[i]].image);
                labels.push_back(train[order[i]].label);
            }
            const Tensor4 batch = to_tensor(ptrs);

            BatchStats stats;
            const Gradients grads = backward_impl(result.model, batch, labels, &last_loss, &stats);
            apply_updates(result.model, velocity, grads, options);
            update_running_stats(result.model.bn1, stats.bn1_mean, stats.bn1_var);
            update_running_stats(result.model.bn2, stats.bn2_mean, stats.bn2_var);
            ++iteration;

            if (iteration % options.validation_frequency == 0) {
                last_val_acc = evaluate_accuracy(result.model, val, options.batch_size);
                result.log.push_back({iteration, epoch, last_loss, last_val_acc});
            }
            pos = end;
        }
    }

    // Close the log with a final validation point if the last iteration
    // didn't land on the validation cadence.
    if (result.log.empty() || result.log.back().iteration != iteration) {
        last_val_acc = evaluate_accuracy(result.model, val, options.batch_size);
        result.log.push_back({iteration, options.max_epochs, last_loss, last_val_acc});
    }

    result.model.trained = true;
    result.model.epochs_run = options.max_epochs;
    result.model.final_val_accuracy = last_val_acc;
    return result;
}

Prediction predict(const CnnModel& model, const RgbImage& img) {
    if (!model.trained) raise(Errc::untrained_model, "predict: model is not trained");
    const RgbImage* src = &img;
    RgbImage resized;
    if (img.width != model.config.input_w || img.height != model.config.input_h) {
        resized = resize_image(img, model.config.input_w, model.config.input_h);
        src = &resized;
    }
    const auto probs = forward_infer(model, to_tensor({src}));
    Prediction p;
    p.probs = probs[0];
    p.label = (p.probs[1] > p.probs[0]) ? 1 : 0;
    return p;
}

// --- serialization -----------------------------------------------------------

namespace {

constexpr char MAGIC[] = "PNKITCNN1";

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

void put_vec(std::vector<std::uint8_t>& out, const std::vector<double>& v) {
    put_u64(out, v.size());
    for (double x : v) put_f64(out, x);
}

struct Reader {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) raise(Errc::unreadable_file, "model container truncated");
    }
    std::uint8_t u8() {
        need(1);
        return buf[pos++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos++]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::vector<double> vec() {
        const std::uint64_t n = u64();
        need(n * 8);
        std::vector<double> v(n);
        for (std::uint64_t i = 0; i < n; ++i) v[i] = f64();
        return v;
    }
};

void put_bn(std::vector<std::uint8_t>& out, const BatchNormLayer& bn) {
    put_u32(out, static_cast<std::uint32_t>(bn.channels));
    put_f64(out, bn.epsilon);
    put_f64(out, bn.momentum_stat);
    put_vec(out, bn.gamma);
    put_vec(out, bn.beta);
    put_vec(out, bn.running_mean);
    put_vec(out, bn.running_var);
}

BatchNormLayer read_bn(Reader& r) {
    BatchNormLayer bn;
    bn.channels = static_cast<int>(r.u32());
    bn.epsilon = r.f64();
    bn.momentum_stat = r.f64();
    bn.gamma = r.vec();
    bn.beta = r.vec();
    bn.running_mean = r.vec();
    bn.running_var = r.vec();
    return bn;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const CnnModel& model) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), MAGIC, MAGIC + 9);
    const CnnConfig& c = model.config;
    for (int v : {c.input_h, c.input_w, c.input_c, c.conv1_k, c.conv1_filters, c.conv1_dilation,
                  c.conv1_stride, c.pool_k, c.pool_stride, c.conv2_k, c.conv2_filters,
                  c.conv2_dilation, c.conv2_stride})
        put_u32(out, static_cast<std::uint32_t>(v));
    put_f64(out, c.relu_ceiling);

    const TrainOptions& o = model.options;
    put_f64(out, o.learning_rate);
    put_f64(out, o.momentum);
    put_u32(out, static_cast<std::uint32_t>(o.max_epochs));
    put_u32(out, static_cast<std::uint32_t>(o.batch_size));
    put_u32(out, static_cast<std::uint32_t>(o.validation_frequency));
    put_u8(out, o.shuffle_each_epoch ? 1 : 0);
    put_u64(out, o.seed);

    put_u8(out, model.trained ? 1 : 0);
    put_u32(out, static_cast<std::uint32_t>(model.epochs_run));
    put_f64(out, model.final_val_accuracy);

    put_vec(out, model.conv1.kernel);
    put_vec(out, model.conv1.bias);
    put_bn(out, model.bn1);
    put_vec(out, model.conv2.kernel);
    put_vec(out, model.conv2.bias);
    put_bn(out, model.bn2);
    put_u32(out, static_cast<std::uint32_t>(model.fc.in));
    put_vec(out, model.fc.weights);
    put_vec(out, model.fc.bias);
    return out;
}

CnnModel deserialize_model(const std::vector<std::uint8_t>& bytes) {
    Reader r{bytes};
    r.need(9);
    if (std::memcmp(bytes.data(), MAGIC, 9) != 0)
        raise(Errc::unsupported_format, "not a PNKITCNN1 container");
    r.pos = 9;

    CnnModel model;
    CnnConfig& c = model.config;
    for (int* v : {&c.input_h, &c.input_w, &c.input_c, &c.conv1_k, &c.conv1_filters,
                   &c.conv1_dilation, &c.conv1_stride, &c.pool_k, &c.pool_stride, &c.conv2_k,
                   &c.conv2_filters, &c.conv2_dilation, &c.conv2_stride})
        *v = static_cast<int>(r.u32());
    c.relu_ceiling = r.f64();

    TrainOptions& o = model.options;
    o.learning_rate = r.f64();
    o.momentum = r.f64();
    o.max_epochs = static_cast<int>(r.u32());
    o.batch_size = static_cast<int>(r.u32());
    o.validation_frequency = static_cast<int>(r.u32());
    o.shuffle_each_epoch = r.u8() != 0;
    o.seed = r.u64();

    model.trained = r.u8() != 0;
    model.epochs_run = static_cast<int>(r.u32());
    model.final_val_accuracy = r.f64();

    auto fill_conv = [&](ConvLayer& conv, int k, int in_ch, int out_ch, int dilation, int stride) {
        conv.kh = conv.kw = k;
        conv.in_ch = in_ch;
        conv.out_ch = out_ch;
        conv.dil_h = conv.dil_w = dilation;
        conv.stride_h = conv.stride_w = stride;
        conv.kernel = r.vec();
        conv.bias = r.vec();
        if (conv.kernel.size() != static_cast<std::size_t>(k) * k * in_ch * out_ch ||
            conv.bias.size() != static_cast<std::size_t>(out_ch))
            raise(Errc::unreadable_file, "model container: conv size mismatch");
    };
    fill_conv(model.conv1, c.conv1_k, c.input_c, c.conv1_filters, c.conv1_dilation, c.conv1_stride);
    model.bn1 = read_bn(r);
    fill_conv(model.conv2, c.conv2_k, c.conv1_filters, c.conv2_filters, c.conv2_dilation,
              c.conv2_stride);
    model.bn2 = read_bn(r);
    model.fc.in = static_cast<int>(r.u32());
    model.fc.out = 2;
    model.fc.weights = r.vec();
    model.fc.bias = r.vec();
    if (model.fc.in != model.fc_input_size())
        raise(Errc::unreadable_file, "model container: FC size inconsistent with layer spec");
    return model;
}

void save_model(const CnnModel& model, const std::string& path) {
    const auto bytes = serialize_model(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(Errc::unreadable_file, "cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

CnnModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(Errc::unreadable_file, "cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

void write_training_log_csv(const std::vector<TrainLogEntry>& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) raise(Errc::unreadable_file, "cannot write " + path);
    out << "iteration,epoch,train_loss,val_accuracy\n";
    char buf[128];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.10g,%.10g\n", e.iteration, e.epoch, e.train_loss,
                      e.val_accuracy);
        out << buf;
    }
}

}  // namespace pnkit::nn
