#pragma once

/**
 * From-scratch neural-network layers with exact backpropagation:
 * 1-D convolution (same zero padding), max pooling, inverted dropout,
 * dense, LSTM with full backpropagation through time, relu/softmax,
 * categorical cross-entropy, and the RMSprop optimizer.
 *
 * All math is in 64-bit floats. Layers cache what their backward pass
 * needs; backward accumulates into the layer's gradient tensors.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "serm/errors.hpp"
#include "serm/rng.hpp"
#include "serm/tensor.hpp"

namespace serm::nn {

enum class Mode { train, eval };

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// Conv1D, stride 1, same zero padding, odd kernel

class Conv1D {
public:
    Conv1D(std::size_t in_channels, std::size_t out_channels, std::size_t kernel)
        : c_in_(in_channels), c_out_(out_channels), k_(kernel) {
        if (kernel % 2 == 0) {
            throw DimensionMismatch("Conv1D: kernel must be odd for symmetric same padding");
        }
        kernels_ = Tensor::zeros({c_out_, k_, c_in_});
        bias_ = Tensor::zeros({c_out_});
        grad_kernels_ = Tensor::zeros({c_out_, k_, c_in_});
        grad_bias_ = Tensor::zeros({c_out_});
    }

    void init(Rng& rng) {
        const double a = std::sqrt(6.0 / static_cast<double>(k_ * c_in_ + k_ * c_out_));
        for (auto& w : kernels_.data) w = rng.uniform(-a, a);
        bias_.fill(0.0);
    }

    std::size_t out_channels() const { return c_out_; }

    /// x: [T x c_in] row-major; returns [T x c_out].
    std::vector<double> forward(const std::vector<double>& x, std::size_t t_len) {
        if (x.size() != t_len * c_in_) {
            throw DimensionMismatch("Conv1D::forward: input size mismatch");
        }
        x_ = x;
        t_ = t_len;
        const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k_ / 2);
        std::vector<double> y(t_len * c_out_);
        for (std::size_t t = 0; t < t_len; ++t) {
            for (std::size_t o = 0; o < c_out_; ++o) {
                double acc = bias_[o];
                for (std::size_t k = 0; k < k_; ++k) {
                    const std::ptrdiff_t ti =
                        static_cast<std::ptrdiff_t>(t + k) - pad;
                    if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(t_len)) continue;
                    const double* xr = x.data() + static_cast<std::size_t>(ti) * c_in_;
                    const double* kr = kernels_.data.data() + (o * k_ + k) * c_in_;
                    for (std::size_t c = 0; c < c_in_; ++c) {
                        acc += kr[c] * xr[c];
                    }
                }
                y[t * c_out_ + o] = acc;
            }
        }
        return y;
    }

    std::vector<double> backward(const std::vector<double>& grad_y) {
        if (grad_y.size() != t_ * c_out_) {
            throw DimensionMismatch("Conv1D::backward: gradient size mismatch");
        }
        const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k_ / 2);
        std::vector<double> grad_x(t_ * c_in_, 0.0);
        for (std::size_t t = 0; t < t_; ++t) {
            for (std::size_t o = 0; o < c_out_; ++o) {
                const double g = grad_y[t * c_out_ + o];
                grad_bias_[o] += g;
                for (std::size_t k = 0; k < k_; ++k) {
                    const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(t + k) - pad;
                    if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(t_)) continue;
                    const double* xr = x_.data() + static_cast<std::size_t>(ti) * c_in_;
                    double* gxr = grad_x.data() + static_cast<std::size_t>(ti) * c_in_;
                    const double* kr = kernels_.data.data() + (o * k_ + k) * c_in_;
                    double* gkr = grad_kernels_.data.data() + (o * k_ + k) * c_in_;
                    for (std::size_t c = 0; c < c_in_; ++c) {
                        gkr[c] += g * xr[c];
                        gxr[c] += g * kr[c];
                    }
                }
            }
        }
        return grad_x;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
        out.push_back({prefix + "/kernels", &kernels_, &grad_kernels_});
        out.push_back({prefix + "/bias", &bias_, &grad_bias_});
    }

private:
    std::size_t c_in_, c_out_, k_;
    Tensor kernels_, bias_, grad_kernels_, grad_bias_;
    std::vector<double> x_;
    std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Max pooling, width 2, stride 2; odd tails become a singleton window

class MaxPool1D {
public:
    /// x: [T x C]; returns [ceil(T/2) x C].
    std::vector<double> forward(const std::vector<double>& x, std::size_t t_len,
                                std::size_t channels) {
        t_in_ = t_len;
        c_ = channels;
        const std::size_t t_out = (t_len + 1) / 2;
        std::vector<double> y(t_out * channels);
        argmax_.resize(t_out * channels);
        for (std::size_t t = 0; t < t_out; ++t) {
            for (std::size_t c = 0; c < channels; ++c) {
                const std::size_t i0 = 2 * t;
                const std::size_t i1 = std::min(2 * t + 1, t_len - 1);
                const double v0 = x[i0 * channels + c];
                const double v1 = x[i1 * channels + c];
                // lower index wins ties
                const std::size_t best = (i1 != i0 && v1 > v0) ? i1 : i0;
                y[t * channels + c] = x[best * channels + c];
                argmax_[t * channels + c] = best;
            }
        }
        return y;
    }

    std::vector<double> backward(const std::vector<double>& grad_y) {
        std::vector<double> grad_x(t_in_ * c_, 0.0);
        for (std::size_t i = 0; i < grad_y.size(); ++i) {
            const std::size_t c = i % c_;
            grad_x[argmax_[i] * c_ + c] += grad_y[i];
        }
        return grad_x;
    }

    static std::size_t out_len(std::size_t t_len) { return (t_len + 1) / 2; }

private:
    std::size_t t_in_ = 0, c_ = 0;
    std::vector<std::size_t> argmax_;
};

// ---------------------------------------------------------------------------
// ReLU

class Relu {
public:
    std::vector<double> forward(const std::vector<double>& x) {
        mask_.resize(x.size());
        std::vector<double> y(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            mask_[i] = x[i] > 0.0;
            y[i] = mask_[i] ? x[i] : 0.0;
        }
        return y;
    }

    std::vector<double> backward(const std::vector<double>& grad_y) {
        std::vector<double> g(grad_y.size());
        for (std::size_t i = 0; i < grad_y.size(); ++i) {
            g[i] = mask_[i] ? grad_y[i] : 0.0;
        }
        return g;
    }

private:
    std::vector<char> mask_;
};

// ---------------------------------------------------------------------------
// Inverted dropout: eval mode is exactly the identity

class Dropout {
public:
    explicit Dropout(double rate) : rate_(rate) {
        if (rate < 0.0 || rate >= 1.0) {
            throw BadRate("Dropout: rate must be in [0, 1)");
        }
    }

    std::vector<double> forward(const std::vector<double>& x, Mode mode, Rng& rng) {
        if (mode == Mode::eval || rate_ == 0.0) {
            scale_.assign(x.size(), 1.0);
            return x;
        }
        const double keep = 1.0 - rate_;
        scale_.resize(x.size());
        std::vector<double> y(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            scale_[i] = (rng.uniform() < keep) ? 1.0 / keep : 0.0;
            y[i] = x[i] * scale_[i];
        }
        return y;
    }

    std::vector<double> backward(const std::vector<double>& grad_y) {
        std::vector<double> g(grad_y.size());
        for (std::size_t i = 0; i < grad_y.size(); ++i) {
            g[i] = grad_y[i] * scale_[i];
        }
        return g;
    }

private:
    double rate_;
    std::vector<double> scale_;
};

// ---------------------------------------------------------------------------
// Dense

class Dense {
public:
    Dense(std::size_t in_dim, std::size_t out_dim) : in_(in_dim), out_(out_dim) {
        w_ = Tensor::zeros({out_dim, in_dim});
        b_ = Tensor::zeros({out_dim});
        grad_w_ = Tensor::zeros({out_dim, in_dim});
        grad_b_ = Tensor::zeros({out_dim});
    }

    void init(Rng& rng) {
        const double a = std::sqrt(6.0 / static_cast<double>(in_ + out_));
        for (auto& w : w_.data) w = rng.uniform(-a, a);
        b_.fill(0.0);
    }

    std::vector<double> forward(const std::vector<double>& x) {
        if (x.size() != in_) {
            throw DimensionMismatch("Dense::forward: input size mismatch");
        }
        x_ = x;
        std::vector<double> y(out_);
        for (std::size_t o = 0; o < out_; ++o) {
            double acc = b_[o];
            const double* wr = w_.data.data() + o * in_;
            for (std::size_t i = 0; i < in_; ++i) acc += wr[i] * x[i];
            y[o] = acc;
        }
        return y;
    }

    std::vector<double> backward(const std::vector<double>& grad_y) {
        if (grad_y.size() != out_) {
            throw DimensionMismatch("Dense::backward: gradient size mismatch");
        }
        std::vector<double> grad_x(in_, 0.0);
        for (std::size_t o = 0; o < out_; ++o) {
            const double g = grad_y[o];
            grad_b_[o] += g;
            const double* wr = w_.data.data() + o * in_;
            double* gwr = grad_w_.data.data() + o * in_;
            for (std::size_t i = 0; i < in_; ++i) {
                gwr[i] += g * x_[i];
                grad_x[i] += g * wr[i];
            }
        }
        return grad_x;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
        out.push_back({prefix + "/W", &w_, &grad_w_});
        out.push_back({prefix + "/b", &b_, &grad_b_});
    }

private:
    std::size_t in_, out_;
    Tensor w_, b_, grad_w_, grad_b_;
    std::vector<double> x_;
};

// ---------------------------------------------------------------------------
// LSTM, sequence-to-sequence, gate order i,f,o,g

class Lstm {
public:
    Lstm(std::size_t in_dim, std::size_t hidden) : c_in_(in_dim), h_(hidden) {
        wx_ = Tensor::zeros({4 * h_, c_in_});
        wh_ = Tensor::zeros({4 * h_, h_});
        b_ = Tensor::zeros({4 * h_});
        grad_wx_ = Tensor::zeros({4 * h_, c_in_});
        grad_wh_ = Tensor::zeros({4 * h_, h_});
        grad_b_ = Tensor::zeros({4 * h_});
    }

    void init(Rng& rng) {
        const double ax = std::sqrt(6.0 / static_cast<double>(c_in_ + 4 * h_));
        const double ah = std::sqrt(6.0 / static_cast<double>(h_ + 4 * h_));
        for (auto& w : wx_.data) w = rng.uniform(-ax, ax);
        for (auto& w : wh_.data) w = rng.uniform(-ah, ah);
        b_.fill(0.0);
        for (std::size_t i = 0; i < h_; ++i) {
            b_[h_ + i] = 1.0;  // forget-gate bias
        }
    }

    std::size_t hidden() const { return h_; }

    /// x: [T x c_in]; returns the full hidden sequence [T x h], h0 = c0 = 0.
    std::vector<double> forward(const std::vector<double>& x, std::size_t t_len) {
        if (x.size() != t_len * c_in_) {
            throw DimensionMismatch("Lstm::forward: input size mismatch");
        }
        x_ = x;
        t_ = t_len;
        gates_.assign(t_len * 4 * h_, 0.0);  // post-activation i,f,o,g
        cells_.assign(t_len * h_, 0.0);
        tanh_c_.assign(t_len * h_, 0.0);
        hidden_.assign(t_len * h_, 0.0);

        std::vector<double> pre(4 * h_);
        for (std::size_t t = 0; t < t_len; ++t) {
            const double* xt = x.data() + t * c_in_;
            const double* h_prev = (t > 0) ? hidden_.data() + (t - 1) * h_ : nullptr;
            for (std::size_t r = 0; r < 4 * h_; ++r) {
                double acc = b_[r];
                const double* wxr = wx_.data.data() + r * c_in_;
                for (std::size_t c = 0; c < c_in_; ++c) acc += wxr[c] * xt[c];
                if (h_prev) {
                    const double* whr = wh_.data.data() + r * h_;
                    for (std::size_t c = 0; c < h_; ++c) acc += whr[c] * h_prev[c];
                }
                pre[r] = acc;
            }
            double* gt = gates_.data() + t * 4 * h_;
            for (std::size_t i = 0; i < h_; ++i) {
                gt[i] = sigmoid(pre[i]);                    // input gate
                gt[h_ + i] = sigmoid(pre[h_ + i]);          // forget gate
                gt[2 * h_ + i] = sigmoid(pre[2 * h_ + i]);  // output gate
                gt[3 * h_ + i] = std::tanh(pre[3 * h_ + i]);  // candidate
            }
            for (std::size_t i = 0; i < h_; ++i) {
                const double c_prev = (t > 0) ? cells_[(t - 1) * h_ + i] : 0.0;
                const double c = gt[h_ + i] * c_prev + gt[i] * gt[3 * h_ + i];
                cells_[t * h_ + i] = c;
                tanh_c_[t * h_ + i] = std::tanh(c);
                hidden_[t * h_ + i] = gt[2 * h_ + i] * tanh_c_[t * h_ + i];
            }
        }
        return hidden_;
    }

    /// BPTT over the full sequence; grad_h_seq: [T x h]. Returns grad wrt x.
    std::vector<double> backward(const std::vector<double>& grad_h_seq) {
        if (grad_h_seq.size() != t_ * h_) {
            throw DimensionMismatch("Lstm::backward: gradient size mismatch");
        }
        std::vector<double> grad_x(t_ * c_in_, 0.0);
        std::vector<double> dh_next(h_, 0.0), dc_next(h_, 0.0);
        std::vector<double> da(4 * h_);  // pre-activation gradients

        for (std::size_t tt = t_; tt-- > 0;) {
            const double* gt = gates_.data() + tt * 4 * h_;
            for (std::size_t i = 0; i < h_; ++i) {
                const double dh = grad_h_seq[tt * h_ + i] + dh_next[i];
                const double tc = tanh_c_[tt * h_ + i];
                const double o = gt[2 * h_ + i];
                const double dct = dh * o * (1.0 - tc * tc) + dc_next[i];
                const double ig = gt[i], fg = gt[h_ + i], gg = gt[3 * h_ + i];
                const double c_prev = (tt > 0) ? cells_[(tt - 1) * h_ + i] : 0.0;
                da[i] = dct * gg * ig * (1.0 - ig);
                da[h_ + i] = dct * c_prev * fg * (1.0 - fg);
                da[2 * h_ + i] = dh * tc * o * (1.0 - o);
                da[3 * h_ + i] = dct * ig * (1.0 - gg * gg);
                dc_next[i] = dct * fg;
            }

            const double* xt = x_.data() + tt * c_in_;
            const double* h_prev = (tt > 0) ? hidden_.data() + (tt - 1) * h_ : nullptr;
            std::fill(dh_next.begin(), dh_next.end(), 0.0);
            for (std::size_t r = 0; r < 4 * h_; ++r) {
                const double g = da[r];
                grad_b_[r] += g;
                double* gwxr = grad_wx_.data.data() + r * c_in_;
                const double* wxr = wx_.data.data() + r * c_in_;
                double* gx = grad_x.data() + tt * c_in_;
                for (std::size_t c = 0; c < c_in_; ++c) {
                    gwxr[c] += g * xt[c];
                    gx[c] += g * wxr[c];
                }
                if (h_prev) {
                    double* gwhr = grad_wh_.data.data() + r * h_;
                    const double* whr = wh_.data.data() + r * h_;
                    for (std::size_t c = 0; c < h_; ++c) {
                        gwhr[c] += g * h_prev[c];
                        dh_next[c] += g * whr[c];
                    }
                }
            }
        }
        return grad_x;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
        out.push_back({prefix + "/Wx", &wx_, &grad_wx_});
        out.push_back({prefix + "/Wh", &wh_, &grad_wh_});
        out.push_back({prefix + "/b", &b_, &grad_b_});
    }

private:
    std::size_t c_in_, h_;
    Tensor wx_, wh_, b_, grad_wx_, grad_wh_, grad_b_;
    std::vector<double> x_, gates_, cells_, tanh_c_, hidden_;
    std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Softmax and categorical cross-entropy

/// Numerically stable softmax (max subtraction); output sums to 1.
inline std::vector<double> softmax(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

/// -ln p[target], probability floored at 1e-12.
inline double cross_entropy(const std::vector<double>& probs, std::size_t target) {
    return -std::log(std::max(probs[target], 1e-12));
}

/// Fused softmax + cross-entropy gradient wrt logits: probs - one_hot.
inline std::vector<double> softmax_ce_grad(const std::vector<double>& probs,
                                           std::size_t target) {
    std::vector<double> g = probs;
    g[target] -= 1.0;
    return g;
}

inline std::vector<double> relu(const std::vector<double>& x) {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::max(0.0, x[i]);
    return y;
}

// ---------------------------------------------------------------------------
// RMSprop with per-update learning-rate decay: lr_t = lr0 / (1 + decay * t)

struct RmspropConfig {
    double lr = 1e-5;
    double decay = 1e-6;
    double rho = 0.9;
    double epsilon = 1e-8;
};

class Rmsprop {
public:
    explicit Rmsprop(RmspropConfig cfg) : cfg_(cfg) {}

    void step(const std::vector<ParamRef>& params) {
        if (caches_.empty()) {
            for (const auto& p : params) {
                caches_.push_back(Tensor::zeros(p.value->shape));
            }
        }
        if (caches_.size() != params.size()) {
            throw DimensionMismatch("Rmsprop::step: parameter list changed");
        }
        const double lr_t = cfg_.lr / (1.0 + cfg_.decay * static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& cache = caches_[i];
            Tensor& v = *params[i].value;
            const Tensor& g = *params[i].grad;
            if (v.size() != cache.size() || g.size() != v.size()) {
                throw DimensionMismatch("Rmsprop::step: shape mismatch");
            }
            for (std::size_t j = 0; j < v.size(); ++j) {
                cache[j] = cfg_.rho * cache[j] + (1.0 - cfg_.rho) * g[j] * g[j];
                v[j] -= lr_t * g[j] / (std::sqrt(cache[j]) + cfg_.epsilon);
            }
        }
        ++t_;
    }

    std::size_t steps() const { return t_; }

private:
    RmspropConfig cfg_;
    std::vector<Tensor> caches_;
    std::size_t t_ = 0;
};

}  // namespace serm::nn
