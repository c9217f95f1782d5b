#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "serm/model.hpp"
#include "serm/nn.hpp"
#include "serm/rng.hpp"

using namespace serm;
using namespace serm::nn;

namespace {

constexpr double kFdStep = 1e-5;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-scale, scale);
    return v;
}

/// Central finite-difference check of every parameter of a layer against
/// already-computed analytic gradients, for the loss L = sum_i w_i * y_i.
/// The caller must have run forward + backward(loss_weights) beforehand.
template <typename Forward>
void check_param_gradients(std::vector<ParamRef> params, Forward forward,
                           const std::vector<double>& loss_weights, double tol) {
    for (auto& p : params) {
        for (std::size_t i = 0; i < p.value->size(); ++i) {
            const double saved = (*p.value)[i];
            (*p.value)[i] = saved + kFdStep;
            const double lp = dot(forward(), loss_weights);
            (*p.value)[i] = saved - kFdStep;
            const double lm = dot(forward(), loss_weights);
            (*p.value)[i] = saved;
            const double fd = (lp - lm) / (2.0 * kFdStep);
            const double analytic = (*p.grad)[i];
            const double denom = std::max({1.0, std::abs(fd), std::abs(analytic)});
            REQUIRE(std::abs(fd - analytic) / denom < tol);
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv1D

TEST_CASE("conv1d identity kernel") {
    Conv1D conv(1, 1, 1);
    std::vector<ParamRef> params;
    conv.collect_params("c", params);
    (*params[0].value)[0] = 1.0;  // 1x1x1 kernel
    std::vector<double> x = {0.3, -0.7, 2.0};
    CHECK(conv.forward(x, 3) == x);
}

TEST_CASE("conv1d hand-evaluated edge kernel on a ramp") {
    // kernel [1, 0, -1] over one channel, zero same-padding
    Conv1D conv(1, 1, 3);
    std::vector<ParamRef> params;
    conv.collect_params("c", params);
    params[0].value->data = {1.0, 0.0, -1.0};
    std::vector<double> x = {0, 1, 2, 3};
    auto y = conv.forward(x, 4);
    // direct evaluation with x padded to [0, 0,1,2,3, 0]:
    //   y[0] = 0*1 + 0*0 + 1*(-1) = -1
    //   y[1] = 0*1 + 1*0 + 2*(-1) = -2
    //   y[2] = 1*1 + 2*0 + 3*(-1) = -2
    //   y[3] = 2*1 + 3*0 + 0*(-1) =  2
    REQUIRE(y == std::vector<double>{-1, -2, -2, 2});
}

TEST_CASE("conv1d matches a triple-loop convolution oracle") {
    Rng rng(21);
    const std::size_t t_len = 7, c_in = 3, c_out = 4, k = 5;
    Conv1D conv(c_in, c_out, k);
    conv.init(rng);
    std::vector<ParamRef> params;
    conv.collect_params("c", params);
    const Tensor& kernels = *params[0].value;
    const Tensor& bias = *params[1].value;

    auto x = random_vec(rng, t_len * c_in);
    auto y = conv.forward(x, t_len);

    const std::ptrdiff_t pad = (k - 1) / 2;
    for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t o = 0; o < c_out; ++o) {
            double acc = bias[o];
            for (std::size_t kk = 0; kk < k; ++kk) {
                const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(t + kk) - pad;
                if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(t_len)) continue;
                for (std::size_t c = 0; c < c_in; ++c) {
                    acc += kernels[(o * k + kk) * c_in + c] *
                           x[static_cast<std::size_t>(ti) * c_in + c];
                }
            }
            REQUIRE(std::abs(y[t * c_out + o] - acc) < 1e-12);
        }
    }
}

TEST_CASE("conv1d backward passes finite differences") {
    Rng rng(22);
    const std::size_t t_len = 6, c_in = 2, c_out = 3, k = 3;
    Conv1D conv(c_in, c_out, k);
    conv.init(rng);
    std::vector<ParamRef> params;
    conv.collect_params("c", params);
    auto x = random_vec(rng, t_len * c_in);
    auto w = random_vec(rng, t_len * c_out);

    auto forward = [&]() { return conv.forward(x, t_len); };
    for (auto& p : params) p.grad->fill(0.0);
    forward();
    conv.backward(w);
    check_param_gradients(params, forward, w, 1e-5);

    SECTION("zero upstream gradient gives zero parameter gradients") {
        for (auto& p : params) p.grad->fill(0.0);
        conv.forward(x, t_len);
        auto gx = conv.backward(std::vector<double>(t_len * c_out, 0.0));
        for (auto& p : params) {
            for (double g : p.grad->data) REQUIRE(g == 0.0);
        }
        for (double g : gx) REQUIRE(g == 0.0);
    }

    SECTION("input gradient matches finite differences") {
        for (auto& p : params) p.grad->fill(0.0);
        conv.forward(x, t_len);
        auto gx = conv.backward(w);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double saved = x[i];
            x[i] = saved + kFdStep;
            const double lp = dot(conv.forward(x, t_len), w);
            x[i] = saved - kFdStep;
            const double lm = dot(conv.forward(x, t_len), w);
            x[i] = saved;
            REQUIRE(std::abs((lp - lm) / (2.0 * kFdStep) - gx[i]) < 1e-5);
        }
    }
}

TEST_CASE("conv1d rejects even kernels and bad shapes") {
    CHECK_THROWS_AS(Conv1D(2, 2, 4), DimensionMismatch);
    Conv1D conv(2, 2, 3);
    CHECK_THROWS_AS(conv.forward(std::vector<double>(5, 0.0), 3), DimensionMismatch);
}

// ---------------------------------------------------------------------------
// MaxPool1D

TEST_CASE("maxpool basics") {
    MaxPool1D pool;
    SECTION("direct max") {
        auto y = pool.forward({1, 3, 2, 5}, 4, 1);
        REQUIRE(y == std::vector<double>{3, 5});
    }
    SECTION("odd tail is a singleton window") {
        auto y = pool.forward({1, 2, 3, 4, 5}, 5, 1);
        REQUIRE(y == std::vector<double>{2, 4, 5});
        CHECK(MaxPool1D::out_len(70) == 35);
        CHECK(MaxPool1D::out_len(35) == 18);
    }
    SECTION("shift equivariance") {
        Rng rng(23);
        auto x = random_vec(rng, 12);
        auto y = pool.forward(x, 6, 2);
        auto shifted = x;
        for (auto& v : shifted) v += 3.25;
        MaxPool1D pool2;
        auto y2 = pool2.forward(shifted, 6, 2);
        for (std::size_t i = 0; i < y.size(); ++i) {
            REQUIRE(y2[i] == Catch::Approx(y[i] + 3.25));
        }
    }
}

TEST_CASE("maxpool backward routes gradient only to argmax positions") {
    Rng rng(24);
    const std::size_t t_len = 9, c = 3;
    auto x = random_vec(rng, t_len * c);
    MaxPool1D pool;
    pool.forward(x, t_len, c);
    auto gy = random_vec(rng, MaxPool1D::out_len(t_len) * c);
    auto gx = pool.backward(gy);

    // per-channel gradient mass is conserved
    for (std::size_t ch = 0; ch < c; ++ch) {
        double in_sum = 0.0, out_sum = 0.0;
        for (std::size_t t = 0; t < t_len; ++t) in_sum += gx[t * c + ch];
        for (std::size_t t = 0; t < MaxPool1D::out_len(t_len); ++t) out_sum += gy[t * c + ch];
        REQUIRE(in_sum == Catch::Approx(out_sum).margin(1e-12));
    }
}

// ---------------------------------------------------------------------------
// Dropout

TEST_CASE("dropout modes") {
    Rng rng(25);
    std::vector<double> x = {1.0, -2.0, 3.0, 0.5};
    SECTION("eval mode is exactly the identity") {
        Dropout d(0.7);
        CHECK(d.forward(x, Mode::eval, rng) == x);
    }
    SECTION("rate 0 in train mode is the identity") {
        Dropout d(0.0);
        CHECK(d.forward(x, Mode::train, rng) == x);
    }
    SECTION("bad rates throw") {
        CHECK_THROWS_AS(Dropout(1.0), BadRate);
        CHECK_THROWS_AS(Dropout(-0.1), BadRate);
    }
}

TEST_CASE("inverted dropout preserves the mean") {
    Rng rng(26);
    Dropout d(0.5);
    std::vector<double> x(1000000, 1.0);
    auto y = d.forward(x, Mode::train, rng);
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    CHECK(std::abs(mean - 1.0) < 0.005);
}

TEST_CASE("dropout backward uses the same mask as forward") {
    Rng rng(27);
    Dropout d(0.4);
    auto x = random_vec(rng, 64);
    auto y = d.forward(x, Mode::train, rng);
    // gradient of identity loss: zeroed positions stay zero, kept ones scale
    auto g = d.backward(std::vector<double>(64, 1.0));
    for (std::size_t i = 0; i < 64; ++i) {
        if (y[i] == 0.0 && x[i] != 0.0) {
            REQUIRE(g[i] == 0.0);
        } else {
            REQUIRE(g[i] == Catch::Approx(1.0 / 0.6));
        }
    }
}

// ---------------------------------------------------------------------------
// Dense

TEST_CASE("dense fixed cases") {
    Dense dense(2, 2);
    std::vector<ParamRef> params;
    dense.collect_params("d", params);
    SECTION("bias only") {
        params[1].value->data = {1.0, 2.0};
        auto y = dense.forward({5.0, -3.0});
        REQUIRE(y == std::vector<double>{1.0, 2.0});
    }
    SECTION("identity weights") {
        params[0].value->data = {1.0, 0.0, 0.0, 1.0};
        auto y = dense.forward({0.25, -4.0});
        REQUIRE(y == std::vector<double>{0.25, -4.0});
    }
}

TEST_CASE("dense backward passes finite differences") {
    Rng rng(28);
    Dense dense(4, 3);
    dense.init(rng);
    std::vector<ParamRef> params;
    dense.collect_params("d", params);
    auto x = random_vec(rng, 4);
    auto w = random_vec(rng, 3);
    auto forward = [&]() { return dense.forward(x); };
    for (auto& p : params) p.grad->fill(0.0);
    forward();
    dense.backward(w);
    check_param_gradients(params, forward, w, 1e-6);
}

// ---------------------------------------------------------------------------
// LSTM

namespace {

/// Independent scalar LSTM oracle for H = C = 1.
std::vector<double> scalar_lstm_oracle(double wx_i, double wx_f, double wx_o, double wx_g,
                                       double wh_i, double wh_f, double wh_o, double wh_g,
                                       double b_i, double b_f, double b_o, double b_g,
                                       const std::vector<double>& x) {
    std::vector<double> hs;
    double h = 0.0, c = 0.0;
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    for (double xt : x) {
        const double i = sig(wx_i * xt + wh_i * h + b_i);
        const double f = sig(wx_f * xt + wh_f * h + b_f);
        const double o = sig(wx_o * xt + wh_o * h + b_o);
        const double g = std::tanh(wx_g * xt + wh_g * h + b_g);
        c = f * c + i * g;
        h = o * std::tanh(c);
        hs.push_back(h);
    }
    return hs;
}

}  // namespace

TEST_CASE("lstm zero parameters give zero hidden states") {
    Lstm lstm(3, 4);
    auto h = lstm.forward(std::vector<double>(5 * 3, 0.8), 5);
    for (double v : h) REQUIRE(v == 0.0);
}

TEST_CASE("lstm matches the scalar hand oracle") {
    SECTION("single step, all weights 0.1") {
        Lstm lstm(1, 1);
        std::vector<ParamRef> params;
        lstm.collect_params("l", params);
        params[0].value->data = {0.1, 0.1, 0.1, 0.1};  // Wx, gate order i,f,o,g
        params[1].value->data = {0.1, 0.1, 0.1, 0.1};  // Wh
        params[2].value->fill(0.0);                    // b
        auto h = lstm.forward({1.0}, 1);
        auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
        const double expected = sig(0.1) * std::tanh(sig(0.1) * std::tanh(0.1));
        REQUIRE(h[0] == Catch::Approx(expected).margin(1e-12));
    }
    SECTION("multi-step recurrence with distinct parameters") {
        Lstm lstm(1, 1);
        std::vector<ParamRef> params;
        lstm.collect_params("l", params);
        params[0].value->data = {0.3, -0.2, 0.5, 0.7};
        params[1].value->data = {0.1, 0.4, -0.3, 0.2};
        params[2].value->data = {0.05, 1.0, -0.1, 0.2};
        std::vector<double> x = {1.0, -0.5, 0.25, 2.0};
        auto h = lstm.forward(x, 4);
        auto expected = scalar_lstm_oracle(0.3, -0.2, 0.5, 0.7, 0.1, 0.4, -0.3, 0.2, 0.05, 1.0,
                                           -0.1, 0.2, x);
        for (std::size_t t = 0; t < 4; ++t) {
            REQUIRE(h[t] == Catch::Approx(expected[t]).margin(1e-12));
        }
    }
    SECTION("saturated forget gate holds the cell near its previous state") {
        Lstm lstm(1, 1);
        std::vector<ParamRef> params;
        lstm.collect_params("l", params);
        params[0].value->fill(0.0);
        params[1].value->fill(0.0);
        params[2].value->data = {10.0, 10.0, 10.0, 0.5};  // i and f open, constant candidate
        std::vector<double> x(6, 0.0);
        auto h = lstm.forward(x, 6);
        // oracle: c_t ~= c_{t-1} + tanh(0.5)
        auto expected = scalar_lstm_oracle(0, 0, 0, 0, 0, 0, 0, 0, 10.0, 10.0, 10.0, 0.5, x);
        for (std::size_t t = 0; t < 6; ++t) {
            REQUIRE(h[t] == Catch::Approx(expected[t]).margin(1e-12));
        }
        // the cell accumulates: hidden states increase monotonically
        for (std::size_t t = 1; t < 6; ++t) REQUIRE(h[t] > h[t - 1]);
    }
}

TEST_CASE("lstm BPTT passes finite differences") {
    Rng rng(29);
    const std::size_t t_len = 3, c_in = 2, h = 2;
    Lstm lstm(c_in, h);
    lstm.init(rng);
    std::vector<ParamRef> params;
    lstm.collect_params("l", params);
    auto x = random_vec(rng, t_len * c_in);
    auto w = random_vec(rng, t_len * h);

    auto forward = [&]() { return lstm.forward(x, t_len); };
    for (auto& p : params) p.grad->fill(0.0);
    forward();
    lstm.backward(w);
    check_param_gradients(params, forward, w, 1e-5);

    SECTION("zero upstream gradient gives zero parameter gradients") {
        for (auto& p : params) p.grad->fill(0.0);
        lstm.forward(x, t_len);
        lstm.backward(std::vector<double>(t_len * h, 0.0));
        for (auto& p : params) {
            for (double g : p.grad->data) REQUIRE(g == 0.0);
        }
    }

    SECTION("gradients are additive over upstream contributions") {
        auto w2 = random_vec(rng, t_len * h);
        std::vector<double> w_sum(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) w_sum[i] = w[i] + w2[i];

        auto grads_for = [&](const std::vector<double>& upstream) {
            for (auto& p : params) p.grad->fill(0.0);
            lstm.forward(x, t_len);
            lstm.backward(upstream);
            std::vector<double> flat;
            for (auto& p : params) {
                flat.insert(flat.end(), p.grad->data.begin(), p.grad->data.end());
            }
            return flat;
        };
        auto g1 = grads_for(w);
        auto g2 = grads_for(w2);
        auto gs = grads_for(w_sum);
        for (std::size_t i = 0; i < gs.size(); ++i) {
            REQUIRE(gs[i] == Catch::Approx(g1[i] + g2[i]).margin(1e-10));
        }
    }

    SECTION("input gradient matches finite differences") {
        for (auto& p : params) p.grad->fill(0.0);
        lstm.forward(x, t_len);
        auto gx = lstm.backward(w);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double saved = x[i];
            x[i] = saved + kFdStep;
            const double lp = dot(lstm.forward(x, t_len), w);
            x[i] = saved - kFdStep;
            const double lm = dot(lstm.forward(x, t_len), w);
            x[i] = saved;
            REQUIRE(std::abs((lp - lm) / (2.0 * kFdStep) - gx[i]) < 1e-5);
        }
    }
}

// ---------------------------------------------------------------------------
// Activations and loss

TEST_CASE("relu and softmax fixed points") {
    CHECK(relu({-1.0, 0.0, 2.0}) == std::vector<double>{0.0, 0.0, 2.0});

    auto p = softmax(std::vector<double>(7, 3.5));
    double sum = 0.0;
    for (double v : p) {
        CHECK(v == Catch::Approx(1.0 / 7.0).margin(1e-12));
        sum += v;
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("softmax is shift invariant and sums to 1") {
    Rng rng(30);
    auto logits = random_vec(rng, 7, 5.0);
    auto p1 = softmax(logits);
    auto shifted = logits;
    for (auto& v : shifted) v += 123.0;
    auto p2 = softmax(shifted);
    double sum = 0.0;
    for (std::size_t i = 0; i < 7; ++i) {
        REQUIRE(std::abs(p1[i] - p2[i]) < 1e-12);
        sum += p1[i];
    }
    REQUIRE(std::abs(sum - 1.0) < 1e-12);
}

TEST_CASE("cross entropy fixed values") {
    std::vector<double> perfect(7, 0.0);
    perfect[3] = 1.0;
    CHECK(cross_entropy(perfect, 3) == Catch::Approx(0.0).margin(1e-12));
    CHECK(cross_entropy(std::vector<double>(7, 1.0 / 7.0), 0) ==
          Catch::Approx(std::log(7.0)).margin(1e-12));
    CHECK(std::log(7.0) == Catch::Approx(1.945910).margin(1e-6));
}

TEST_CASE("fused softmax+CE gradient matches finite differences") {
    Rng rng(31);
    auto logits = random_vec(rng, 7, 2.0);
    const std::size_t target = 4;
    auto probs = softmax(logits);
    auto grad = softmax_ce_grad(probs, target);
    for (std::size_t i = 0; i < 7; ++i) {
        auto lp = logits, lm = logits;
        lp[i] += kFdStep;
        lm[i] -= kFdStep;
        const double fd = (cross_entropy(softmax(lp), target) -
                           cross_entropy(softmax(lm), target)) /
                          (2.0 * kFdStep);
        REQUIRE(std::abs(fd - grad[i]) < 1e-7);
    }
}

// ---------------------------------------------------------------------------
// RMSprop

TEST_CASE("rmsprop zero gradient leaves parameters unchanged") {
    Tensor v = Tensor::zeros({3});
    v.data = {1.0, -2.0, 0.5};
    Tensor g = Tensor::zeros({3});
    std::vector<ParamRef> params = {{"p", &v, &g}};

    Rmsprop opt({.lr = 0.01, .decay = 0.0, .rho = 0.9, .epsilon = 1e-8});
    // one real step to populate the cache
    g.data = {1.0, 1.0, 1.0};
    opt.step(params);
    auto after_first = v.data;
    g.fill(0.0);
    opt.step(params);
    CHECK(v.data == after_first);
}

TEST_CASE("rmsprop first step matches the closed form") {
    Tensor v = Tensor::zeros({1});
    Tensor g = Tensor::zeros({1});
    const double grad = 4.0, lr = 0.01, rho = 0.9, eps = 1e-8;
    g.data = {grad};
    std::vector<ParamRef> params = {{"p", &v, &g}};
    Rmsprop opt({.lr = lr, .decay = 0.0, .rho = rho, .epsilon = eps});
    opt.step(params);
    const double expected = -lr * grad / (std::sqrt((1.0 - rho) * grad * grad) + eps);
    CHECK(v.data[0] == Catch::Approx(expected).margin(1e-15));
    // for |g| >> eps this is close to -lr * sign(g) / sqrt(1 - rho)
    CHECK(v.data[0] == Catch::Approx(-lr / std::sqrt(1.0 - rho)).epsilon(1e-6));
}

TEST_CASE("rmsprop is bit-deterministic") {
    Rng rng(32);
    Tensor v1 = Tensor::zeros({8}), v2 = Tensor::zeros({8});
    Tensor g1 = Tensor::zeros({8}), g2 = Tensor::zeros({8});
    v1.data = random_vec(rng, 8);
    v2.data = v1.data;
    std::vector<ParamRef> p1 = {{"p", &v1, &g1}};
    std::vector<ParamRef> p2 = {{"p", &v2, &g2}};
    Rmsprop o1({.lr = 1e-3, .decay = 1e-6, .rho = 0.9, .epsilon = 1e-8});
    Rmsprop o2({.lr = 1e-3, .decay = 1e-6, .rho = 0.9, .epsilon = 1e-8});
    for (int step = 0; step < 20; ++step) {
        auto grads = random_vec(rng, 8);
        g1.data = grads;
        g2.data = grads;
        o1.step(p1);
        o2.step(p2);
        REQUIRE(v1.data == v2.data);
    }
}

TEST_CASE("rmsprop learning rate decays per update") {
    Tensor v = Tensor::zeros({1});
    Tensor g = Tensor::zeros({1});
    std::vector<ParamRef> params = {{"p", &v, &g}};
    const double decay = 0.5;
    Rmsprop opt({.lr = 1.0, .decay = decay, .rho = 0.0, .epsilon = 0.0});
    // rho = 0: cache = g^2, so each update is exactly -lr_t * sign(g)
    g.data = {2.0};
    opt.step(params);  // lr_0 = 1
    CHECK(v.data[0] == Catch::Approx(-1.0));
    opt.step(params);  // lr_1 = 1 / 1.5
    CHECK(v.data[0] == Catch::Approx(-1.0 - 1.0 / 1.5));
}

// ---------------------------------------------------------------------------
// Whole model

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.conv_filters = {4, 4, 6, 6};
    cfg.kernel = 3;
    cfg.lstm_widths = {6, 5, 4};
    cfg.in_channels = 5;
    cfg.n_globals = 3;
    cfg.n_classes = 7;
    cfg.seed = 99;
    return cfg;
}

}  // namespace

TEST_CASE("zero-initialized model yields a uniform softmax") {
    CnnLstmModel model(tiny_config());
    for (auto& p : model.parameters()) p.value->fill(0.0);
    Rng rng(33);
    auto seq = random_vec(rng, 8 * 5);
    auto logits = model.forward(seq, 8, {0.1, 0.2, 0.3}, Mode::eval);
    auto probs = softmax(logits);
    for (double v : probs) {
        REQUIRE(v == Catch::Approx(1.0 / 7.0).margin(1e-15));
    }
}

TEST_CASE("model end-to-end gradient passes sampled finite differences") {
    CnnLstmModel model(tiny_config());
    Rng rng(34);
    const std::size_t t_len = 8;
    auto seq = random_vec(rng, t_len * 5);
    std::vector<double> globals = {0.4, -0.2, 0.9};
    const std::size_t target = 2;

    auto loss = [&]() {
        auto logits = model.forward(seq, t_len, globals, Mode::eval);
        return cross_entropy(softmax(logits), target);
    };

    model.zero_grads();
    auto logits = model.forward(seq, t_len, globals, Mode::eval);
    auto grad = softmax_ce_grad(softmax(logits), target);
    model.backward(grad);

    auto params = model.parameters();
    std::size_t checked = 0;
    for (auto& p : params) {
        for (std::size_t i = 0; i < p.value->size(); i += 9) {  // ~11% sample
            const double saved = (*p.value)[i];
            (*p.value)[i] = saved + kFdStep;
            const double lp = loss();
            (*p.value)[i] = saved - kFdStep;
            const double lm = loss();
            (*p.value)[i] = saved;
            const double fd = (lp - lm) / (2.0 * kFdStep);
            const double analytic = (*p.grad)[i];
            const double denom = std::max({1.0, std::abs(fd), std::abs(analytic)});
            REQUIRE(std::abs(fd - analytic) / denom < 1e-4);
            ++checked;
        }
    }
    REQUIRE(checked > 100);
}

TEST_CASE("model forward is finite on finite inputs") {
    CnnLstmModel model(tiny_config());
    Rng rng(35);
    for (int trial = 0; trial < 10; ++trial) {
        auto seq = random_vec(rng, 8 * 5, 100.0);
        auto logits = model.forward(seq, 8, {1e6, -1e6, 0.0}, Mode::eval);
        auto probs = softmax(logits);
        for (double v : probs) REQUIRE(std::isfinite(v));
        REQUIRE(std::isfinite(cross_entropy(probs, 0)));
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

TEST_CASE("checkpoint round trip reproduces forward outputs bit-exactly") {
    CnnLstmModel model(tiny_config());
    auto ckpt = model_to_checkpoint(model, {{"note", "unit-test"}});
    const std::string path = std::filesystem::temp_directory_path() / "serm_test.ckpt";
    save_checkpoint(path, ckpt);
    auto loaded = load_checkpoint(path);
    CHECK(loaded.config.at("note") == "unit-test");
    auto restored = model_from_checkpoint(loaded);

    Rng rng(36);
    for (int trial = 0; trial < 20; ++trial) {
        auto seq = random_vec(rng, 8 * 5);
        std::vector<double> globals = {rng.uniform(), rng.uniform(), rng.uniform()};
        auto a = model.forward(seq, 8, globals, Mode::eval);
        auto b = restored.forward(seq, 8, globals, Mode::eval);
        REQUIRE(a == b);  // bit identical
    }
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint rejects corrupt files") {
    const std::string path = std::filesystem::temp_directory_path() / "serm_bad.ckpt";
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOTACKPT";
    }
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
    std::filesystem::remove(path);
}
