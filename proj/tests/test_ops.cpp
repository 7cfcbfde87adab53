#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "binembed/ops.hpp"
#include "binembed/rng.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace binembed;
using test_support::max_abs_diff;
using test_support::max_rel_diff;
using test_support::random_signs_source;
using test_support::random_tensor;

namespace {

ConvSpec random_spec(Rng& rng, int in_ch, bool binary) {
    ConvSpec s;
    s.kernel_h = 1 + static_cast<int>(rng.below(5));
    s.kernel_w = 1 + static_cast<int>(rng.below(5));
    s.in_ch = in_ch;
    s.out_ch = 1 + static_cast<int>(rng.below(8));
    s.stride = 1 + static_cast<int>(rng.below(2));
    s.padding = rng.below(2) ? Padding::same : Padding::valid;
    s.binary = binary;
    return s;
}

// Distinct values within pooling windows so argmax never ties under the
// finite-difference probe.
FloatTensor distinct_tensor(Shape shape, Rng& rng) {
    FloatTensor t(std::move(shape));
    std::vector<int64_t> perm(t.numel());
    for (int64_t i = 0; i < t.numel(); ++i) perm[i] = i;
    rng.shuffle(perm);
    for (int64_t i = 0; i < t.numel(); ++i)
        t.data[i] = static_cast<float>(perm[i]) * 0.05f - 0.025f * t.numel();
    return t;
}

// Scalar loss for gradient checks: fixed random projection of the output.
struct ProjectionLoss {
    FloatTensor proj;
    double operator()(const FloatTensor& y) const {
        double acc = 0.0;
        for (int64_t i = 0; i < y.numel(); ++i) acc += double(y.data[i]) * proj.data[i];
        return acc;
    }
};

ProjectionLoss make_loss(const Shape& out_shape, Rng& rng) {
    return {random_tensor(out_shape, rng, -1.0, 1.0)};
}

}  // namespace

// ---- sign / STE -----------------------------------------------------------

TEST_CASE("sign forward and clipped STE backward") {
    FloatTensor x({4}, {0.5f, 1.5f, -0.3f, -2.0f});
    FloatTensor up({4}, {2.0f, 2.0f, 1.0f, 1.0f});
    const FloatTensor y = sign_forward(x);
    CHECK(y.data == std::vector<float>{1.0f, 1.0f, -1.0f, -1.0f});
    const FloatTensor g = sign_backward(up, x);
    CHECK(g.data[0] == 2.0f);   // inside the clip
    CHECK(g.data[1] == 0.0f);   // outside
    CHECK(g.data[2] == 1.0f);
    CHECK(g.data[3] == 0.0f);
}

TEST_CASE("STE grad matches the clipped-passthrough formula on a composite loss") {
    // loss = ||sign_STE(x)*w - t||^2 / 2 for scalars: dL/dx = (sign(x)w - t)*w*1[|x|<=1]
    Rng rng(42);
    for (int i = 0; i < 10; ++i) {
        const float x = static_cast<float>(rng.uniform(-2.0, 2.0));
        const float w = static_cast<float>(rng.uniform(-2.0, 2.0));
        const float t = static_cast<float>(rng.uniform(-2.0, 2.0));
        const float s = x >= 0.0f ? 1.0f : -1.0f;
        const float upstream = (s * w - t) * w;
        FloatTensor xt({1}, {x}), ut({1}, {upstream});
        const float got = sign_backward(ut, xt).data[0];
        const float expected = std::fabs(x) <= 1.0f ? upstream : 0.0f;
        CHECK(got == expected);
    }
}

// ---- binary convolution ----------------------------------------------------

TEST_CASE("binary conv: 1x1 identity kernel") {
    Rng rng(1);
    FloatTensor x = sign_forward(random_signs_source({5, 4, 1}, rng));
    ConvSpec s{1, 1, 1, 1, 1, Padding::same, true};
    FloatTensor w({1, 1, 1, 1}, {1.0f});
    const FloatTensor y = binary_conv2d(x, pack(FloatTensor({1, 1}, w.data)), s);
    CHECK(y.data == x.data);
}

TEST_CASE("binary conv: all-ones 3x3 on all-ones 5x5 valid gives 9") {
    FloatTensor x({5, 5, 1});
    for (auto& v : x.data) v = 1.0f;
    ConvSpec s{3, 3, 1, 1, 1, Padding::valid, true};
    FloatTensor w({1, 9});
    for (auto& v : w.data) v = 1.0f;
    const FloatTensor y = binary_conv2d(x, pack(w), s);
    CHECK(y.shape == Shape{3, 3, 1});
    for (float v : y.data) CHECK(v == 9.0f);
}

TEST_CASE("binary conv equals the naive float oracle on random configurations") {
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const int in_ch = 1 + static_cast<int>(rng.below(8));
        ConvSpec s = random_spec(rng, in_ch, true);
        const int64_t H = s.kernel_h + static_cast<int64_t>(rng.below(9));
        const int64_t W = s.kernel_w + static_cast<int64_t>(rng.below(9));
        FloatTensor x = sign_forward(random_signs_source({H, W, in_ch}, rng));
        FloatTensor w = sign_forward(random_signs_source({s.out_ch, s.kernel_h, s.kernel_w, in_ch}, rng));
        const FloatTensor got = binary_conv2d(x, pack(FloatTensor({s.out_ch, s.patch_len()}, w.data)), s);
        const FloatTensor want = test_oracle::naive_conv2d(x, w, s, -1.0f);
        CHECK(got.shape == want.shape);
        CHECK(max_abs_diff(got, want) == 0.0);  // exact integer equality
    }
}

TEST_CASE("binary conv rejects channel mismatch") {
    FloatTensor x({4, 4, 2});
    for (auto& v : x.data) v = 1.0f;
    ConvSpec s{3, 3, 3, 4, 1, Padding::same, true};
    BitTensor w({4, 27});
    CHECK_THROWS_AS(binary_conv2d(x, w, s), shape_error);
}

// ---- real convolution -------------------------------------------------------

TEST_CASE("real conv: 1x1 kernel scaling by 2") {
    Rng rng(3);
    FloatTensor x = random_tensor({4, 6, 1}, rng);
    ConvSpec s{1, 1, 1, 1, 1, Padding::same, false};
    const FloatTensor y = real_conv2d(x, FloatTensor({1, 1, 1, 1}, {2.0f}), s);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.data[i] == doctest::Approx(2.0f * x.data[i]));
}

TEST_CASE("real conv: centered delta kernel is the identity away from borders") {
    Rng rng(4);
    FloatTensor x = random_tensor({6, 6, 1}, rng);
    ConvSpec s{3, 3, 1, 1, 1, Padding::same, false};
    FloatTensor w({1, 3, 3, 1});
    w.data[4] = 1.0f;  // center
    const FloatTensor y = real_conv2d(x, w, s);
    CHECK(y.shape == x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.data[i] == doctest::Approx(x.data[i]));
}

TEST_CASE("real conv matches the naive oracle on random cases") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const int in_ch = 1 + static_cast<int>(rng.below(8));
        ConvSpec s = random_spec(rng, in_ch, false);
        const int64_t H = s.kernel_h + static_cast<int64_t>(rng.below(9));
        const int64_t W = s.kernel_w + static_cast<int64_t>(rng.below(9));
        FloatTensor x = random_tensor({H, W, in_ch}, rng);
        FloatTensor w = random_tensor({s.out_ch, s.kernel_h, s.kernel_w, in_ch}, rng);
        const FloatTensor got = real_conv2d(x, w, s);
        const FloatTensor want = test_oracle::naive_conv2d(x, w, s, 0.0f);
        CHECK(max_abs_diff(got, want) < 1e-4);
    }
}

// ---- batch norm -------------------------------------------------------------

TEST_CASE("batch norm identity parameters in infer mode") {
    Rng rng(5);
    FloatTensor x = random_tensor({3, 4, 5}, rng);
    BatchNormParams p(5);
    const FloatTensor y = batch_norm(x, p, BnMode::infer);
    CHECK(max_abs_diff(x, y) < 1e-5);  // eps-induced bound
}

TEST_CASE("train-mode batch norm normalizes the batch and updates running stats") {
    Rng rng(6);
    FloatTensor x = random_tensor({64, 3}, rng, -5.0, 5.0);
    BatchNormParams p(3);
    const FloatTensor y = batch_norm(x, p, BnMode::train);
    for (int c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (int r = 0; r < 64; ++r) mean += y.data[r * 3 + c];
        mean /= 64;
        for (int r = 0; r < 64; ++r) var += (y.data[r * 3 + c] - mean) * (y.data[r * 3 + c] - mean);
        var /= 64;
        CHECK(std::fabs(mean) < 1e-5);
        CHECK(std::fabs(var - 1.0) < 1e-3);
        CHECK(p.running_mean[c] != 0.0f);  // momentum update happened
    }
}

TEST_CASE("batch norm infer matches the scalar formula") {
    Rng rng(7);
    FloatTensor x = random_tensor({10, 4}, rng);
    BatchNormParams p(4);
    for (int c = 0; c < 4; ++c) {
        p.gamma[c] = static_cast<float>(rng.uniform(0.5, 2.0));
        p.beta[c] = static_cast<float>(rng.uniform(-1.0, 1.0));
        p.running_mean[c] = static_cast<float>(rng.uniform(-1.0, 1.0));
        p.running_var[c] = static_cast<float>(rng.uniform(0.1, 2.0));
    }
    const FloatTensor y = batch_norm(x, p, BnMode::infer);
    for (int64_t r = 0; r < 10; ++r)
        for (int64_t c = 0; c < 4; ++c) {
            const double want = p.gamma[c] * (x.data[r * 4 + c] - p.running_mean[c]) /
                                    std::sqrt(double(p.running_var[c]) + p.eps) +
                                p.beta[c];
            CHECK(y.data[r * 4 + c] == doctest::Approx(want).epsilon(1e-6));
        }
}

// ---- pooling ----------------------------------------------------------------

TEST_CASE("max pool constants and single positions") {
    FloatTensor c({4, 4, 2});
    for (auto& v : c.data) v = 3.25f;
    const FloatTensor y = max_pool2d(c, 2, 2);
    CHECK(y.shape == Shape{2, 2, 2});
    for (float v : y.data) CHECK(v == 3.25f);

    Rng rng(8);
    FloatTensor single = random_tensor({1, 1, 7}, rng);
    const FloatTensor g = global_max_pool(single);
    CHECK(g.data == single.data);
}

TEST_CASE("global max pool equals brute force per channel") {
    Rng rng(9);
    FloatTensor x = random_tensor({5, 9, 6}, rng);
    const FloatTensor y = global_max_pool(x);
    for (int64_t c = 0; c < 6; ++c) {
        float best = -1e30f;
        for (int64_t p = 0; p < 45; ++p) best = std::max(best, x.data[p * 6 + c]);
        CHECK(y.data[c] == best);
    }
}

TEST_CASE("global max pool is invariant to spatial permutation") {
    Rng rng(10);
    FloatTensor x = random_tensor({4, 5, 3}, rng);
    FloatTensor shuffled = x;
    std::vector<int64_t> perm(20);
    for (int64_t i = 0; i < 20; ++i) perm[i] = i;
    rng.shuffle(perm);
    for (int64_t p = 0; p < 20; ++p)
        for (int64_t c = 0; c < 3; ++c) shuffled.data[p * 3 + c] = x.data[perm[p] * 3 + c];
    CHECK(global_max_pool(x).data == global_max_pool(shuffled).data);
}

// ---- dense ------------------------------------------------------------------

TEST_CASE("dense identity and zero input") {
    FloatTensor x({3}, {1.0f, -2.0f, 3.0f});
    FloatTensor eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.data[i * 3 + i] = 1.0f;
    CHECK(dense(x, eye, false).data == x.data);

    FloatTensor zero({3});
    const FloatTensor y = dense(zero, eye, false);
    for (float v : y.data) CHECK(v == 0.0f);
}

TEST_CASE("binary dense matches the float sign-dot oracle exactly") {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const int64_t n = 1 + static_cast<int64_t>(rng.below(150));
        const int64_t m = 1 + static_cast<int64_t>(rng.below(10));
        FloatTensor x = sign_forward(random_signs_source({n}, rng));
        FloatTensor w = random_signs_source({m, n}, rng);
        const FloatTensor y = dense(x, w, true);
        for (int64_t o = 0; o < m; ++o) {
            std::vector<float> row(w.data.begin() + o * n, w.data.begin() + (o + 1) * n);
            CHECK(y.data[o] == static_cast<float>(test_oracle::sign_dot(x.data, row)));
        }
    }
}

// ---- adam -------------------------------------------------------------------

TEST_CASE("adam: zero gradient leaves params and moments untouched") {
    std::vector<float> p{1.0f, -2.0f};
    std::vector<float> g{0.0f, 0.0f};
    AdamState st(2);
    adam_step(p, g, st, 0.05f);
    CHECK(p == std::vector<float>{1.0f, -2.0f});
    CHECK(st.m == std::vector<float>{0.0f, 0.0f});
    CHECK(st.v == std::vector<float>{0.0f, 0.0f});
}

TEST_CASE("adam first step moves against the gradient by about lr") {
    std::vector<float> p{1.0f};
    std::vector<float> g{3.7f};
    AdamState st(1);
    adam_step(p, g, st, 0.05f);
    const float delta = 1.0f - p[0];
    CHECK(delta > 0.0f);                  // moved against the gradient
    CHECK(std::fabs(delta) <= 0.05f * (1.0f + 1e-3f));
}

TEST_CASE("adam with lr 0 is the identity on params") {
    Rng rng(12);
    std::vector<float> p(16), g(16);
    for (auto& v : p) v = static_cast<float>(rng.uniform(-2.0, 2.0));
    for (auto& v : g) v = static_cast<float>(rng.uniform(-2.0, 2.0));
    const std::vector<float> before = p;
    AdamState st(16);
    for (int i = 0; i < 5; ++i) adam_step(p, g, st, 0.0f);
    CHECK(p == before);
}

TEST_CASE("100 adam steps on p^2 from 1 converge below 0.2 and match the reference") {
    std::vector<float> p{1.0f};
    AdamState st(1);
    for (int t = 0; t < 100; ++t) {
        std::vector<float> g{2.0f * p[0]};
        adam_step(p, g, st, 0.05f);
    }
    CHECK(std::fabs(p[0]) < 0.2);
    const double ref = test_oracle::reference_adam_scalar(1.0, 0.05, 100,
                                                          [](double x) { return 2.0 * x; });
    CHECK(p[0] == doctest::Approx(ref).epsilon(1e-4));
}

// ---- finite differences -------------------------------------------------------

TEST_CASE("finite differences: sum and quadratic") {
    Rng rng(13);
    FloatTensor x = random_tensor({6}, rng);
    const FloatTensor g_sum = finite_difference_grad(
        [](const FloatTensor& t) {
            double a = 0.0;
            for (float v : t.data) a += v;
            return a;
        },
        x, 1e-3f);
    for (float v : g_sum.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-3));

    const FloatTensor g_quad = finite_difference_grad(
        [](const FloatTensor& t) {
            double a = 0.0;
            for (float v : t.data) a += 0.5 * double(v) * v;
            return a;
        },
        x, 1e-2f);
    for (int64_t i = 0; i < 6; ++i) CHECK(g_quad.data[i] == doctest::Approx(x.data[i]).epsilon(1e-3));
}

// ---- gradient checks: analytic vs central differences -----------------------

TEST_CASE("real conv gradients match finite differences") {
    Rng rng(100);
    for (int trial = 0; trial < 20; ++trial) {
        const int in_ch = 1 + static_cast<int>(rng.below(3));
        ConvSpec s = random_spec(rng, in_ch, false);
        const int64_t H = s.kernel_h + static_cast<int64_t>(rng.below(4));
        const int64_t W = s.kernel_w + static_cast<int64_t>(rng.below(4));
        FloatTensor x = random_tensor({H, W, in_ch}, rng, -1.0, 1.0);
        FloatTensor w = random_tensor({s.out_ch, s.kernel_h, s.kernel_w, in_ch}, rng, -1.0, 1.0);
        std::vector<float> bias(s.out_ch, 0.1f);

        auto loss = make_loss(real_conv2d(x, w, s, &bias).shape, rng);
        FloatTensor dy = loss.proj;

        FloatTensor dx;
        std::vector<float> dw(static_cast<size_t>(w.numel()), 0.0f), db(s.out_ch, 0.0f);
        conv2d_backward(x, w.ptr(), s, dy, 0.0f, &dx, dw.data(), db.data());

        const FloatTensor fd_x = finite_difference_grad(
            [&](const FloatTensor& probe) { return loss(real_conv2d(probe, w, s, &bias)); }, x,
            1e-2f);
        CHECK(max_rel_diff(dx, fd_x) < 1e-3);

        const FloatTensor fd_w = finite_difference_grad(
            [&](const FloatTensor& probe) { return loss(real_conv2d(x, probe, s, &bias)); }, w,
            1e-2f);
        CHECK(max_rel_diff(FloatTensor(w.shape, dw), fd_w) < 1e-3);
    }
}

TEST_CASE("batch norm infer gradients match finite differences") {
    Rng rng(101);
    for (int trial = 0; trial < 20; ++trial) {
        const int C = 1 + static_cast<int>(rng.below(5));
        const int64_t rows = 2 + static_cast<int64_t>(rng.below(6));
        FloatTensor x = random_tensor({rows, C}, rng);
        BatchNormParams p(C);
        for (int c = 0; c < C; ++c) {
            p.gamma[c] = static_cast<float>(rng.uniform(0.5, 1.5));
            p.beta[c] = static_cast<float>(rng.uniform(-0.5, 0.5));
            p.running_mean[c] = static_cast<float>(rng.uniform(-0.5, 0.5));
            p.running_var[c] = static_cast<float>(rng.uniform(0.5, 1.5));
        }
        auto loss = make_loss(x.shape, rng);
        FloatTensor dx;
        std::vector<float> dg(C, 0.0f), db(C, 0.0f);
        batch_norm_backward_infer(x, p, loss.proj, &dx, dg.data(), db.data());
        const FloatTensor fd = finite_difference_grad(
            [&](const FloatTensor& probe) {
                BatchNormParams q = p;
                return loss(batch_norm(probe, q, BnMode::infer));
            },
            x, 1e-2f);
        CHECK(max_rel_diff(dx, fd) < 1e-3);
    }
}

TEST_CASE("train-mode batch norm gradients match finite differences") {
    Rng rng(102);
    for (int trial = 0; trial < 10; ++trial) {
        const int C = 1 + static_cast<int>(rng.below(3));
        const int64_t rows = 4 + static_cast<int64_t>(rng.below(8));
        FloatTensor x = random_tensor({rows, C}, rng);
        BatchNormParams p(C);
        for (int c = 0; c < C; ++c) p.gamma[c] = static_cast<float>(rng.uniform(0.5, 1.5));
        auto loss = make_loss(x.shape, rng);

        std::vector<float> mean, invstd;
        BatchNormParams run = p;
        (void)batch_norm(x, run, BnMode::train, &mean, &invstd);
        FloatTensor dx;
        std::vector<float> dg(C, 0.0f), db(C, 0.0f);
        batch_norm_backward_train(x, p, mean, invstd, loss.proj, &dx, dg.data(), db.data());

        const FloatTensor fd = finite_difference_grad(
            [&](const FloatTensor& probe) {
                BatchNormParams q = p;
                return loss(batch_norm(probe, q, BnMode::train));
            },
            x, 1e-2f);
        CHECK(max_rel_diff(dx, fd) < 2e-3);
    }
}

TEST_CASE("dense gradients match finite differences") {
    Rng rng(103);
    for (int trial = 0; trial < 20; ++trial) {
        const int64_t n = 2 + static_cast<int64_t>(rng.below(12));
        const int64_t m = 1 + static_cast<int64_t>(rng.below(8));
        FloatTensor x = random_tensor({n}, rng);
        FloatTensor w = random_tensor({m, n}, rng);
        auto loss = make_loss({m}, rng);

        FloatTensor dx;
        std::vector<float> dw(static_cast<size_t>(m * n), 0.0f), db(m, 0.0f);
        dense_backward(x, w, loss.proj, &dx, dw.data(), db.data());

        const FloatTensor fd_x = finite_difference_grad(
            [&](const FloatTensor& probe) { return loss(dense(probe, w, false)); }, x, 1e-2f);
        CHECK(max_rel_diff(dx, fd_x) < 1e-3);
        const FloatTensor fd_w = finite_difference_grad(
            [&](const FloatTensor& probe) { return loss(dense(x, probe, false)); }, w, 1e-2f);
        CHECK(max_rel_diff(FloatTensor(w.shape, dw), fd_w) < 1e-3);
    }
}

TEST_CASE("pooling gradients match finite differences at non-tied inputs") {
    Rng rng(104);
    for (int trial = 0; trial < 20; ++trial) {
        const int C = 1 + static_cast<int>(rng.below(3));
        const int64_t H = 3 + static_cast<int64_t>(rng.below(4));
        const int64_t W = 3 + static_cast<int64_t>(rng.below(4));
        FloatTensor x = distinct_tensor({H, W, C}, rng);

        auto loss = make_loss(max_pool2d(x, 2, 2).shape, rng);
        const FloatTensor dx = max_pool2d_backward(x, loss.proj, 2, 2);
        const FloatTensor fd = finite_difference_grad(
            [&](const FloatTensor& probe) { return loss(max_pool2d(probe, 2, 2)); }, x, 1e-3f);
        CHECK(max_rel_diff(dx, fd) < 1e-3);

        auto gloss = make_loss({C}, rng);
        const FloatTensor gdx = global_max_pool_backward(x, gloss.proj);
        const FloatTensor gfd = finite_difference_grad(
            [&](const FloatTensor& probe) { return gloss(global_max_pool(probe)); }, x, 1e-3f);
        CHECK(max_rel_diff(gdx, gfd) < 1e-3);
    }
}

TEST_CASE("small conv+pool network loss matches finite differences") {
    Rng rng(105);
    ConvSpec s{3, 3, 2, 4, 1, Padding::same, false};
    FloatTensor x = random_tensor({6, 6, 2}, rng, -1.0, 1.0);
    FloatTensor w = random_tensor({4, 3, 3, 2}, rng, -0.5, 0.5);
    auto loss_of = [&](const FloatTensor& xi, const FloatTensor& wi) {
        const FloatTensor y = real_conv2d(xi, wi, s);
        const FloatTensor p = global_max_pool(relu(y));
        double acc = 0.0;
        for (float v : p.data) acc += 0.5 * double(v) * v;
        return acc;
    };
    // analytic backward chain
    const FloatTensor y = real_conv2d(x, w, s);
    const FloatTensor r = relu(y);
    const FloatTensor p = global_max_pool(r);
    FloatTensor dp(p.shape);
    for (int64_t i = 0; i < p.numel(); ++i) dp.data[i] = p.data[i];
    const FloatTensor dr = global_max_pool_backward(r, dp);
    const FloatTensor dy = relu_backward(y, dr);
    std::vector<float> dw(static_cast<size_t>(w.numel()), 0.0f);
    conv2d_backward(x, w.ptr(), s, dy, 0.0f, nullptr, dw.data(), nullptr);

    const FloatTensor fd_w = finite_difference_grad(
        [&](const FloatTensor& probe) { return loss_of(x, probe); }, w, 1e-2f);
    CHECK(max_rel_diff(FloatTensor(w.shape, dw), fd_w) < 1e-3);
}
