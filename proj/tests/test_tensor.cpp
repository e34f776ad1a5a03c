#include <doctest.h>

#include <cmath>

#include "effgcn/gradcheck.hpp"
#include "effgcn/ops.hpp"
#include "effgcn/train.hpp"
#include "oracles.hpp"

using namespace effgcn;

namespace {

template <typename S>
Tensor<S> leaf_from(const Array<S>& a, bool grad = false) {
    return Tensor<S>::leaf(a, grad);
}

}  // namespace

TEST_CASE("temporal conv with an identity 1x1 kernel is the identity") {
    Rng rng(1);
    auto x = oracle::random_array<double>({3, 2, 5, 4}, rng);
    Array<double> w = Array<double>::zeros({3, 3, 1});
    for (int c = 0; c < 3; ++c) w.data[static_cast<std::size_t>((c * 3 + c))] = 1.0;
    auto y = temporal_conv(leaf_from(x), leaf_from(w), Tensor<double>{}, 1, 1);
    CHECK(y.value().data == x.data);
}

TEST_CASE("depth-wise centered delta kernel is the identity") {
    Rng rng(2);
    auto x = oracle::random_array<double>({4, 1, 6, 3}, rng);
    Array<double> w = Array<double>::zeros({4, 1, 3});
    for (int c = 0; c < 4; ++c) w.data[static_cast<std::size_t>(c * 3 + 1)] = 1.0;
    auto y = temporal_conv(leaf_from(x), leaf_from(w), Tensor<double>{}, 1, 4);
    CHECK(y.value().data == x.data);
}

TEST_CASE("temporal conv matches the index-by-index reference") {
    Rng rng(3);
    struct Config {
        std::int64_t ci, co, l, stride, groups;
    };
    for (const auto& cfg : {Config{6, 8, 5, 1, 1}, Config{6, 8, 3, 2, 1}, Config{6, 6, 5, 1, 6},
                            Config{6, 6, 3, 2, 6}, Config{6, 4, 3, 1, 2}, Config{4, 8, 5, 2, 2}}) {
        auto x = oracle::random_array<double>({cfg.ci, 2, 7, 3}, rng);
        auto w = oracle::random_array<double>({cfg.co, cfg.ci / cfg.groups, cfg.l}, rng);
        auto b = oracle::random_array<double>({cfg.co}, rng);
        auto y = temporal_conv(leaf_from(x), leaf_from(w), leaf_from(b), cfg.stride, cfg.groups);
        auto ref = oracle::conv_reference<double>(x, w, &b, cfg.stride, cfg.groups);
        REQUIRE(y.shape() == ref.shape);
        for (std::size_t i = 0; i < ref.data.size(); ++i)
            CHECK(y.value().data[i] == doctest::Approx(ref.data[i]).epsilon(1e-12));
    }
    // f32 against the f64 reference at the documented tolerance
    auto xf = oracle::random_array<float>({6, 2, 7, 3}, rng);
    auto wf = oracle::random_array<float>({8, 6, 5}, rng);
    auto yf = temporal_conv(leaf_from(xf), leaf_from(wf), Tensor<float>{}, 1, 1);
    auto ref = oracle::conv_reference<float>(xf, wf, nullptr, 1, 1);
    for (std::size_t i = 0; i < ref.data.size(); ++i)
        CHECK(std::abs(yf.value().data[i] - ref.data[i]) < 1e-5f);
}

TEST_CASE("stride semantics: T maps to ceil(T / stride), V untouched") {
    Rng rng(4);
    for (std::int64_t t : {5, 6, 299, 300}) {
        auto x = oracle::random_array<float>({2, 1, t, 3}, rng);
        auto w = oracle::random_array<float>({2, 2, 5}, rng);
        auto y1 = temporal_conv(leaf_from(x), leaf_from(w), Tensor<float>{}, 1, 1);
        CHECK(y1.shape() == Shape({2, 1, t, 3}));
        auto y2 = temporal_conv(leaf_from(x), leaf_from(w), Tensor<float>{}, 2, 1);
        CHECK(y2.shape() == Shape({2, 1, (t + 1) / 2, 3}));
    }
}

TEST_CASE("temporal conv argument validation") {
    Rng rng(5);
    auto x = leaf_from(oracle::random_array<float>({6, 1, 4, 3}, rng));
    auto w_even = leaf_from(oracle::random_array<float>({4, 6, 4}, rng));
    CHECK_THROWS_AS(temporal_conv(x, w_even, Tensor<float>{}, 1, 1), std::invalid_argument);
    auto w_groups = leaf_from(oracle::random_array<float>({4, 3, 3}, rng));
    CHECK_THROWS_AS(temporal_conv(x, w_groups, Tensor<float>{}, 1, 4), std::invalid_argument);
}

TEST_CASE("pointwise conv: identity, scaling, equivalence to a 1x1 temporal conv") {
    Rng rng(6);
    auto x = oracle::random_array<double>({5, 2, 4, 3}, rng);
    Array<double> eye = Array<double>::zeros({5, 5});
    for (int i = 0; i < 5; ++i) eye.data[static_cast<std::size_t>(i * 5 + i)] = 1.0;
    CHECK(pointwise_conv(leaf_from(x), leaf_from(eye)).value().data == x.data);

    Array<double> doubler({1, 1}, {2.0});
    auto one_chan = oracle::random_array<double>({1, 1, 4, 3}, rng);
    auto doubled = pointwise_conv(leaf_from(one_chan), leaf_from(doubler));
    for (std::size_t i = 0; i < one_chan.data.size(); ++i)
        CHECK(doubled.value().data[i] == 2.0 * one_chan.data[i]);

    auto w = oracle::random_array<double>({7, 5}, rng);
    Array<double> w3 = Array<double>::uninit({7, 5, 1});
    w3.data = w.data;
    const auto pw = pointwise_conv(leaf_from(x), leaf_from(w));
    const auto tc = temporal_conv(leaf_from(x), leaf_from(w3), Tensor<double>{}, 1, 1);
    CHECK(pw.value().data == tc.value().data);  // bit-for-bit
}

TEST_CASE("batch norm eval with unit running stats divides by sqrt(1 + eps)") {
    Rng rng(7);
    auto x = oracle::random_array<double>({3, 2, 4, 2}, rng);
    auto stats = BnStats<double>::fresh(3);
    auto gamma = leaf_from(Array<double>::full({3}, 1.0));
    auto beta = leaf_from(Array<double>::zeros({3}));
    auto y = batch_norm(leaf_from(x), gamma, beta, stats, Mode::eval);
    const double scale = 1.0 / std::sqrt(1.0 + 1e-5);
    for (std::size_t i = 0; i < x.data.size(); ++i)
        CHECK(y.value().data[i] == doctest::Approx(x.data[i] * scale).epsilon(1e-12));
}

TEST_CASE("batch norm train output is standardized per channel before affine") {
    Rng rng(8);
    Array<double> x = Array<double>::uninit({4, 3, 8, 5});
    for (auto& v : x.data) v = 3.0 + 2.5 * rng.normal();
    auto stats = BnStats<double>::fresh(4);
    auto y = batch_norm(leaf_from(x), leaf_from(Array<double>::full({4}, 1.0)),
                        leaf_from(Array<double>::zeros({4})), stats, Mode::train);
    const std::int64_t p = 3 * 8 * 5;
    for (int c = 0; c < 4; ++c) {
        double mean = 0, var = 0;
        for (std::int64_t i = 0; i < p; ++i) mean += y.value().data[static_cast<std::size_t>(c * p + i)];
        mean /= static_cast<double>(p);
        for (std::int64_t i = 0; i < p; ++i) {
            const double d = y.value().data[static_cast<std::size_t>(c * p + i)] - mean;
            var += d * d;
        }
        var /= static_cast<double>(p);
        CHECK(std::abs(mean) < 1e-6);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }
    // running stats moved toward the batch statistics
    CHECK(stats.mean.data[0] == doctest::Approx(0.1 * 3.0).epsilon(0.2));
}

TEST_CASE("batch norm with zero gamma yields the constant beta") {
    Rng rng(9);
    auto x = oracle::random_array<double>({2, 1, 3, 3}, rng);
    auto stats = BnStats<double>::fresh(2);
    auto y = batch_norm(leaf_from(x), leaf_from(Array<double>::zeros({2})),
                        leaf_from(Array<double>::full({2}, 5.0)), stats, Mode::train);
    for (double v : y.value().data) CHECK(v == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("batch norm rejects an empty batch") {
    auto stats = BnStats<float>::fresh(3);
    auto x = Tensor<float>::leaf(Array<float>({3, 0}, Array<float>::Storage{}));
    CHECK_THROWS_AS(batch_norm(x, Tensor<float>::leaf(Array<float>::full({3}, 1.0f)),
                               Tensor<float>::leaf(Array<float>::zeros({3})), stats, Mode::train),
                    std::invalid_argument);
}

TEST_CASE("activation fixed points and saturation") {
    Array<double> xs({7}, {0.0, 3.0, 4.5, -3.0, -8.0, 1.0, -1.0});
    auto x = leaf_from(xs);
    const auto swish_y = activation(x, Act::swish).value();
    const auto hsw_y = activation(x, Act::hardswish).value();
    const auto sig_y = activation(x, Act::sigmoid).value();
    const auto relu_y = activation(x, Act::relu).value();
    CHECK(swish_y.data[0] == 0.0);
    CHECK(sig_y.data[0] == 0.5);
    CHECK(hsw_y.data[0] == 0.0);
    CHECK(hsw_y.data[1] == doctest::Approx(3.0));   // x >= 3 passes through
    CHECK(hsw_y.data[2] == doctest::Approx(4.5));
    CHECK(hsw_y.data[3] == 0.0);                    // x <= -3 clamps to zero
    CHECK(hsw_y.data[4] == 0.0);
    CHECK(relu_y.data[6] == 0.0);
    CHECK(relu_y.data[5] == 1.0);
    CHECK_THROWS_AS(act_from_string("gelu"), std::invalid_argument);
}

TEST_CASE("activation gradients match finite differences") {
    Rng rng(10);
    for (Act kind : {Act::swish, Act::sigmoid, Act::hardswish, Act::relu}) {
        Registry<double> reg;
        auto w = reg.parameter("w", oracle::random_array<double>({40}, rng), true);
        auto fn = [w, kind]() { return sum(mul(activation(w, kind), activation(w, kind))); };
        const auto report = grad_check(fn, reg.parameters(), 1e-6, 40);
        CHECK(report.all_pass);
    }
}

TEST_CASE("mean over axes: values, commutativity and validation") {
    Array<double> v({4}, {1, 2, 3, 4});
    CHECK(mean_over_axes(leaf_from(v), {0}).value().data[0] == doctest::Approx(2.5));

    auto c = Array<double>::full({3, 2, 5}, 7.0);
    const auto m = mean_over_axes(leaf_from(c), {1, 2});
    CHECK(m.shape() == Shape({3}));
    for (double x : m.value().data) CHECK(x == doctest::Approx(7.0));

    Rng rng(11);
    auto x = oracle::random_array<double>({3, 2, 6, 5}, rng);
    const auto a = mean_over_axes(mean_over_axes(leaf_from(x), {2}), {2}).value();
    const auto b = mean_over_axes(mean_over_axes(leaf_from(x), {3}), {2}).value();
    for (std::size_t i = 0; i < a.data.size(); ++i)
        CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(1e-12));

    CHECK_THROWS_AS(mean_over_axes(leaf_from(x), {1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(mean_over_axes(leaf_from(x), {4}), std::invalid_argument);

    // interior-axis fast path against the generic expectation
    const auto mid = mean_over_axes(leaf_from(x), {1}).value();
    for (std::int64_t c0 = 0; c0 < 3; ++c0)
        for (std::int64_t t = 0; t < 6; ++t)
            for (std::int64_t j = 0; j < 5; ++j) {
                double ref = 0;
                for (std::int64_t n = 0; n < 2; ++n)
                    ref += x.data[static_cast<std::size_t>(((c0 * 2 + n) * 6 + t) * 5 + j)];
                ref /= 2.0;
                CHECK(mid.data[static_cast<std::size_t>((c0 * 6 + t) * 5 + j)] ==
                      doctest::Approx(ref).epsilon(1e-12));
            }
}

TEST_CASE("fully connected layer against a dot-product loop") {
    Rng rng(12);
    auto x = oracle::random_array<double>({6}, rng);
    auto w = oracle::random_array<double>({4, 6}, rng);
    auto b = oracle::random_array<double>({4}, rng);
    const auto y = fully_connected(leaf_from(x), leaf_from(w), leaf_from(b)).value();
    for (int q = 0; q < 4; ++q) {
        double ref = b.data[static_cast<std::size_t>(q)];
        for (int c = 0; c < 6; ++c)
            ref += w.data[static_cast<std::size_t>(q * 6 + c)] * x.data[static_cast<std::size_t>(c)];
        CHECK(y.data[static_cast<std::size_t>(q)] == doctest::Approx(ref).epsilon(1e-12));
    }

    Array<double> eye = Array<double>::zeros({6, 6});
    for (int i = 0; i < 6; ++i) eye.data[static_cast<std::size_t>(i * 6 + i)] = 1.0;
    CHECK(fully_connected(leaf_from(x), leaf_from(eye)).value().data == x.data);

    const auto only_bias =
        fully_connected(leaf_from(x), leaf_from(Array<double>::zeros({4, 6})), leaf_from(b));
    CHECK(only_bias.value().data == b.data);
}

TEST_CASE("dropout: identity cases, statistics and determinism") {
    Rng rng(13);
    auto x = leaf_from(oracle::random_array<float>({64, 1, 50, 20}, rng));
    Rng d0(0);
    CHECK(dropout(x, 0.0, Mode::train, d0).node() == x.node());
    CHECK(dropout(x, 0.5, Mode::eval, d0).node() == x.node());
    CHECK_THROWS_AS(dropout(x, 1.0, Mode::train, d0), std::invalid_argument);

    Rng d1(42);
    const auto y = dropout(x, 0.25, Mode::train, d1).value();
    std::int64_t survivors = 0;
    double sum_x = 0, sum_y = 0;
    for (std::int64_t i = 0; i < y.numel(); ++i) {
        if (y.data[static_cast<std::size_t>(i)] != 0.0f) ++survivors;
        sum_x += std::abs(x.value().data[static_cast<std::size_t>(i)]);
        sum_y += std::abs(y.data[static_cast<std::size_t>(i)]);
    }
    const double frac = static_cast<double>(survivors) / static_cast<double>(y.numel());
    CHECK(frac == doctest::Approx(0.75).epsilon(0.02));
    CHECK(sum_y == doctest::Approx(sum_x).epsilon(0.02));  // expectation preserved

    Rng d2(42);
    const auto y2 = dropout(x, 0.25, Mode::train, d2).value();
    CHECK(y.data == y2.data);
}

TEST_CASE("backward basics: linear and quadratic losses") {
    auto w = Tensor<double>::leaf(Array<double>({4}, {1.0, -2.0, 0.5, 3.0}), true);
    sum(w).backward();
    for (double g : w.grad().data) CHECK(g == 1.0);

    w.zero_grad();
    scale(sum(mul(w, w)), 0.5).backward();
    for (int i = 0; i < 4; ++i)
        CHECK(w.grad().data[static_cast<std::size_t>(i)] ==
              doctest::Approx(w.value().data[static_cast<std::size_t>(i)]).epsilon(1e-12));
}

TEST_CASE("backward state errors") {
    auto w = Tensor<double>::leaf(Array<double>({3}, {1, 2, 3}), true);
    CHECK_THROWS_AS(w.backward(), std::invalid_argument);  // non-scalar root
    auto loss = sum(w);
    loss.backward();
    CHECK_THROWS_AS(loss.backward(), StateError);
}

TEST_CASE("no-grad mode records nothing") {
    auto w = Tensor<double>::leaf(Array<double>({3}, {1, 2, 3}), true);
    NoGradGuard guard;
    auto loss = sum(w);
    CHECK(!loss.requires_grad());
}

TEST_CASE("primitives are bitwise deterministic across repeated evaluation") {
    Rng rng(14);
    auto x = oracle::random_array<float>({8, 2, 16, 5}, rng);
    auto w = oracle::random_array<float>({8, 8, 5}, rng);
    auto run = [&] {
        auto y = temporal_conv(leaf_from(x), leaf_from(w), Tensor<float>{}, 1, 1);
        return activation(y, Act::swish).value().data;
    };
    CHECK(run() == run());
}

TEST_CASE("structural ops: concat, slice, transpose") {
    Rng rng(15);
    auto a = oracle::random_array<double>({2, 3}, rng);
    auto b = oracle::random_array<double>({4, 3}, rng);
    const auto cat0 = concat_first<double>({leaf_from(a), leaf_from(b)});
    CHECK(cat0.shape() == Shape({6, 3}));
    CHECK(slice_first(cat0, 2, 4).value().data == b.data);

    auto c = oracle::random_array<double>({2, 5}, rng);
    auto d = oracle::random_array<double>({2, 3}, rng);
    const auto cat1 = concat_last(leaf_from(c), leaf_from(d));
    CHECK(cat1.shape() == Shape({2, 8}));
    CHECK(slice_last(cat1, 5, 3).value().data == d.data);
    CHECK(slice_last(cat1, 0, 5).value().data == c.data);

    const auto tr = transpose2(leaf_from(c));
    CHECK(tr.shape() == Shape({5, 2}));
    CHECK(tr.value().data[0 * 2 + 1] == c.data[1 * 5 + 0]);
}

TEST_CASE("gate and structural op gradients pass finite differences") {
    Rng rng(16);
    Registry<double> reg;
    auto x = reg.parameter("x", oracle::random_array<double>({3, 2, 4, 5}, rng), true);
    auto gt = reg.parameter("gt", oracle::random_array<double>({3, 2, 4}, rng), true);
    auto gv = reg.parameter("gv", oracle::random_array<double>({3, 2, 5}, rng), true);
    auto ga = reg.parameter("ga", oracle::random_array<double>({4, 2}, rng), true);
    auto fn = [&]() {
        auto y = mul_joint_gate(mul_time_gate(x, gt), gv);
        y = mul_axis_gate(y, ga, 2);
        auto pooled = mean_over_axes(y, {1});
        return sum(mul(pooled, pooled));
    };
    const auto report = grad_check(fn, reg.parameters(), 1e-6);
    CHECK(report.all_pass);
}

TEST_CASE("cross entropy agrees with the scalar version and its gradient") {
    Rng rng(17);
    Registry<double> reg;
    auto logits = reg.parameter("z", oracle::random_array<double>({5, 3}, rng), true);
    const std::vector<std::int64_t> targets{1, 4, 0};
    const auto loss = cross_entropy_mean(logits, targets);
    double ref = 0;
    for (int col = 0; col < 3; ++col) {
        std::vector<double> z(5);
        for (int r = 0; r < 5; ++r) z[static_cast<std::size_t>(r)] = logits.value().data[static_cast<std::size_t>(r * 3 + col)];
        ref += softmax_cross_entropy<double>(z, static_cast<int>(targets[static_cast<std::size_t>(col)])).first;
    }
    CHECK(loss.value().data[0] == doctest::Approx(ref / 3.0).epsilon(1e-12));

    auto fn = [logits, targets]() { return cross_entropy_mean(logits, targets); };
    const auto report = grad_check(fn, reg.parameters(), 1e-8, 15, 1e-6);
    CHECK(report.all_pass);
}
