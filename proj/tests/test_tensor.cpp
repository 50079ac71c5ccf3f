#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "vtunet/error.hpp"
#include "vtunet/gradcheck.hpp"
#include "vtunet/mac_counter.hpp"
#include "vtunet/ops.hpp"
#include "vtunet/parallel.hpp"

using namespace vtunet;

namespace {

// Analytic gradient of sum(w * f(x)) against central differences, where w
// is a fixed random weighting so every output element matters.
void check_grad(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, Rng& rng, double tol = 1e-7) {
    const Tensor probe = f(x.detach());
    const Tensor w = oracle::random_tensor(probe.shape(), rng);
    auto scalar = [&](const Tensor& in) { return sum(mul(f(in), w)).item(); };
    Tensor leaf = Tensor::from(x.shape(), std::vector<double>(x.values().begin(), x.values().end()), true);
    GradTape tape;
    const Tensor out = sum(mul(f(leaf), w));
    const Gradients g = tape.backward(out);
    const Tensor numeric = finite_diff(scalar, leaf);
    const Tensor analytic = g.get(leaf);
    const auto a = analytic.values();
    const auto n = numeric.values();
    for (std::size_t i = 0; i < a.size(); ++i) {
        INFO("coordinate " << i << " analytic " << a[i] << " numeric " << n[i]);
        CHECK(relative_error(a[i], n[i]) < tol);
    }
}

}  // namespace

TEST_CASE("matmul matches the triple-loop oracle, batched and shared") {
    Rng rng(1);
    for (auto [m, k, n] : {std::array<std::size_t, 3>{1, 1, 1}, {3, 5, 2}, {17, 9, 33}, {64, 31, 7}}) {
        const Tensor a = oracle::random_tensor({2, m, k}, rng);
        const Tensor b = oracle::random_tensor({2, k, n}, rng);
        const Tensor shared = oracle::random_tensor({k, n}, rng);
        const Tensor c = matmul(a, b);
        const Tensor cs = matmul(a, shared);
        REQUIRE(c.shape() == Shape{2, m, n});
        const auto av = a.values(), bv = b.values();
        for (std::size_t batch = 0; batch < 2; ++batch) {
            const std::vector<double> ab(av.begin() + batch * m * k, av.begin() + (batch + 1) * m * k);
            const std::vector<double> bb(bv.begin() + batch * k * n, bv.begin() + (batch + 1) * k * n);
            const auto want = oracle::matmul(ab, bb, m, k, n);
            const auto want_s = oracle::matmul(ab, {shared.values().begin(), shared.values().end()}, m, k, n);
            CHECK(oracle::max_abs_diff(want, c.values().subspan(batch * m * n, m * n)) < 1e-12);
            CHECK(oracle::max_abs_diff(want_s, cs.values().subspan(batch * m * n, m * n)) < 1e-12);
        }
    }
}

TEST_CASE("matmul_bt equals matmul against the explicit transpose") {
    Rng rng(2);
    const Tensor a = oracle::random_tensor({5, 7}, rng);
    const Tensor b = oracle::random_tensor({4, 7}, rng);
    std::vector<double> bt(7 * 4);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 7; ++j) bt[j * 4 + i] = b.values()[i * 7 + j];
    const auto want = oracle::matmul({a.values().begin(), a.values().end()}, bt, 5, 7, 4);
    CHECK(oracle::max_abs_diff(want, matmul_bt(a, b).values()) < 1e-12);
}

TEST_CASE("linear with bias: single 4 -> 8 layer") {
    Rng rng(3);
    const Tensor x = oracle::random_tensor({6, 4}, rng);
    const Tensor w = oracle::random_tensor({4, 8}, rng);
    const Tensor b = oracle::random_tensor({8}, rng);
    const Tensor y = linear(x, w, b);
    auto want = oracle::matmul({x.values().begin(), x.values().end()}, {w.values().begin(), w.values().end()}, 6, 4, 8);
    for (std::size_t i = 0; i < want.size(); ++i) want[i] += b.values()[i % 8];
    CHECK(oracle::max_abs_diff(want, y.values()) < 1e-12);
    CHECK(w.numel() + b.numel() == 40);
}

TEST_CASE("broadcasting follows numpy rules") {
    const Tensor a = Tensor::from({2, 1, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor b = Tensor::from({4, 1}, {10, 20, 30, 40});
    const Tensor c = add(a, b);
    REQUIRE(c.shape() == Shape{2, 4, 3});
    CHECK(c.values()[0] == 11);
    CHECK(c.values()[1 * 3 + 2] == 23);
    CHECK(c.values()[(1 * 4 + 3) * 3 + 1] == 45);
    CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({4})), DimensionError);
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
    Rng rng(4);
    const Tensor x = oracle::random_tensor({5, 9}, rng, -30, 30);
    const Tensor s = softmax_last(x);
    const Tensor s2 = softmax_last(add(x, Tensor::full({5, 1}, 1000.0)));
    for (std::size_t r = 0; r < 5; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < 9; ++c) total += s.values()[r * 9 + c];
        CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    }
    CHECK(oracle::max_abs_diff(s.values(), s2.values()) < 1e-12);
}

TEST_CASE("non-finite values raise NumericError") {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(softmax_last(Tensor::from({1, 2}, {nan, 0.0})), NumericError);
    CHECK_THROWS_AS(scale(Tensor::from({1}, {1e300}), 1e300), NumericError);
}

TEST_CASE("gelu matches a long-double erf series") {
    std::vector<double> xs;
    for (double x = -8.0; x <= 8.0; x += 0.173) xs.push_back(x);
    const Tensor y = gelu(Tensor::from({xs.size()}, xs));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const long double x = xs[i];
        const long double want = 0.5L * x * (1.0L + oracle::erf_series(x / std::sqrt(2.0L)));
        CHECK(std::abs(y.values()[i] - static_cast<double>(want)) < 1e-14);
    }
}

TEST_CASE("layer_norm output has zero mean and unit variance before the affine map") {
    Rng rng(5);
    const Tensor x = oracle::random_tensor({4, 16}, rng, -3, 7);
    const Tensor y = layer_norm(x, Tensor::full({16}, 1.0), Tensor::zeros({16}), 0.0 + 1e-12);
    for (std::size_t r = 0; r < 4; ++r) {
        double m = 0.0, v = 0.0;
        for (std::size_t c = 0; c < 16; ++c) m += y.values()[r * 16 + c];
        m /= 16;
        for (std::size_t c = 0; c < 16; ++c) v += std::pow(y.values()[r * 16 + c] - m, 2);
        CHECK(std::abs(m) < 1e-12);
        CHECK(v / 16 == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("every op's backward agrees with central differences") {
    Rng rng(6);
    const Tensor b34 = oracle::random_tensor({3, 4}, rng);
    const Tensor b5 = oracle::random_tensor({5}, rng);
    const Tensor g5 = oracle::random_tensor({5}, rng, 0.5, 1.5);
    SUBCASE("matmul lhs") { check_grad([&](const Tensor& x) { return matmul(x, b34); }, oracle::random_tensor({2, 3}, rng), rng); }
    SUBCASE("matmul rhs batched") {
        const Tensor a = oracle::random_tensor({2, 3, 4}, rng);
        check_grad([&](const Tensor& x) { return matmul(a, x); }, oracle::random_tensor({2, 4, 2}, rng), rng);
    }
    SUBCASE("matmul shared rhs") {
        const Tensor a = oracle::random_tensor({2, 5, 3}, rng);
        check_grad([&](const Tensor& x) { return matmul(a, x); }, oracle::random_tensor({3, 4}, rng), rng);
    }
    SUBCASE("matmul_bt both sides") {
        const Tensor k = oracle::random_tensor({2, 6, 3}, rng);
        check_grad([&](const Tensor& x) { return matmul_bt(x, k); }, oracle::random_tensor({2, 4, 3}, rng), rng);
        const Tensor q = oracle::random_tensor({2, 4, 3}, rng);
        check_grad([&](const Tensor& x) { return matmul_bt(q, x); }, oracle::random_tensor({2, 6, 3}, rng), rng);
    }
    SUBCASE("linear weight, bias and input") {
        const Tensor x = oracle::random_tensor({7, 3}, rng);
        const Tensor w = oracle::random_tensor({3, 5}, rng);
        check_grad([&](const Tensor& in) { return linear(in, w, b5); }, x, rng);
        check_grad([&](const Tensor& in) { return linear(x, in, b5); }, w, rng);
        check_grad([&](const Tensor& in) { return linear(x, w, in); }, b5, rng);
    }
    SUBCASE("broadcast add and mul") {
        const Tensor big = oracle::random_tensor({4, 3, 5}, rng);
        check_grad([&](const Tensor& x) { return add(big, x); }, oracle::random_tensor({3, 1}, rng), rng);
        check_grad([&](const Tensor& x) { return mul(big, x); }, oracle::random_tensor({5}, rng), rng);
        check_grad([&](const Tensor& x) { return mul(x, x); }, oracle::random_tensor({6}, rng), rng);
    }
    SUBCASE("softmax") { check_grad([](const Tensor& x) { return softmax_last(x); }, oracle::random_tensor({3, 6}, rng, -3, 3), rng); }
    SUBCASE("layer_norm input, gamma, beta") {
        const Tensor x = oracle::random_tensor({4, 5}, rng, -2, 2);
        check_grad([&](const Tensor& in) { return layer_norm(in, g5, b5); }, x, rng);
        check_grad([&](const Tensor& in) { return layer_norm(x, in, b5); }, g5, rng);
        check_grad([&](const Tensor& in) { return layer_norm(x, g5, in); }, b5, rng);
    }
    SUBCASE("gelu") { check_grad([](const Tensor& x) { return gelu(x); }, oracle::random_tensor({20}, rng, -4, 4), rng); }
    SUBCASE("gather with repeats, reshape, scale, sum, mean") {
        auto idx = std::make_shared<std::vector<std::size_t>>(std::vector<std::size_t>{0, 3, 3, 5, 1, 0});
        check_grad([&](const Tensor& x) { return gather(x, {2, 3}, idx); }, oracle::random_tensor({6}, rng), rng);
        check_grad([](const Tensor& x) { return reshape(x, {3, 2}); }, oracle::random_tensor({2, 3}, rng), rng);
        check_grad([](const Tensor& x) { return scale(x, -2.5); }, oracle::random_tensor({4}, rng), rng);
        check_grad([](const Tensor& x) { return sum(x); }, oracle::random_tensor({4}, rng), rng);
        check_grad([](const Tensor& x) { return mean(x); }, oracle::random_tensor({4}, rng), rng);
    }
}

TEST_CASE("tape contract") {
    const Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    SUBCASE("gradient of a reused input accumulates") {
        GradTape tape;
        const Tensor y = sum(add(mul(x, x), x));
        const Gradients g = tape.backward(y);
        CHECK(g.get(x).values()[0] == 3.0);
        CHECK(g.get(x).values()[1] == 5.0);
    }
    SUBCASE("backward is single-use") {
        GradTape tape;
        const Tensor y = sum(x);
        tape.backward(y);
        CHECK_THROWS_AS(tape.backward(y), TapeError);
    }
    SUBCASE("root must be a scalar produced on this tape") {
        GradTape tape;
        CHECK_THROWS_AS(tape.backward(mul(x, x)), TapeError);
    }
    SUBCASE("recorded op results are immutable") {
        GradTape tape;
        const Tensor y = mul(x, x);
        Tensor copy = y;
        CHECK_THROWS_AS(copy.mutable_values(), TapeError);
    }
    SUBCASE("paused tape records nothing") {
        GradTape tape;
        {
            TapePause pause;
            sum(x);
        }
        CHECK(tape.size() == 0);
    }
    SUBCASE("nothing recorded without requires_grad inputs") {
        GradTape tape;
        sum(Tensor::from({2}, {1.0, 2.0}));
        CHECK(tape.size() == 0);
    }
}

TEST_CASE("mac counter tallies matmul work and dry-run skips arithmetic") {
    Rng rng(7);
    const Tensor a = oracle::random_tensor({3, 4, 5}, rng);
    const Tensor b = oracle::random_tensor({5, 6}, rng);
    {
        MacCounter counter(false);
        const Tensor c = matmul(a, b);
        CHECK(counter.total().total() == 3 * 4 * 5 * 6);
        CHECK(c.values()[0] != 0.0);
    }
    {
        MacCounter counter(true);
        const Tensor c = linear(Tensor::zeros({7, 5}), b, Tensor::zeros({6}));
        CHECK(counter.total().total() == 7 * 5 * 6);
    }
}

TEST_CASE("kernels are bitwise identical across thread counts") {
    Rng rng(8);
    const Tensor a = oracle::random_tensor({4, 67, 45}, rng);
    const Tensor b = oracle::random_tensor({45, 38}, rng);
    const std::size_t saved = num_threads();
    set_num_threads(1);
    const Tensor c1 = matmul(a, b);
    const Tensor d1 = matmul_bt(a, a);
    set_num_threads(4);
    const Tensor c4 = matmul(a, b);
    const Tensor d4 = matmul_bt(a, a);
    set_num_threads(saved);
    CHECK(std::equal(c1.values().begin(), c1.values().end(), c4.values().begin()));
    CHECK(std::equal(d1.values().begin(), d1.values().end(), d4.values().begin()));
}
