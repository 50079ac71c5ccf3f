#include <doctest.h>

#include "oracles.hpp"
#include "vtunet/attention.hpp"
#include "vtunet/error.hpp"
#include "vtunet/gradcheck.hpp"
#include "vtunet/ops.hpp"

using namespace vtunet;

namespace {

BiasParams random_relative_bias(const Dims3& table_window, std::size_t heads, Rng& rng) {
    BiasParams b;
    b.table_window = table_window;
    b.table = oracle::random_tensor({relative_table_rows(table_window), heads}, rng, -2, 2);
    return b;
}

}  // namespace

TEST_CASE("windowed attention equals the naive straddling-window oracle") {
    Rng rng(21);
    const std::vector<std::pair<Dims3, Dims3>> cases{
        {{4, 8, 8}, {2, 4, 4}}, {{8, 8, 8}, {4, 4, 4}}, {{2, 6, 6}, {2, 2, 2}}, {{4, 4, 12}, {2, 4, 4}},
        {{2, 8, 4}, {4, 4, 4}},
    };
    for (const auto& [dims, base] : cases) {
        for (bool shifted : {false, true}) {
            for (std::size_t heads : {1, 2}) {
                const std::size_t c = 4;
                WindowConfig cfg;
                cfg.window = base;
                if (shifted) cfg.shift = {base.d / 2, base.h / 2, base.w / 2};
                cfg = clamp_to_grid(cfg, dims);
                const Tensor q = oracle::random_tensor({dims.volume(), c}, rng, -2, 2);
                const Tensor k = oracle::random_tensor({dims.volume(), c}, rng, -2, 2);
                const Tensor v = oracle::random_tensor({dims.volume(), c}, rng);
                const BiasParams bias = random_relative_bias(base, heads, rng);
                const Tensor got = attend_windows(q, k, v, bias, heads, dims, cfg);
                const auto want = oracle::naive_window_attention(dims, cfg.window, cfg.shift, base, heads, c,
                                                                 q.values(), k.values(), v.values(),
                                                                 bias.table.values());
                INFO("dims " << dims_str(dims) << " shifted " << shifted << " heads " << heads);
                CHECK(oracle::max_abs_diff(want, got.values()) < 1e-10);
            }
        }
    }
}

TEST_CASE("a single window covering the grid is global attention") {
    Rng rng(22);
    const Dims3 dims{2, 2, 4};
    WindowConfig cfg;
    cfg.window = dims;
    const Tensor q = oracle::random_tensor({16, 6}, rng);
    const Tensor k = oracle::random_tensor({16, 6}, rng);
    const Tensor v = oracle::random_tensor({16, 6}, rng);
    BiasParams zero;
    zero.table_window = dims;
    zero.table = Tensor::zeros({relative_table_rows(dims), 3});
    const Tensor got = attend_windows(q, k, v, zero, 3, dims, cfg);
    // softmax(QK^T/sqrt(2)) V per head, written out.
    for (std::size_t h = 0; h < 3; ++h)
        for (std::size_t i = 0; i < 16; ++i) {
            std::vector<double> w(16);
            double z = 0.0;
            for (std::size_t j = 0; j < 16; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < 2; ++c) s += q.values()[i * 6 + h * 2 + c] * k.values()[j * 6 + h * 2 + c];
                z += (w[j] = std::exp(s / std::sqrt(2.0)));
            }
            for (std::size_t c = 0; c < 2; ++c) {
                double o = 0.0;
                for (std::size_t j = 0; j < 16; ++j) o += w[j] / z * v.values()[j * 6 + h * 2 + c];
                CHECK(std::abs(o - got.values()[i * 6 + h * 2 + c]) < 1e-12);
            }
        }
}

TEST_CASE("relative position index is centre-symmetric") {
    const Dims3 win{2, 3, 3};
    const auto idx = relative_position_index(win, win);
    const std::size_t t = win.volume();
    const std::size_t rows = relative_table_rows(win);
    CHECK(rows == 3 * 5 * 5);
    for (std::size_t i = 0; i < t; ++i) {
        CHECK(idx[i * t + i] == rows / 2);
        for (std::size_t j = 0; j < t; ++j) CHECK(idx[i * t + j] + idx[j * t + i] == rows - 1);
    }
    CHECK_THROWS_AS(relative_position_index(Dims3{4, 1, 1}, win), ConfigError);
}

TEST_CASE("dense bias mode reproduces the relative table it was expanded from") {
    Rng rng(23);
    const Dims3 dims{4, 4, 4}, base{2, 2, 2};
    const BiasParams rel = random_relative_bias(base, 2, rng);
    BiasParams dense;
    dense.mode = BiasMode::dense;
    dense.table_window = base;
    dense.table = gather_bias(rel, base, 2).detach();
    const Tensor q = oracle::random_tensor({64, 4}, rng);
    const Tensor k = oracle::random_tensor({64, 4}, rng);
    const Tensor v = oracle::random_tensor({64, 4}, rng);
    for (bool s : {false, true}) {
        WindowConfig cfg;
        cfg.window = base;
        if (s) cfg.shift = {1, 1, 1};
        CHECK(oracle::max_abs_diff(attend_windows(q, k, v, rel, 2, dims, cfg).values(),
                                   attend_windows(q, k, v, dense, 2, dims, cfg).values()) < 1e-14);
    }
}

TEST_CASE("encoder block preserves geometry and exports keys/values") {
    Rng rng(24);
    ParamStore store;
    AttentionSpec spec;
    spec.channels = 8;
    spec.heads = 2;
    spec.table_window = {2, 2, 2};
    const EncoderBlockParams p = init_encoder_block(store, "blk", spec, rng);
    const TokenGrid g{{2, 4, 4}, oracle::random_tensor({32, 8}, rng)};
    const EncoderBlockOutput out = vt_encoder_block(g, p, spec.table_window);
    CHECK(out.grid.dims == g.dims);
    CHECK(out.grid.tokens.shape() == g.tokens.shape());
    CHECK(out.regular_kv.keys.shape() == Shape{32, 8});
    CHECK(out.shifted_kv.values.shape() == Shape{32, 8});
    CHECK(store.contains("blk.regular.attn.rel_bias"));
    CHECK(store.contains("blk.shifted.mlp.fc2.bias"));
}

TEST_CASE("encoder block gradients agree with central differences") {
    Rng rng(25);
    ParamStore store;
    AttentionSpec spec;
    spec.channels = 4;
    spec.heads = 2;
    spec.table_window = {2, 2, 2};
    const EncoderBlockParams p = init_encoder_block(store, "blk", spec, rng);
    // Non-zero bias tables so their gradients are generic.
    for (auto& [name, t] : store.entries()) {
        if (name.find("rel_bias") != std::string::npos) {
            for (auto& x : t.mutable_values()) x = rng.uniform(-0.5, 0.5);
        }
    }
    const TokenGrid g{{2, 4, 4}, oracle::random_tensor({32, 4}, rng)};
    const Tensor w = oracle::random_tensor({32, 4}, rng);
    auto loss = [&] { return sum(mul(vt_encoder_block(g, p, spec.table_window).grid.tokens, w)); };
    GradTape tape;
    const Gradients grads = tape.backward(loss());
    for (auto& [name, leaf] : store.entries()) {
        const Tensor gt = grads.get(leaf);
        for (std::size_t i = 0; i < std::min<std::size_t>(leaf.numel(), 6); ++i) {
            const double n = finite_diff_at([&] { return loss().item(); }, leaf, i * 7 % leaf.numel(), 1e-5);
            INFO(name << "[" << i * 7 % leaf.numel() << "]");
            CHECK(relative_error(gt.values()[i * 7 % leaf.numel()], n) < 1e-6);
        }
    }
}

TEST_CASE("scaled_dot_attention rejects mismatched operands") {
    CHECK_THROWS_AS(scaled_dot_attention(Tensor::zeros({2, 3, 4}), Tensor::zeros({2, 3, 5}), Tensor::zeros({2, 3, 4}),
                                         Tensor(), Tensor()),
                    DimensionError);
}

TEST_CASE("the window oracle discriminates") {
    Rng rng(29);
    const Dims3 dims{4, 8, 8}, base{2, 4, 4};
    const std::size_t c = 4, heads = 2;
    WindowConfig cfg;
    cfg.window = base;
    cfg.shift = {1, 2, 2};
    const Tensor q = oracle::random_tensor({dims.volume(), c}, rng, -2, 2);
    const Tensor k = oracle::random_tensor({dims.volume(), c}, rng, -2, 2);
    const Tensor v = oracle::random_tensor({dims.volume(), c}, rng);
    const BiasParams bias = random_relative_bias(base, heads, rng);
    const Tensor got = attend_windows(q, k, v, bias, heads, dims, cfg);
    const auto regular = oracle::naive_window_attention(dims, base, {0, 0, 0}, base, heads, c, q.values(),
                                                        k.values(), v.values(), bias.table.values());
    CHECK(oracle::max_abs_diff(regular, got.values()) > 1e-2);
    std::vector<double> table(bias.table.values().begin(), bias.table.values().end());
    table[7] += 0.5;
    const auto perturbed = oracle::naive_window_attention(dims, base, cfg.shift, base, heads, c, q.values(),
                                                          k.values(), v.values(), table);
    CHECK(oracle::max_abs_diff(perturbed, got.values()) > 1e-4);
}
