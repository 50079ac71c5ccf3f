#include "vtunet/attention.hpp"

#include <cmath>
#include <memory>

#include "vtunet/error.hpp"
#include "vtunet/mac_counter.hpp"

namespace vtunet {

std::size_t relative_table_rows(const Dims3& tw) { return (2 * tw.d - 1) * (2 * tw.h - 1) * (2 * tw.w - 1); }

std::vector<std::size_t> relative_position_index(const Dims3& window, const Dims3& tw) {
    for (std::size_t a = 0; a < 3; ++a) {
        if (window[a] > tw[a]) {
            throw ConfigError("window " + dims_str(window) + " exceeds bias table window " + dims_str(tw));
        }
    }
    const std::size_t t = window.volume();
    std::vector<std::size_t> pos(t * 3);
    std::size_t s = 0;
    for (std::size_t z = 0; z < window.d; ++z)
        for (std::size_t y = 0; y < window.h; ++y)
            for (std::size_t x = 0; x < window.w; ++x, ++s) {
                pos[s * 3] = z;
                pos[s * 3 + 1] = y;
                pos[s * 3 + 2] = x;
            }
    std::vector<std::size_t> index(t * t);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < t; ++j) {
            const std::size_t dz = pos[i * 3] + tw.d - 1 - pos[j * 3];
            const std::size_t dy = pos[i * 3 + 1] + tw.h - 1 - pos[j * 3 + 1];
            const std::size_t dx = pos[i * 3 + 2] + tw.w - 1 - pos[j * 3 + 2];
            index[i * t + j] = (dz * (2 * tw.h - 1) + dy) * (2 * tw.w - 1) + dx;
        }
    return index;
}

Tensor gather_bias(const BiasParams& bias, const Dims3& window, std::size_t heads) {
    const std::size_t t = window.volume();
    if (bias.mode == BiasMode::dense) {
        const Dims3& tw = bias.table_window;
        const std::size_t tf = tw.volume();
        if (bias.table.shape() != Shape{heads, tf, tf}) {
            throw DimensionError("dense bias " + shape_str(bias.table.shape()) + " does not match window " +
                                 dims_str(tw) + " with " + std::to_string(heads) + " heads");
        }
        if (window == tw) return bias.table;
        // Clamped window: slot (z, y, x) reads the same slot of the full window.
        if (window.d > tw.d || window.h > tw.h || window.w > tw.w) {
            throw ConfigError("window " + dims_str(window) + " exceeds bias table window " + dims_str(tw));
        }
        std::vector<std::size_t> slot;
        slot.reserve(t);
        for (std::size_t z = 0; z < window.d; ++z)
            for (std::size_t y = 0; y < window.h; ++y)
                for (std::size_t x = 0; x < window.w; ++x) slot.push_back((z * tw.h + y) * tw.w + x);
        auto index = std::make_shared<std::vector<std::size_t>>(heads * t * t);
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < t; ++i)
                for (std::size_t j = 0; j < t; ++j) (*index)[(h * t + i) * t + j] = (h * tf + slot[i]) * tf + slot[j];
        return gather(bias.table, {heads, t, t}, std::move(index));
    }
    if (bias.table.shape() != Shape{relative_table_rows(bias.table_window), heads}) {
        throw DimensionError("relative bias table " + shape_str(bias.table.shape()) + " does not match window " +
                             dims_str(bias.table_window) + " with " + std::to_string(heads) + " heads");
    }
    const auto rel = relative_position_index(window, bias.table_window);
    auto index = std::make_shared<std::vector<std::size_t>>(heads * t * t);
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t ij = 0; ij < t * t; ++ij) (*index)[h * t * t + ij] = rel[ij] * heads + h;
    return gather(bias.table, {heads, t, t}, std::move(index));
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& bias,
                            const Tensor& mask) {
    if (q.rank() < 2 || k.rank() != q.rank() || v.rank() != q.rank() || q.shape().back() != k.shape().back() ||
        k.shape()[k.rank() - 2] != v.shape()[v.rank() - 2]) {
        throw DimensionError("attention: query " + shape_str(q.shape()) + ", key " + shape_str(k.shape()) +
                             ", value " + shape_str(v.shape()));
    }
    MacKindScope kind(MacKind::attention);
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(q.shape().back()));
    Tensor logits = scale(matmul_bt(q, k), inv_scale);
    if (bias.defined()) logits = add(logits, bias);
    if (mask.defined()) logits = add(logits, mask);
    return matmul(softmax_last(logits), v);
}

Tensor attend_windows(const Tensor& q, const Tensor& k, const Tensor& v, const BiasParams& bias,
                      std::size_t heads, const Dims3& dims, const WindowConfig& cfg) {
    const std::size_t c = q.dim(1);
    if (q.shape() != Shape{dims.volume(), c} || k.shape() != q.shape() || v.shape() != q.shape()) {
        throw DimensionError("attend_windows: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
                             shape_str(v.shape()) + " on grid " + dims_str(dims));
    }
    const auto order = window_token_order(dims, cfg);
    const std::size_t t = cfg.tokens_per_window();
    const std::size_t windows = order.size() / t;
    const Shape split{windows, heads, t, c / heads};
    const auto fwd = heads_window_index(order, t, c, heads);
    const Tensor qw = gather(q, split, fwd);
    const Tensor kw = gather(k, split, fwd);
    const Tensor vw = gather(v, split, fwd);
    const Tensor b = gather_bias(bias, cfg.window, heads);
    Tensor mask;
    if (cfg.shifted()) mask = reshape(build_shift_mask(dims, cfg), {windows, 1, t, t});
    const Tensor out = scaled_dot_attention(qw, kw, vw, b, mask);
    return gather(out, {dims.volume(), c}, heads_window_inverse_index(order, t, c, heads));
}

TokenGrid window_msa(const TokenGrid& grid, const MsaParams& p, const WindowConfig& cfg, KeyValue* kv) {
    const std::size_t c = grid.channels();
    if (p.w_q.shape() != Shape{c, c}) {
        throw DimensionError("window_msa: grid has " + std::to_string(c) + " channels, projections are " +
                             shape_str(p.w_q.shape()));
    }
    validate_windowing(grid.dims, cfg);
    if (auto* counter = MacCounter::active()) {
        counter->note_attention({grid.size(), c, count_windows(grid.dims, cfg, WindowCountMode::regular),
                                 cfg.tokens_per_window(), 1});
    }
    Tensor q, k, v;
    {
        MacKindScope kind(MacKind::qkv_projection);
        q = linear(grid.tokens, p.w_q);
        k = linear(grid.tokens, p.w_k);
        v = linear(grid.tokens, p.w_v);
    }
    if (kv != nullptr) *kv = KeyValue{k, v};
    const Tensor attended = attend_windows(q, k, v, p.bias, p.heads, grid.dims, cfg);
    MacKindScope kind(MacKind::out_projection);
    return TokenGrid{grid.dims, linear(attended, p.w_o, p.b_o)};
}

Tensor mlp_forward(const Tensor& x, const MlpParams& p) {
    MacKindScope kind(MacKind::mlp);
    return linear(gelu(linear(x, p.fc1_w, p.fc1_b)), p.fc2_w, p.fc2_b);
}

TokenGrid encoder_sublayer(const TokenGrid& grid, const SublayerParams& p, const WindowConfig& cfg, double ln_eps,
                           KeyValue* kv) {
    const TokenGrid normed{grid.dims, layer_norm(grid.tokens, p.ln1_gamma, p.ln1_beta, ln_eps)};
    const Tensor mid = add(window_msa(normed, p.attn, cfg, kv).tokens, grid.tokens);
    const Tensor out = add(mlp_forward(layer_norm(mid, p.ln2_gamma, p.ln2_beta, ln_eps), p.mlp), mid);
    return TokenGrid{grid.dims, out};
}

WindowConfig stage_window(const Dims3& base, const Dims3& dims, bool shifted) {
    WindowConfig cfg;
    cfg.window = base;
    if (shifted) cfg.shift = {base.d / 2, base.h / 2, base.w / 2};
    return clamp_to_grid(cfg, dims);
}

EncoderBlockOutput vt_encoder_block(const TokenGrid& grid, const EncoderBlockParams& params, const Dims3& base,
                                    double ln_eps) {
    EncoderBlockOutput out;
    const TokenGrid mid = encoder_sublayer(grid, params.regular, stage_window(base, grid.dims, false), ln_eps,
                                           &out.regular_kv);
    out.grid = encoder_sublayer(mid, params.shifted, stage_window(base, grid.dims, true), ln_eps, &out.shifted_kv);
    return out;
}

MsaParams init_msa(ParamStore& store, const std::string& prefix, const AttentionSpec& spec, Rng& rng,
                   bool with_kv) {
    const std::size_t c = spec.channels;
    if (spec.heads == 0 || c % spec.heads != 0) {
        throw ConfigError(prefix + ": channels " + std::to_string(c) + " not divisible by heads " +
                          std::to_string(spec.heads));
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(c));
    MsaParams p;
    p.heads = spec.heads;
    p.w_q = store.add_uniform(prefix + ".w_q", {c, c}, bound, rng);
    if (with_kv) {
        p.w_k = store.add_uniform(prefix + ".w_k", {c, c}, bound, rng);
        p.w_v = store.add_uniform(prefix + ".w_v", {c, c}, bound, rng);
    }
    p.w_o = store.add_uniform(prefix + ".w_o", {c, c}, bound, rng);
    p.b_o = store.add_uniform(prefix + ".b_o", {c}, bound, rng);
    p.bias.mode = spec.bias_mode;
    p.bias.table_window = spec.table_window;
    if (spec.bias_mode == BiasMode::relative) {
        p.bias.table = store.add_constant(prefix + ".rel_bias", {relative_table_rows(spec.table_window), spec.heads}, 0.0);
    } else {
        const std::size_t t = spec.table_window.volume();
        p.bias.table = store.add_constant(prefix + ".dense_bias", {spec.heads, t, t}, 0.0);
    }
    return p;
}

MlpParams init_mlp(ParamStore& store, const std::string& prefix, std::size_t channels, std::size_t hidden,
                   Rng& rng) {
    MlpParams p;
    p.fc1_w = store.add_uniform(prefix + ".fc1.weight", {channels, hidden},
                                1.0 / std::sqrt(static_cast<double>(channels)), rng);
    p.fc1_b = store.add_uniform(prefix + ".fc1.bias", {hidden}, 1.0 / std::sqrt(static_cast<double>(channels)), rng);
    p.fc2_w = store.add_uniform(prefix + ".fc2.weight", {hidden, channels}, 1.0 / std::sqrt(static_cast<double>(hidden)),
                                rng);
    p.fc2_b = store.add_uniform(prefix + ".fc2.bias", {channels}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    return p;
}

SublayerParams init_sublayer(ParamStore& store, const std::string& prefix, const AttentionSpec& spec, Rng& rng) {
    const std::size_t c = spec.channels;
    SublayerParams p;
    p.ln1_gamma = store.add_constant(prefix + ".ln1.gamma", {c}, 1.0);
    p.ln1_beta = store.add_constant(prefix + ".ln1.beta", {c}, 0.0);
    p.attn = init_msa(store, prefix + ".attn", spec, rng);
    p.ln2_gamma = store.add_constant(prefix + ".ln2.gamma", {c}, 1.0);
    p.ln2_beta = store.add_constant(prefix + ".ln2.beta", {c}, 0.0);
    p.mlp = init_mlp(store, prefix + ".mlp", c, c * spec.mlp_ratio, rng);
    return p;
}

EncoderBlockParams init_encoder_block(ParamStore& store, const std::string& prefix, const AttentionSpec& spec,
                                      Rng& rng) {
    EncoderBlockParams p;
    p.regular = init_sublayer(store, prefix + ".regular", spec, rng);
    p.shifted = init_sublayer(store, prefix + ".shifted", spec, rng);
    return p;
}

}  // namespace vtunet
