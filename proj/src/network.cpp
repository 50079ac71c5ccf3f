#include "vtunet/network.hpp"

#include <cmath>
#include <memory>

#include "vtunet/error.hpp"
#include "vtunet/mac_counter.hpp"

namespace vtunet {

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (channels == 0) fail("channels must be positive");
    if (channels % 2 != 0) fail("channels must be even (patch expanding halves the width)");
    if (patch_depth == 0 || patch_size == 0) fail("patch extents must be positive");
    if (classes < 2) fail("classes must be at least 2");
    if (in_channels == 0) fail("in_channels must be positive");
    if (mlp_ratio == 0) fail("mlp_ratio must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must lie in [0, 1]");
    if (!(ln_eps > 0.0)) fail("ln_eps must be positive");
    if (fpe && channels < 6) fail("the positional encoding needs at least 6 channels");
    for (std::size_t s = 0; s < kStages; ++s) {
        if (depths[s] == 0 || depths[s] % 2 != 0) {
            fail("depth of stage " + std::to_string(s) + " must be a positive even number of sublayers");
        }
        if (heads[s] == 0 || stage_channels(s) % heads[s] != 0) {
            fail("stage " + std::to_string(s) + " width " + std::to_string(stage_channels(s)) +
                 " is not divisible by " + std::to_string(heads[s]) + " heads");
        }
    }
}

ModelConfig ModelConfig::small() {
    ModelConfig c;
    c.channels = 48;
    return c;
}

ModelConfig ModelConfig::base() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
    ModelConfig c;
    c.channels = 8;
    c.patch_depth = 2;
    c.patch_size = 2;
    c.classes = 3;
    c.in_channels = 2;
    c.heads = {2, 2, 4, 8};
    return c;
}

Tensor fpe3d(const Dims3& dims, std::size_t channels) {
    if (channels < 6) throw ConfigError("fpe3d needs at least 6 channels");
    const std::size_t g = 2 * (channels / 6);
    const std::array<std::size_t, 3> width{g, g, channels - 2 * g};
    std::vector<double> out(dims.volume() * channels);
    std::size_t row = 0;
    for (std::size_t z = 0; z < dims.d; ++z)
        for (std::size_t y = 0; y < dims.h; ++y)
            for (std::size_t x = 0; x < dims.w; ++x, ++row) {
                const std::array<double, 3> pos{static_cast<double>(z), static_cast<double>(y),
                                                static_cast<double>(x)};
                std::size_t c0 = 0;
                for (std::size_t a = 0; a < 3; ++a) {
                    const double gw = static_cast<double>(width[a]);
                    for (std::size_t j = 0; j < width[a]; ++j) {
                        const double i = static_cast<double>(j / 2);
                        const double freq = std::pow(10000.0, -2.0 * i / gw);
                        const double angle = pos[a] * freq;
                        out[row * channels + c0 + j] = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
                    }
                    c0 += width[a];
                }
            }
    return Tensor::from({dims.volume(), channels}, std::move(out));
}

TokenGrid fuse(const TokenGrid& z_c, const TokenGrid& z_s, double alpha, const FpeParams* fpe, double ln_eps) {
    if (!(z_c.dims == z_s.dims) || z_c.tokens.shape() != z_s.tokens.shape()) {
        throw DimensionError("fuse: branch geometries " + dims_str(z_c.dims) + shape_str(z_c.tokens.shape()) +
                             " and " + dims_str(z_s.dims) + shape_str(z_s.tokens.shape()) + " differ");
    }
    Tensor out = add(scale(z_c.tokens, alpha), scale(z_s.tokens, 1.0 - alpha));
    if (fpe != nullptr) {
        MacKindScope kind(MacKind::other);
        const Tensor positioned = add(z_s.tokens, fpe3d(z_s.dims, z_s.channels()));
        out = add(out, mlp_forward(layer_norm(positioned, fpe->ln_gamma, fpe->ln_beta, ln_eps), fpe->mlp));
    }
    return TokenGrid{z_s.dims, out};
}

TokenGrid linear_embedding(const TokenGrid& tokens, const Tensor& weight, const Tensor& bias) {
    MacKindScope kind(MacKind::other);
    return TokenGrid{tokens.dims, linear(tokens.tokens, weight, bias)};
}

TokenGrid patch_merging(const TokenGrid& grid, const Tensor& weight) {
    const Dims3& in = grid.dims;
    if (in.h % 2 != 0 || in.w % 2 != 0) {
        throw DimensionError("patch_merging needs even height and width, got grid " + dims_str(in));
    }
    const std::size_t c = grid.channels();
    const Dims3 out{in.d, in.h / 2, in.w / 2};
    auto index = std::make_shared<std::vector<std::size_t>>(out.volume() * 4 * c);
    std::size_t o = 0;
    for (std::size_t z = 0; z < out.d; ++z)
        for (std::size_t y = 0; y < out.h; ++y)
            for (std::size_t x = 0; x < out.w; ++x)
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t src = (z * in.h + 2 * y + dy) * in.w + 2 * x + dx;
                        for (std::size_t k = 0; k < c; ++k) (*index)[o++] = src * c + k;
                    }
    const Tensor stacked = gather(grid.tokens, {out.volume(), 4 * c}, std::move(index));
    MacKindScope kind(MacKind::other);
    return TokenGrid{out, linear(stacked, weight)};
}

TokenGrid patch_expanding(const TokenGrid& grid, const Tensor& weight, const Dims3& factors) {
    const std::size_t f = factors.volume();
    if (f == 0 || weight.rank() != 2 || weight.dim(0) != grid.channels() || weight.dim(1) % f != 0) {
        throw DimensionError("patch_expanding: weight " + shape_str(weight.shape()) + " inconsistent with " +
                             std::to_string(grid.channels()) + " channels and factors " + dims_str(factors));
    }
    const std::size_t cout = weight.dim(1) / f;
    Tensor up;
    {
        MacKindScope kind(MacKind::other);
        up = linear(grid.tokens, weight);
    }
    const Dims3& in = grid.dims;
    const Dims3 out{in.d * factors.d, in.h * factors.h, in.w * factors.w};
    const std::size_t width = f * cout;
    auto index = std::make_shared<std::vector<std::size_t>>(out.volume() * cout);
    for (std::size_t z = 0; z < out.d; ++z)
        for (std::size_t y = 0; y < out.h; ++y)
            for (std::size_t x = 0; x < out.w; ++x) {
                const std::size_t src_token = ((z / factors.d) * in.h + y / factors.h) * in.w + x / factors.w;
                const std::size_t sub = ((z % factors.d) * factors.h + y % factors.h) * factors.w + x % factors.w;
                const std::size_t dst = (z * out.h + y) * out.w + x;
                for (std::size_t k = 0; k < cout; ++k) (*index)[dst * cout + k] = src_token * width + sub * cout + k;
            }
    return TokenGrid{out, gather(up, {out.volume(), cout}, std::move(index))};
}

Tensor classifier_head(const TokenGrid& grid, const Tensor& weight, const Tensor& bias) {
    MacKindScope kind(MacKind::other);
    const Tensor logits = linear(grid.tokens, weight, bias);
    return reshape(logits, {grid.dims.d, grid.dims.h, grid.dims.w, weight.dim(1)});
}

TokenGrid decoder_sublayer(const TokenGrid& grid, const KeyValue& enc, const DecoderSublayerParams& p,
                           const WindowConfig& cfg, const FusionSettings& fusion) {
    const std::size_t c = grid.channels();
    const Shape expect{grid.size(), c};
    if (enc.keys.shape() != expect || enc.values.shape() != expect) {
        throw DimensionError("decoder grid " + dims_str(grid.dims) + " with " + std::to_string(c) +
                             " channels does not match encoder keys " + shape_str(enc.keys.shape()) + " / values " +
                             shape_str(enc.values.shape()));
    }
    validate_windowing(grid.dims, cfg);
    if (auto* counter = MacCounter::active()) {
        counter->note_attention({grid.size(), c, count_windows(grid.dims, cfg, WindowCountMode::regular),
                                 cfg.tokens_per_window(), 2});
    }
    const Tensor normed = layer_norm(grid.tokens, p.ln1_gamma, p.ln1_beta, fusion.ln_eps);
    Tensor q, k, v;
    {
        MacKindScope kind(MacKind::qkv_projection);
        q = linear(normed, p.w_q);
        k = linear(normed, p.self_branch.w_k);
        v = linear(normed, p.self_branch.w_v);
    }
    const Tensor self_att = attend_windows(q, k, v, p.self_branch.bias, p.heads, grid.dims, cfg);
    const Tensor cross_att = attend_windows(q, enc.keys, enc.values, p.cross_branch.bias, p.heads, grid.dims, cfg);
    Tensor z_s, z_c;
    {
        MacKindScope kind(MacKind::out_projection);
        z_s = linear(self_att, p.self_branch.w_o, p.self_branch.b_o);
        z_c = linear(cross_att, p.cross_branch.w_o, p.cross_branch.b_o);
    }
    const TokenGrid fused = fuse(TokenGrid{grid.dims, z_c}, TokenGrid{grid.dims, z_s}, fusion.alpha,
                                 fusion.fpe ? &p.fpe : nullptr, fusion.ln_eps);
    const Tensor mid = add(grid.tokens, fused.tokens);
    const Tensor out = add(mlp_forward(layer_norm(mid, p.ln2_gamma, p.ln2_beta, fusion.ln_eps), p.mlp), mid);
    return TokenGrid{grid.dims, out};
}

TokenGrid vt_decoder_block(const TokenGrid& grid, const KeyValue& enc_regular, const KeyValue& enc_shifted,
                           const DecoderBlockParams& params, const Dims3& base, const FusionSettings& fusion) {
    const TokenGrid mid =
        decoder_sublayer(grid, enc_regular, params.regular, stage_window(base, grid.dims, false), fusion);
    return decoder_sublayer(mid, enc_shifted, params.shifted, stage_window(base, grid.dims, true), fusion);
}

namespace {

BranchParams init_branch(ParamStore& store, const std::string& prefix, const AttentionSpec& spec, Rng& rng,
                         bool with_kv) {
    const std::size_t c = spec.channels;
    const double bound = 1.0 / std::sqrt(static_cast<double>(c));
    BranchParams b;
    if (with_kv) {
        b.w_k = store.add_uniform(prefix + ".w_k", {c, c}, bound, rng);
        b.w_v = store.add_uniform(prefix + ".w_v", {c, c}, bound, rng);
    }
    b.w_o = store.add_uniform(prefix + ".w_o", {c, c}, bound, rng);
    b.b_o = store.add_uniform(prefix + ".b_o", {c}, bound, rng);
    b.bias.mode = spec.bias_mode;
    b.bias.table_window = spec.table_window;
    if (spec.bias_mode == BiasMode::relative) {
        b.bias.table = store.add_constant(prefix + ".rel_bias", {relative_table_rows(spec.table_window), spec.heads}, 0.0);
    } else {
        const std::size_t t = spec.table_window.volume();
        b.bias.table = store.add_constant(prefix + ".dense_bias", {spec.heads, t, t}, 0.0);
    }
    return b;
}

DecoderSublayerParams init_decoder_sublayer(ParamStore& store, const std::string& prefix, const AttentionSpec& spec,
                                            Rng& rng) {
    const std::size_t c = spec.channels;
    if (spec.heads == 0 || c % spec.heads != 0) {
        throw ConfigError(prefix + ": channels " + std::to_string(c) + " not divisible by heads " +
                          std::to_string(spec.heads));
    }
    DecoderSublayerParams p;
    p.heads = spec.heads;
    p.ln1_gamma = store.add_constant(prefix + ".ln1.gamma", {c}, 1.0);
    p.ln1_beta = store.add_constant(prefix + ".ln1.beta", {c}, 0.0);
    p.w_q = store.add_uniform(prefix + ".w_q", {c, c}, 1.0 / std::sqrt(static_cast<double>(c)), rng);
    p.self_branch = init_branch(store, prefix + ".self", spec, rng, true);
    p.cross_branch = init_branch(store, prefix + ".cross", spec, rng, false);
    p.fpe.ln_gamma = store.add_constant(prefix + ".fpe.ln.gamma", {c}, 1.0);
    p.fpe.ln_beta = store.add_constant(prefix + ".fpe.ln.beta", {c}, 0.0);
    p.fpe.mlp = init_mlp(store, prefix + ".fpe.mlp", c, c, rng);
    p.ln2_gamma = store.add_constant(prefix + ".ln2.gamma", {c}, 1.0);
    p.ln2_beta = store.add_constant(prefix + ".ln2.beta", {c}, 0.0);
    p.mlp = init_mlp(store, prefix + ".mlp", c, c * spec.mlp_ratio, rng);
    return p;
}

}  // namespace

DecoderBlockParams init_decoder_block(ParamStore& store, const std::string& prefix, const AttentionSpec& spec,
                                      Rng& rng) {
    DecoderBlockParams p;
    p.regular = init_decoder_sublayer(store, prefix + ".regular", spec, rng);
    p.shifted = init_decoder_sublayer(store, prefix + ".shifted", spec, rng);
    return p;
}

Dims3 stage_dims(const ModelConfig& config, const Dims3& volume, std::size_t stage) {
    const std::size_t down = config.patch_size << stage;
    return {volume.d / config.patch_depth, volume.h / down, volume.w / down};
}

VTUNet::VTUNet(const ModelConfig& config, std::uint64_t seed) : config_(config), seed_(seed) {
    config_.validate();
    Rng rng(seed);
    const std::size_t c = config_.channels;
    const Dims3 base = config_.window();
    const std::size_t patch_width = base.volume() * config_.in_channels;

    embed_w_ = store_.add_uniform("embed.weight", {patch_width, c}, 1.0 / std::sqrt(static_cast<double>(patch_width)),
                                  rng);
    embed_b_ = store_.add_uniform("embed.bias", {c}, 1.0 / std::sqrt(static_cast<double>(patch_width)), rng);

    auto spec_for = [&](std::size_t s) {
        AttentionSpec spec;
        spec.channels = config_.stage_channels(s);
        spec.heads = config_.heads[s];
        spec.mlp_ratio = config_.mlp_ratio;
        spec.table_window = base;
        spec.bias_mode = config_.bias_mode;
        spec.ln_eps = config_.ln_eps;
        return spec;
    };

    for (std::size_t s = 0; s < 3; ++s) {
        const auto spec = spec_for(s);
        const std::string prefix = "enc." + std::to_string(s);
        for (std::size_t b = 0; b < config_.depths[s] / 2; ++b) {
            encoder_[s].blocks.push_back(init_encoder_block(store_, prefix + ".blk." + std::to_string(b), spec, rng));
        }
        const std::size_t cs = spec.channels;
        encoder_[s].merge = store_.add_uniform(prefix + ".merge.weight", {4 * cs, 2 * cs},
                                               1.0 / std::sqrt(static_cast<double>(4 * cs)), rng);
    }
    {
        const auto spec = spec_for(3);
        for (std::size_t b = 0; b < config_.depths[3] / 2; ++b) {
            bottleneck_.push_back(init_encoder_block(store_, "bottleneck.blk." + std::to_string(b), spec, rng));
        }
        const std::size_t cs = spec.channels;
        bottleneck_expand_ = store_.add_uniform("bottleneck.expand.weight", {cs, 2 * cs},
                                                1.0 / std::sqrt(static_cast<double>(cs)), rng);
    }
    for (std::size_t s = 3; s-- > 0;) {
        const auto spec = spec_for(s);
        const std::string prefix = "dec." + std::to_string(s);
        for (std::size_t b = 0; b < config_.depths[s] / 2; ++b) {
            decoder_[s].blocks.push_back(init_decoder_block(store_, prefix + ".blk." + std::to_string(b), spec, rng));
        }
        const std::size_t cs = spec.channels;
        const std::size_t out_width = s == 0 ? base.volume() * cs : 2 * cs;
        decoder_[s].expand = store_.add_uniform(prefix + ".expand.weight", {cs, out_width},
                                                1.0 / std::sqrt(static_cast<double>(cs)), rng);
    }
    head_w_ = store_.add_uniform("head.weight", {c, config_.classes}, 1.0 / std::sqrt(static_cast<double>(c)), rng);
    head_b_ = store_.add_uniform("head.bias", {config_.classes}, 1.0 / std::sqrt(static_cast<double>(c)), rng);
}

void VTUNet::validate_input(const Shape& shape) const {
    if (shape.size() != 4) throw DimensionError("input must be [D, H, W, C], got " + shape_str(shape));
    if (shape[3] != config_.in_channels) {
        throw DimensionError("input " + shape_str(shape) + " has " + std::to_string(shape[3]) +
                             " channels, model expects " + std::to_string(config_.in_channels));
    }
    const Dims3 vol{shape[0], shape[1], shape[2]};
    const std::size_t hw_div = config_.patch_size << 3;
    if (vol.d % config_.patch_depth != 0) {
        throw ConfigError("input depth " + std::to_string(vol.d) + " is not divisible by P = " +
                          std::to_string(config_.patch_depth));
    }
    if (vol.h % hw_div != 0 || vol.w % hw_div != 0) {
        throw ConfigError("input height/width " + std::to_string(vol.h) + "x" + std::to_string(vol.w) +
                          " must be divisible by 8M = " + std::to_string(hw_div));
    }
    const Dims3 base = config_.window();
    for (std::size_t s = 0; s < kStages; ++s) {
        const Dims3 dims = stage_dims(config_, vol, s);
        validate_windowing(dims, stage_window(base, dims, false));
        validate_windowing(dims, stage_window(base, dims, true));
    }
}

Tensor VTUNet::forward(const Tensor& volume, std::vector<StageTrace>* trace) const {
    validate_input(volume.shape());
    const Dims3 base = config_.window();
    const FusionSettings fusion{config_.alpha, config_.fpe, config_.ln_eps};
    auto note = [&](const std::string& name, const TokenGrid& g) {
        if (trace != nullptr) trace->push_back({name, g.dims, g.channels()});
    };

    TokenGrid grid;
    {
        MacSectionScope section("embed");
        grid = linear_embedding(patch_partition(volume, config_.patch_depth, config_.patch_size), embed_w_, embed_b_);
    }
    note("embed", grid);

    std::array<std::pair<KeyValue, KeyValue>, 3> skips;
    for (std::size_t s = 0; s < 3; ++s) {
        const auto& stage = encoder_[s];
        for (std::size_t b = 0; b < stage.blocks.size(); ++b) {
            const std::string name = "enc." + std::to_string(s) + ".blk." + std::to_string(b);
            EncoderBlockOutput out;
            {
                MacSectionScope r(name + ".regular");
                out.grid = encoder_sublayer(grid, stage.blocks[b].regular, stage_window(base, grid.dims, false),
                                            config_.ln_eps, &out.regular_kv);
            }
            {
                MacSectionScope sh(name + ".shifted");
                out.grid = encoder_sublayer(out.grid, stage.blocks[b].shifted, stage_window(base, grid.dims, true),
                                            config_.ln_eps, &out.shifted_kv);
            }
            grid = out.grid;
            skips[s] = {out.regular_kv, out.shifted_kv};
        }
        note("enc." + std::to_string(s), grid);
        MacSectionScope section("enc." + std::to_string(s) + ".merge");
        grid = patch_merging(grid, stage.merge);
    }

    for (std::size_t b = 0; b < bottleneck_.size(); ++b) {
        const std::string name = "bottleneck.blk." + std::to_string(b);
        {
            MacSectionScope r(name + ".regular");
            grid = encoder_sublayer(grid, bottleneck_[b].regular, stage_window(base, grid.dims, false), config_.ln_eps);
        }
        MacSectionScope sh(name + ".shifted");
        grid = encoder_sublayer(grid, bottleneck_[b].shifted, stage_window(base, grid.dims, true), config_.ln_eps);
    }
    note("bottleneck", grid);
    {
        MacSectionScope section("bottleneck.expand");
        grid = patch_expanding(grid, bottleneck_expand_, {1, 2, 2});
    }

    for (std::size_t s = 3; s-- > 0;) {
        const auto& stage = decoder_[s];
        for (std::size_t b = 0; b < stage.blocks.size(); ++b) {
            const std::string name = "dec." + std::to_string(s) + ".blk." + std::to_string(b);
            {
                MacSectionScope r(name + ".regular");
                grid = decoder_sublayer(grid, skips[s].first, stage.blocks[b].regular,
                                        stage_window(base, grid.dims, false), fusion);
            }
            MacSectionScope sh(name + ".shifted");
            grid = decoder_sublayer(grid, skips[s].second, stage.blocks[b].shifted, stage_window(base, grid.dims, true),
                                    fusion);
        }
        note("dec." + std::to_string(s), grid);
        MacSectionScope section("dec." + std::to_string(s) + ".expand");
        grid = patch_expanding(grid, stage.expand, s == 0 ? base : Dims3{1, 2, 2});
    }
    note("full_resolution", grid);
    MacSectionScope section("head");
    return classifier_head(grid, head_w_, head_b_);
}

}  // namespace vtunet
