#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vtunet/params.hpp"
#include "vtunet/windowing.hpp"

namespace vtunet {

/// How the additive positional bias B is parameterised.
enum class BiasMode {
    relative,  // [(2P-1)(2M-1)(2M-1), heads] table indexed by 3D offset
    dense,     // one [heads, T, T] matrix shared by all windows
};

/// Positional bias of one attention branch.
struct BiasParams {
    BiasMode mode = BiasMode::relative;
    Tensor table;
    Dims3 table_window;  // window the relative table was sized for
};

/// Projections of one windowed multi-head attention. Q/K/V carry no bias;
/// the output projection does.
struct MsaParams {
    Tensor w_q, w_k, w_v;  // [C, C]
    Tensor w_o, b_o;       // [C, C], [C]
    BiasParams bias;
    std::size_t heads = 1;
};

struct MlpParams {
    Tensor fc1_w, fc1_b;  // [C, rC], [rC]
    Tensor fc2_w, fc2_b;  // [rC, C], [C]
};

/// Pre-LN attention + pre-LN MLP, both with residuals.
struct SublayerParams {
    Tensor ln1_gamma, ln1_beta;
    MsaParams attn;
    Tensor ln2_gamma, ln2_beta;
    MlpParams mlp;
};

/// A regular-window sublayer followed by a shifted-window one.
struct EncoderBlockParams {
    SublayerParams regular, shifted;
};

/// Keys and values on the full token grid ([tau, C] each).
struct KeyValue {
    Tensor keys, values;
};

struct EncoderBlockOutput {
    TokenGrid grid;
    KeyValue regular_kv;  // captured by the regular-window sublayer
    KeyValue shifted_kv;  // captured by the shifted-window sublayer
};

struct AttentionSpec {
    std::size_t channels = 0;
    std::size_t heads = 1;
    std::size_t mlp_ratio = 4;
    Dims3 table_window{1, 1, 1};
    BiasMode bias_mode = BiasMode::relative;
    double ln_eps = 1e-5;
};

/// Relative-offset lookup: entry i*T+j is the table row for the offset
/// between slots i and j of `window`, using strides of `table_window`.
std::vector<std::size_t> relative_position_index(const Dims3& window, const Dims3& table_window);

std::size_t relative_table_rows(const Dims3& table_window);

/// [heads, T, T] bias for windows of the given extent.
Tensor gather_bias(const BiasParams& bias, const Dims3& window, std::size_t heads);

/// softmax(Q Kᵀ / sqrt(C_h) + B + mask) V over the last two axes, with C_h
/// the last extent of Q. B and mask broadcast against [..., T, T] and may be
/// undefined.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& bias,
                            const Tensor& mask);

/// Per-window multi-head attention of full-grid Q/K/V ([tau, C] each),
/// heads concatenated back onto the grid. For a shifted cfg the windows are
/// taken on the grid rolled by -shift with cross-region logits masked, and
/// the result is rolled back. No output projection.
Tensor attend_windows(const Tensor& q, const Tensor& k, const Tensor& v, const BiasParams& bias,
                      std::size_t heads, const Dims3& dims, const WindowConfig& cfg);

/// VT-W-MSA (cfg.shift == 0) or VT-SW-MSA on an already normalised grid.
/// When `kv` is given, receives the projected keys and values.
TokenGrid window_msa(const TokenGrid& grid, const MsaParams& params, const WindowConfig& cfg,
                     KeyValue* kv = nullptr);

Tensor mlp_forward(const Tensor& x, const MlpParams& params);

/// x + MSA(LN(x)), then y + MLP(LN(y)).
TokenGrid encoder_sublayer(const TokenGrid& grid, const SublayerParams& params, const WindowConfig& cfg,
                           double ln_eps, KeyValue* kv = nullptr);

/// Two sublayers: regular windows, then windows shifted by half. `base` is
/// the unclamped (P, M, M) window; both configs are clamped to the grid.
EncoderBlockOutput vt_encoder_block(const TokenGrid& grid, const EncoderBlockParams& params, const Dims3& base,
                                    double ln_eps = 1e-5);

MsaParams init_msa(ParamStore& store, const std::string& prefix, const AttentionSpec& spec, Rng& rng,
                   bool with_kv = true);
MlpParams init_mlp(ParamStore& store, const std::string& prefix, std::size_t channels, std::size_t hidden,
                   Rng& rng);
SublayerParams init_sublayer(ParamStore& store, const std::string& prefix, const AttentionSpec& spec, Rng& rng);
EncoderBlockParams init_encoder_block(ParamStore& store, const std::string& prefix, const AttentionSpec& spec,
                                      Rng& rng);

/// Window config for a grid: (P, M, M) optionally shifted, clamped to dims.
WindowConfig stage_window(const Dims3& base, const Dims3& dims, bool shifted);

}  // namespace vtunet
