#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vtunet/attention.hpp"
#include "vtunet/params.hpp"
#include "vtunet/windowing.hpp"

namespace vtunet {

inline constexpr std::size_t kStages = 4;

/// Architecture hyperparameters. Stage s runs at width C * 2^s; stage 3 is
/// the bottleneck at 8C.
struct ModelConfig {
    std::size_t channels = 72;     // C
    std::size_t patch_depth = 4;   // P
    std::size_t patch_size = 4;    // M
    std::size_t classes = 4;       // K
    std::size_t in_channels = 4;
    // Attention sublayers per stage; each pair is one regular + shifted block.
    std::array<std::size_t, kStages> depths{2, 2, 2, 2};
    std::array<std::size_t, kStages> heads{3, 6, 12, 24};
    std::size_t mlp_ratio = 4;
    double alpha = 0.5;
    bool fpe = true;
    double ln_eps = 1e-5;
    BiasMode bias_mode = BiasMode::relative;

    std::size_t stage_channels(std::size_t s) const { return channels << s; }
    Dims3 window() const { return {patch_depth, patch_size, patch_size}; }

    /// Throws ConfigError on inconsistent fields.
    void validate() const;

    static ModelConfig small();  // C = 48
    static ModelConfig base();   // C = 72
    /// C = 8, P = M = 2, two input channels, three classes.
    static ModelConfig tiny();
};

// ---------------------------------------------------------------------------
// Layers

/// Sine/cosine lattice encoding, [d*h*w, C]. Channels are split into three
/// groups for the depth, height and width coordinates; inside a group,
/// channel 2i holds sin(p * f_i) and 2i+1 holds cos(p * f_i) with
/// f_i = 10000^(-2i / group_width).
Tensor fpe3d(const Dims3& dims, std::size_t channels);

struct FpeParams {
    Tensor ln_gamma, ln_beta;
    MlpParams mlp;
};

/// alpha * z_c + (1 - alpha) * z_s, plus MLP(LN(z_s + fpe)) when `fpe` is
/// non-null.
TokenGrid fuse(const TokenGrid& z_c, const TokenGrid& z_s, double alpha, const FpeParams* fpe, double ln_eps = 1e-5);

TokenGrid linear_embedding(const TokenGrid& tokens, const Tensor& weight, const Tensor& bias);

/// Concatenates each 2x2 in-plane neighbourhood (4C) and projects to 2C.
TokenGrid patch_merging(const TokenGrid& grid, const Tensor& weight);

/// Projects C -> fd*fh*fw*C_out and spreads the result over an
/// (fd, fh, fw) block of new tokens of width C_out.
TokenGrid patch_expanding(const TokenGrid& grid, const Tensor& weight, const Dims3& factors);

/// Per-voxel affine map to K logits: [D*H*W, C] -> [D, H, W, K].
Tensor classifier_head(const TokenGrid& grid, const Tensor& weight, const Tensor& bias);

/// One attention branch of a decoder sublayer. The cross branch has no
/// key/value projections of its own: it consumes the encoder's.
struct BranchParams {
    Tensor w_k, w_v;
    Tensor w_o, b_o;
    BiasParams bias;
};

struct DecoderSublayerParams {
    Tensor ln1_gamma, ln1_beta;
    Tensor w_q;  // shared by both branches
    BranchParams self_branch, cross_branch;
    FpeParams fpe;
    Tensor ln2_gamma, ln2_beta;
    MlpParams mlp;
    std::size_t heads = 1;
};

struct DecoderBlockParams {
    DecoderSublayerParams regular, shifted;
};

struct FusionSettings {
    double alpha = 0.5;
    bool fpe = true;
    double ln_eps = 1e-5;
};

/// Self branch on the decoder stream, cross branch on encoder keys/values,
/// both from one query projection, fused, then the MLP with residual.
TokenGrid decoder_sublayer(const TokenGrid& grid, const KeyValue& encoder_kv, const DecoderSublayerParams& params,
                           const WindowConfig& cfg, const FusionSettings& fusion);

/// Regular sublayer consumes the encoder's regular-window keys/values and
/// the shifted sublayer the shifted ones.
TokenGrid vt_decoder_block(const TokenGrid& grid, const KeyValue& encoder_regular, const KeyValue& encoder_shifted,
                           const DecoderBlockParams& params, const Dims3& base, const FusionSettings& fusion);

DecoderBlockParams init_decoder_block(ParamStore& store, const std::string& prefix, const AttentionSpec& spec,
                                      Rng& rng);

// ---------------------------------------------------------------------------
// Model

/// Geometry observed at each stage boundary during a forward pass.
struct StageTrace {
    std::string name;
    Dims3 dims;
    std::size_t channels = 0;
};

class VTUNet {
public:
    /// Seeded initialisation.
    VTUNet(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    const ParamStore& params() const { return store_; }
    ParamStore& params() { return store_; }
    std::uint64_t seed() const { return seed_; }

    /// Throws before any compute when the volume cannot flow through every
    /// stage.
    void validate_input(const Shape& volume_shape) const;

    /// [D, H, W, Cin] -> [D, H, W, K] logits.
    Tensor forward(const Tensor& volume, std::vector<StageTrace>* trace = nullptr) const;

private:
    struct EncoderStage {
        std::vector<EncoderBlockParams> blocks;
        Tensor merge;
    };
    struct DecoderStage {
        std::vector<DecoderBlockParams> blocks;
        Tensor expand;
    };

    ModelConfig config_;
    std::uint64_t seed_;
    ParamStore store_;
    Tensor embed_w_, embed_b_;
    std::array<EncoderStage, 3> encoder_;
    std::vector<EncoderBlockParams> bottleneck_;
    Tensor bottleneck_expand_;
    std::array<DecoderStage, 3> decoder_;
    Tensor head_w_, head_b_;
};

/// Token-grid extents of stage s for an input of the given spatial size.
Dims3 stage_dims(const ModelConfig& config, const Dims3& volume, std::size_t stage);

}  // namespace vtunet
