#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vtunet/network.hpp"

namespace vtunet {

/// 3τC² + 2τ²C: Q/K/V projections plus QKᵀ and AV over one global window.
std::uint64_t sa_flops_global(std::uint64_t tau, std::uint64_t channels);

/// 3τC² + 2κT²C with κ = τ/T. Throws ConfigError unless T divides τ.
std::uint64_t sa_flops_windowed(std::uint64_t tau, std::uint64_t channels, std::uint64_t window_tokens);

/// The windowed expression as printed, 3τC² + 2τκC. Kept only for side-by-side
/// reporting; it does not match the counted cost.
std::uint64_t sa_flops_windowed_literal(std::uint64_t tau, std::uint64_t channels, std::uint64_t window_tokens);

struct ParamGroup {
    std::string name;  // "embed", "enc.0", ..., "bottleneck", "dec.0", ..., "head"
    std::size_t count = 0;
};

struct ParamReport {
    std::vector<std::pair<std::string, std::size_t>> tensors;
    std::vector<ParamGroup> groups;
    std::size_t total = 0;
};

ParamReport count_params(const ParamStore& store);
ParamReport count_params(const ModelConfig& config);

/// One row of the FLOPs report. Attention rows carry τ, C, κ, T; rows for
/// embedding/merge/expand/head only carry other_macs.
struct FlopsRecord {
    std::string layer;
    bool attention = false;
    std::uint64_t tau = 0, channels = 0, windows = 0, window_tokens = 0, branches = 0;
    std::uint64_t proj_macs = 0;      // Q/K/V projections
    std::uint64_t attn_macs = 0;      // QKᵀ and AV, all branches
    std::uint64_t out_proj_macs = 0;  // W_O, all branches
    std::uint64_t mlp_macs = 0;
    std::uint64_t other_macs = 0;
    /// 3τC² + branches·2κT²C, the instrumented projection+attention should equal it.
    std::uint64_t closed_form_macs = 0;
    /// 3τC² + branches·2τκC.
    std::uint64_t literal_macs = 0;

    std::uint64_t total() const { return proj_macs + attn_macs + out_proj_macs + mlp_macs + other_macs; }
};

/// Quadratic global term 2τ²C on either side of a patch merge, at the
/// pre-merge width and (separately) with the doubled post-merge width.
struct MergeRatio {
    std::string layer;
    std::uint64_t tau_before = 0, tau_after = 0, c_before = 0, c_after = 0;
    std::uint64_t quad_before = 0;
    std::uint64_t quad_after_same_c = 0;
    std::uint64_t quad_after_doubled_c = 0;
};

struct FlopsReport {
    std::vector<FlopsRecord> records;
    std::vector<MergeRatio> merges;
    std::uint64_t total() const;
};

/// Runs the forward pass in dry-run counting mode over a zero volume.
FlopsReport count_flops_instrumented(const ModelConfig& config, const Dims3& volume);

/// Counts one standalone attention sublayer (projections, attention, W_O)
/// on a `dims` grid; a window equal to dims gives global attention.
FlopsRecord count_attention_layer(const Dims3& dims, std::size_t channels, std::size_t heads,
                                  const WindowConfig& cfg);

/// "1/16" style reduced fraction.
std::string ratio_str(std::uint64_t num, std::uint64_t den);

std::string flops_csv(const FlopsReport& report);
std::string merges_csv(const FlopsReport& report);
std::string params_csv(const ParamReport& report);
std::string flops_table(const FlopsReport& report);

}  // namespace vtunet
