#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vtunet/ops.hpp"
#include "vtunet/tensor.hpp"

namespace vtunet {

/// Extents along (depth, height, width).
struct Dims3 {
    std::size_t d = 1, h = 1, w = 1;

    std::size_t operator[](std::size_t axis) const { return axis == 0 ? d : axis == 1 ? h : w; }
    std::size_t& operator[](std::size_t axis) { return axis == 0 ? d : axis == 1 ? h : w; }
    std::size_t volume() const { return d * h * w; }
    bool operator==(const Dims3&) const = default;
};

std::string dims_str(const Dims3& d);

/// A (d, h, w) lattice of C-channel tokens stored as [d*h*w, C], depth
/// outermost and width innermost.
struct TokenGrid {
    Dims3 dims;
    Tensor tokens;

    std::size_t channels() const { return tokens.dim(1); }
    std::size_t size() const { return dims.volume(); }
};

/// Checks that tokens is [dims.volume(), C].
TokenGrid make_grid(Dims3 dims, Tensor tokens);

/// Window extents (P, M, M) and cyclic shift. shift == 0 is the regular
/// partition.
struct WindowConfig {
    Dims3 window{1, 1, 1};
    Dims3 shift{0, 0, 0};

    std::size_t tokens_per_window() const { return window.volume(); }
    bool shifted() const { return shift.d != 0 || shift.h != 0 || shift.w != 0; }
};

/// Regular (P, M, M) windows, or shifted by (P/2, M/2, M/2).
WindowConfig make_window_config(std::size_t p, std::size_t m, bool shifted);

/// Along any axis where the grid is no larger than the window, the window
/// shrinks to the grid extent and the shift on that axis is dropped.
WindowConfig clamp_to_grid(const WindowConfig& cfg, const Dims3& dims);

/// Throws ConfigError unless windows tile `dims` exactly and shifts are
/// smaller than the windows.
void validate_windowing(const Dims3& dims, const WindowConfig& cfg);

/// Splits a [D, H, W, Cin] volume into P x M x M patches. Each token holds
/// its patch flattened depth-major, then row, then column, then channel.
TokenGrid patch_partition(const Tensor& volume, std::size_t p, std::size_t m);

/// Grid -> [kappa, T, C] using cfg.window (the shift is not applied here).
Tensor window_partition(const TokenGrid& grid, const WindowConfig& cfg);

/// Inverse of window_partition.
TokenGrid window_reverse(const Tensor& windows, const Dims3& dims, const WindowConfig& cfg);

/// Toroidal roll: the token at p moves to (p + offset) mod dims.
TokenGrid cyclic_shift(const TokenGrid& grid, const std::array<std::int64_t, 3>& offsets);

enum class WindowCountMode { regular, shifted_naive };

/// Regular windows, or the straddling regions a naive shifted partition
/// would produce (one extra region along every shifted axis).
std::size_t count_windows(const Dims3& dims, const WindowConfig& cfg, WindowCountMode mode);

/// For window w and slot t of the shifted-window layout (roll by -shift,
/// then regular partition), order[w*T + t] is the token's flat position in
/// the unshifted grid.
std::vector<std::size_t> window_token_order(const Dims3& dims, const WindowConfig& cfg);

/// Region of the naive shifted partition containing each grid position,
/// as a per-axis label triple flattened to one integer.
std::vector<std::size_t> shift_region_labels(const Dims3& dims, const WindowConfig& cfg);

/// Masking surrogate for -infinity.
inline constexpr double kMaskedLogit = -1e9;

/// [kappa, T, T] additive mask for the shifted layout: 0 where two tokens of
/// a window come from the same naive region, kMaskedLogit otherwise.
Tensor build_shift_mask(const Dims3& dims, const WindowConfig& cfg);

/// Gather index that takes [tau, C] tokens to [kappa, heads, T, C/heads]
/// in the layout given by `order`; `inverse_heads_index` maps back.
GatherIndex heads_window_index(const std::vector<std::size_t>& order, std::size_t window_tokens,
                               std::size_t channels, std::size_t heads);
GatherIndex heads_window_inverse_index(const std::vector<std::size_t>& order, std::size_t window_tokens,
                                       std::size_t channels, std::size_t heads);

}  // namespace vtunet
