#include "vtunet/windowing.hpp"

#include <memory>
#include <sstream>

#include "vtunet/error.hpp"

namespace vtunet {

namespace {

std::size_t flat3(const Dims3& dims, std::size_t z, std::size_t y, std::size_t x) {
    return (z * dims.h + y) * dims.w + x;
}

}  // namespace

std::string dims_str(const Dims3& d) {
    std::ostringstream os;
    os << '(' << d.d << ", " << d.h << ", " << d.w << ')';
    return os.str();
}

TokenGrid make_grid(Dims3 dims, Tensor tokens) {
    if (tokens.rank() != 2 || tokens.dim(0) != dims.volume()) {
        throw DimensionError("token grid " + dims_str(dims) + " needs [" + std::to_string(dims.volume()) +
                             ", C] tokens, got " + shape_str(tokens.shape()));
    }
    return TokenGrid{dims, std::move(tokens)};
}

WindowConfig make_window_config(std::size_t p, std::size_t m, bool shifted) {
    WindowConfig cfg;
    cfg.window = {p, m, m};
    if (shifted) cfg.shift = {p / 2, m / 2, m / 2};
    return cfg;
}

WindowConfig clamp_to_grid(const WindowConfig& cfg, const Dims3& dims) {
    WindowConfig out = cfg;
    for (std::size_t a = 0; a < 3; ++a) {
        if (dims[a] <= cfg.window[a]) {
            out.window[a] = dims[a];
            out.shift[a] = 0;
        }
    }
    return out;
}

void validate_windowing(const Dims3& dims, const WindowConfig& cfg) {
    static const char* axis_names[] = {"depth", "height", "width"};
    for (std::size_t a = 0; a < 3; ++a) {
        if (cfg.window[a] == 0) throw ConfigError(std::string("window extent along ") + axis_names[a] + " is zero");
        if (cfg.shift[a] >= cfg.window[a]) {
            throw ConfigError(std::string("shift along ") + axis_names[a] + " must be smaller than the window");
        }
        if (dims[a] % cfg.window[a] != 0) {
            throw ConfigError("grid " + dims_str(dims) + " is not divisible by window " + dims_str(cfg.window) +
                              " along " + axis_names[a]);
        }
    }
}

TokenGrid patch_partition(const Tensor& volume, std::size_t p, std::size_t m) {
    if (volume.rank() != 4) {
        throw DimensionError("patch_partition expects a [D, H, W, C] volume, got " + shape_str(volume.shape()));
    }
    if (p == 0 || m == 0) throw ConfigError("patch extents must be positive");
    const std::size_t D = volume.dim(0), H = volume.dim(1), W = volume.dim(2), cin = volume.dim(3);
    if (D % p != 0 || H % m != 0 || W % m != 0) {
        throw ConfigError("volume " + shape_str(volume.shape()) + " is not divisible into " + std::to_string(p) +
                          "x" + std::to_string(m) + "x" + std::to_string(m) + " patches");
    }
    const Dims3 grid{D / p, H / m, W / m};
    const std::size_t width = p * m * m * cin;
    auto index = std::make_shared<std::vector<std::size_t>>(grid.volume() * width);
    std::size_t o = 0;
    for (std::size_t gz = 0; gz < grid.d; ++gz)
        for (std::size_t gy = 0; gy < grid.h; ++gy)
            for (std::size_t gx = 0; gx < grid.w; ++gx)
                for (std::size_t pz = 0; pz < p; ++pz)
                    for (std::size_t py = 0; py < m; ++py)
                        for (std::size_t px = 0; px < m; ++px) {
                            const std::size_t voxel = ((gz * p + pz) * H + gy * m + py) * W + gx * m + px;
                            for (std::size_t c = 0; c < cin; ++c) (*index)[o++] = voxel * cin + c;
                        }
    return TokenGrid{grid, gather(volume, {grid.volume(), width}, std::move(index))};
}

std::vector<std::size_t> window_token_order(const Dims3& dims, const WindowConfig& cfg) {
    validate_windowing(dims, cfg);
    const Dims3& win = cfg.window;
    const Dims3 counts{dims.d / win.d, dims.h / win.h, dims.w / win.w};
    std::vector<std::size_t> order;
    order.reserve(dims.volume());
    for (std::size_t wz = 0; wz < counts.d; ++wz)
        for (std::size_t wy = 0; wy < counts.h; ++wy)
            for (std::size_t wx = 0; wx < counts.w; ++wx)
                for (std::size_t tz = 0; tz < win.d; ++tz)
                    for (std::size_t ty = 0; ty < win.h; ++ty)
                        for (std::size_t tx = 0; tx < win.w; ++tx) {
                            const std::size_t z = (wz * win.d + tz + cfg.shift.d) % dims.d;
                            const std::size_t y = (wy * win.h + ty + cfg.shift.h) % dims.h;
                            const std::size_t x = (wx * win.w + tx + cfg.shift.w) % dims.w;
                            order.push_back(flat3(dims, z, y, x));
                        }
    return order;
}

GatherIndex heads_window_index(const std::vector<std::size_t>& order, std::size_t window_tokens,
                               std::size_t channels, std::size_t heads) {
    if (heads == 0 || channels % heads != 0) {
        throw ConfigError("channels " + std::to_string(channels) + " not divisible by heads " + std::to_string(heads));
    }
    const std::size_t windows = order.size() / window_tokens;
    const std::size_t ch = channels / heads;
    auto index = std::make_shared<std::vector<std::size_t>>(order.size() * channels);
    std::size_t o = 0;
    for (std::size_t w = 0; w < windows; ++w)
        for (std::size_t hd = 0; hd < heads; ++hd)
            for (std::size_t t = 0; t < window_tokens; ++t) {
                const std::size_t base = order[w * window_tokens + t] * channels + hd * ch;
                for (std::size_t c = 0; c < ch; ++c) (*index)[o++] = base + c;
            }
    return index;
}

GatherIndex heads_window_inverse_index(const std::vector<std::size_t>& order, std::size_t window_tokens,
                                       std::size_t channels, std::size_t heads) {
    const std::size_t windows = order.size() / window_tokens;
    const std::size_t ch = channels / heads;
    auto index = std::make_shared<std::vector<std::size_t>>(order.size() * channels);
    for (std::size_t w = 0; w < windows; ++w)
        for (std::size_t hd = 0; hd < heads; ++hd)
            for (std::size_t t = 0; t < window_tokens; ++t) {
                const std::size_t dst = order[w * window_tokens + t] * channels + hd * ch;
                const std::size_t src = ((w * heads + hd) * window_tokens + t) * ch;
                for (std::size_t c = 0; c < ch; ++c) (*index)[dst + c] = src + c;
            }
    return index;
}

Tensor window_partition(const TokenGrid& grid, const WindowConfig& cfg) {
    WindowConfig regular = cfg;
    regular.shift = {0, 0, 0};
    const auto order = window_token_order(grid.dims, regular);
    const std::size_t t = regular.tokens_per_window();
    const std::size_t c = grid.channels();
    return gather(grid.tokens, {order.size() / t, t, c}, heads_window_index(order, t, c, 1));
}

TokenGrid window_reverse(const Tensor& windows, const Dims3& dims, const WindowConfig& cfg) {
    WindowConfig regular = cfg;
    regular.shift = {0, 0, 0};
    const auto order = window_token_order(dims, regular);
    const std::size_t t = regular.tokens_per_window();
    if (windows.rank() != 3 || windows.dim(0) * windows.dim(1) != dims.volume() || windows.dim(1) != t) {
        throw DimensionError("window_reverse: windows " + shape_str(windows.shape()) + " do not tile grid " +
                             dims_str(dims) + " with window " + dims_str(cfg.window));
    }
    const std::size_t c = windows.dim(2);
    return TokenGrid{dims, gather(windows, {dims.volume(), c}, heads_window_inverse_index(order, t, c, 1))};
}

TokenGrid cyclic_shift(const TokenGrid& grid, const std::array<std::int64_t, 3>& offsets) {
    const Dims3& dims = grid.dims;
    for (std::size_t a = 0; a < 3; ++a) {
        const auto ext = static_cast<std::int64_t>(dims[a]);
        if (offsets[a] >= ext || -offsets[a] >= ext) {
            throw ConfigError("cyclic_shift offset exceeds grid extent " + dims_str(dims));
        }
    }
    auto wrap = [](std::int64_t v, std::size_t ext) {
        const auto e = static_cast<std::int64_t>(ext);
        return static_cast<std::size_t>(((v % e) + e) % e);
    };
    const std::size_t c = grid.channels();
    auto index = std::make_shared<std::vector<std::size_t>>(dims.volume() * c);
    for (std::size_t z = 0; z < dims.d; ++z)
        for (std::size_t y = 0; y < dims.h; ++y)
            for (std::size_t x = 0; x < dims.w; ++x) {
                const std::size_t src = flat3(dims, wrap(static_cast<std::int64_t>(z) - offsets[0], dims.d),
                                              wrap(static_cast<std::int64_t>(y) - offsets[1], dims.h),
                                              wrap(static_cast<std::int64_t>(x) - offsets[2], dims.w));
                const std::size_t dst = flat3(dims, z, y, x);
                for (std::size_t k = 0; k < c; ++k) (*index)[dst * c + k] = src * c + k;
            }
    return TokenGrid{dims, gather(grid.tokens, {dims.volume(), c}, std::move(index))};
}

std::size_t count_windows(const Dims3& dims, const WindowConfig& cfg, WindowCountMode mode) {
    std::size_t total = 1;
    for (std::size_t a = 0; a < 3; ++a) {
        if (cfg.window[a] == 0) throw ConfigError("window extent is zero");
        if (mode == WindowCountMode::regular) {
            if (dims[a] % cfg.window[a] != 0) {
                throw ConfigError("grid " + dims_str(dims) + " is not divisible by window " + dims_str(cfg.window));
            }
            total *= dims[a] / cfg.window[a];
        } else {
            // Regions of a partition whose boundaries sit at shift + k*window.
            const std::size_t s = cfg.shift[a];
            std::size_t regions = (s > 0 ? 1 : 0) + (dims[a] - s + cfg.window[a] - 1) / cfg.window[a];
            total *= regions;
        }
    }
    return total;
}

std::vector<std::size_t> shift_region_labels(const Dims3& dims, const WindowConfig& cfg) {
    auto label = [&](std::size_t x, std::size_t axis) -> std::size_t {
        const std::size_t s = cfg.shift[axis];
        if (s == 0) return x / cfg.window[axis];
        return x < s ? 0 : 1 + (x - s) / cfg.window[axis];
    };
    const std::size_t nh = dims.h + 1, nw = dims.w + 1;
    std::vector<std::size_t> labels(dims.volume());
    for (std::size_t z = 0; z < dims.d; ++z)
        for (std::size_t y = 0; y < dims.h; ++y)
            for (std::size_t x = 0; x < dims.w; ++x) {
                labels[flat3(dims, z, y, x)] = (label(z, 0) * nh + label(y, 1)) * nw + label(x, 2);
            }
    return labels;
}

Tensor build_shift_mask(const Dims3& dims, const WindowConfig& cfg) {
    const auto order = window_token_order(dims, cfg);
    const std::size_t t = cfg.tokens_per_window();
    const std::size_t windows = order.size() / t;
    std::vector<double> mask(windows * t * t, 0.0);
    if (cfg.shifted()) {
        const auto labels = shift_region_labels(dims, cfg);
        for (std::size_t w = 0; w < windows; ++w)
            for (std::size_t i = 0; i < t; ++i)
                for (std::size_t j = 0; j < t; ++j) {
                    if (labels[order[w * t + i]] != labels[order[w * t + j]]) mask[(w * t + i) * t + j] = kMaskedLogit;
                }
    }
    return Tensor::from({windows, t, t}, std::move(mask));
}

}  // namespace vtunet
