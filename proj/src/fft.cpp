#include "vtunet/fft.hpp"

#include <cmath>
#include <numbers>

#include "vtunet/error.hpp"

namespace vtunet {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft1d(std::span<Complex> a, bool inverse) {
    const std::size_t n = a.size();
    if (!is_power_of_two(n)) throw ConfigError("fft length " + std::to_string(n) + " is not a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        for (std::size_t k = 0; k < half; ++k) {
            // Direct twiddles: no accumulated rounding from repeated products.
            const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len);
            const Complex w(std::cos(angle), std::sin(angle));
            for (std::size_t s = 0; s < n; s += len) {
                const Complex u = a[s + k];
                const Complex t = w * a[s + k + half];
                a[s + k] = u + t;
                a[s + k + half] = u - t;
            }
        }
    }
}

namespace {

ComplexVolume transform(const ComplexVolume& in, bool inverse) {
    const Dims3& d = in.dims;
    for (std::size_t a = 0; a < 3; ++a) {
        if (!is_power_of_two(d[a])) {
            throw ConfigError("fft3 needs power-of-two extents, got " + dims_str(d) + " (pad the volume first)");
        }
    }
    if (in.values.size() != d.volume()) throw DimensionError("complex volume size does not match " + dims_str(d));
    ComplexVolume out = in;
    const double norm = 1.0 / std::sqrt(static_cast<double>(d.volume()));
    std::vector<Complex> line;
    const std::array<std::size_t, 3> strides{d.h * d.w, d.w, 1};
    for (std::size_t axis = 0; axis < 3; ++axis) {
        const std::size_t n = d[axis];
        const std::size_t stride = strides[axis];
        line.resize(n);
        for (std::size_t base = 0; base < d.volume(); ++base) {
            // Visit each line once, from its first element.
            if ((base / stride) % n != 0) continue;
            for (std::size_t i = 0; i < n; ++i) line[i] = out.values[base + i * stride];
            fft1d(line, inverse);
            for (std::size_t i = 0; i < n; ++i) out.values[base + i * stride] = line[i];
        }
    }
    for (auto& v : out.values) v *= norm;
    return out;
}

}  // namespace

ComplexVolume fft3(const ComplexVolume& v) { return transform(v, false); }
ComplexVolume ifft3(const ComplexVolume& v) { return transform(v, true); }

ComplexVolume to_complex(const Dims3& dims, std::span<const double> real) {
    if (real.size() != dims.volume()) throw DimensionError("volume size does not match " + dims_str(dims));
    ComplexVolume v{dims, std::vector<Complex>(real.begin(), real.end())};
    return v;
}

}  // namespace vtunet
