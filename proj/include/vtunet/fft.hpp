#pragma once

#include <complex>
#include <span>
#include <vector>

#include "vtunet/windowing.hpp"

namespace vtunet {

using Complex = std::complex<double>;

struct ComplexVolume {
    Dims3 dims;
    std::vector<Complex> values;  // depth-major, row-major
};

bool is_power_of_two(std::size_t n);

/// In-place radix-2 transform of one sequence, unnormalised.
/// `inverse` selects the +i exponent.
void fft1d(std::span<Complex> data, bool inverse);

/// Orthonormal 3D transforms (each axis scaled by 1/sqrt(n)). Every extent
/// must be a power of two.
ComplexVolume fft3(const ComplexVolume& v);
ComplexVolume ifft3(const ComplexVolume& v);

ComplexVolume to_complex(const Dims3& dims, std::span<const double> real);

}  // namespace vtunet
