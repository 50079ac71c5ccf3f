#pragma once

#include <cstdint>

#include "vtunet/metrics.hpp"
#include "vtunet/tensor.hpp"

namespace vtunet {

struct Phantom {
    Tensor image;        // [D, H, W, channels]
    LabelVolume labels;  // values in [0, classes)
};

/// Nested ellipsoids with seeded centres and radii: label k fills shell k,
/// the innermost shell carrying label classes-1. Each channel is a
/// per-label level plus seeded uniform noise.
Phantom make_phantom(const Dims3& dims, std::size_t channels, std::size_t classes, std::uint64_t seed);

}  // namespace vtunet
