#pragma once

#include <cstdint>
#include <span>

#include "vtunet/tensor.hpp"

namespace vtunet {

struct DiceCeLoss {
    Tensor loss;      // [1], differentiable
    double dice = 0;  // 1 - mean soft Dice over classes
    double ce = 0;    // mean voxel-wise cross-entropy
};

inline constexpr double kDiceSmoothing = 1e-5;

/// Equal-weight mean of soft-Dice loss and voxel-wise cross-entropy.
/// logits: [..., K]; labels: one integer in [0, K) per voxel.
DiceCeLoss dice_ce_loss(const Tensor& logits, std::span<const std::int32_t> labels);

}  // namespace vtunet
