#include "vtunet/loss.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "vtunet/error.hpp"

namespace vtunet {

DiceCeLoss dice_ce_loss(const Tensor& logits, std::span<const std::int32_t> labels) {
    const std::size_t k = logits.shape().back();
    const std::size_t n = logits.numel() / k;
    if (labels.size() != n) {
        throw DimensionError("dice_ce_loss: " + std::to_string(labels.size()) + " labels for logits " +
                             shape_str(logits.shape()));
    }
    for (auto l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= k) {
            throw DimensionError("dice_ce_loss: label " + std::to_string(l) + " outside [0, " + std::to_string(k) + ")");
        }
    }
    const auto z = logits.values();
    auto prob = std::make_shared<std::vector<double>>(n * k);
    double ce = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* zi = z.data() + i * k;
        const double mx = *std::max_element(zi, zi + k);
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) total += std::exp(zi[j] - mx);
        const double log_total = std::log(total);
        for (std::size_t j = 0; j < k; ++j) (*prob)[i * k + j] = std::exp(zi[j] - mx - log_total);
        ce -= zi[labels[i]] - mx - log_total;
    }
    ce /= static_cast<double>(n);

    // Per-class soft intersection and size sums.
    auto inter = std::make_shared<std::vector<double>>(k, 0.0);
    auto sizes = std::make_shared<std::vector<double>>(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) (*sizes)[j] += (*prob)[i * k + j];
        (*inter)[labels[i]] += (*prob)[i * k + labels[i]];
        (*sizes)[labels[i]] += 1.0;
    }
    double dice_mean = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        dice_mean += (2.0 * (*inter)[j] + kDiceSmoothing) / ((*sizes)[j] + kDiceSmoothing);
    }
    dice_mean /= static_cast<double>(k);
    const double dice_loss = 1.0 - dice_mean;

    DiceCeLoss out;
    out.dice = dice_loss;
    out.ce = ce;
    std::vector<std::int32_t> label_copy(labels.begin(), labels.end());
    out.loss = make_result(
        "dice_ce_loss", {1}, {0.5 * (dice_loss + ce)}, {logits},
        [prob, inter, sizes, labels = std::move(label_copy), n, k](std::span<const double> g, GradSink& sink) {
            auto dz = sink.buffer(0);
            const double scale_dice = -0.5 / static_cast<double>(k);
            const double scale_ce = 0.5 / static_cast<double>(n);
            std::vector<double> dp(k);
            for (std::size_t i = 0; i < n; ++i) {
                const double* p = prob->data() + i * k;
                double dot = 0.0;
                for (std::size_t j = 0; j < k; ++j) {
                    const double s = (*sizes)[j] + kDiceSmoothing;
                    const double y = labels[i] == static_cast<std::int32_t>(j) ? 1.0 : 0.0;
                    // d(dice_j)/d(p_ij) = (2 y s - (2 I_j + eps)) / s^2
                    dp[j] = scale_dice * (2.0 * y * s - (2.0 * (*inter)[j] + kDiceSmoothing)) / (s * s);
                    dot += dp[j] * p[j];
                }
                for (std::size_t j = 0; j < k; ++j) {
                    const double y = labels[i] == static_cast<std::int32_t>(j) ? 1.0 : 0.0;
                    dz[i * k + j] += g[0] * (p[j] * (dp[j] - dot) + scale_ce * (p[j] - y));
                }
            }
        });
    return out;
}

}  // namespace vtunet
