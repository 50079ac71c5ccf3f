#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vtunet/windowing.hpp"

namespace vtunet {

using Spacing = std::array<double, 3>;

struct LabelVolume {
    Dims3 dims;
    std::vector<std::int32_t> labels;  // depth-major, row-major
    Spacing spacing{1.0, 1.0, 1.0};
};

struct BinaryMask {
    Dims3 dims;
    std::vector<std::uint8_t> voxels;  // 0 or 1

    std::size_t count() const;
};

/// ET = {2}, TC = {2, 3}, WT = {1, 2, 3}.
struct RegionMasks {
    BinaryMask et, tc, wt;
};

inline constexpr std::int32_t kLabelEdema = 1;
inline constexpr std::int32_t kLabelEnhancing = 2;
inline constexpr std::int32_t kLabelNecrotic = 3;

/// Throws MetricError on labels outside {0, 1, 2, 3}.
RegionMasks compose_regions(const LabelVolume& labels);

BinaryMask mask_of(const LabelVolume& labels, std::int32_t label);

/// 2|P∩G| / (|P| + |G|); 1.0 when both are empty.
double dsc(const BinaryMask& pred, const BinaryMask& gt);

/// Mask voxels with at least one 6-neighbour outside the mask (the volume
/// border counts as outside).
std::vector<std::size_t> surface_voxels(const BinaryMask& mask);

/// 95th percentile (linear interpolation at rank 0.95·(n−1)) of the pooled
/// directed surface distances in both directions. Throws MetricError when
/// either mask is empty.
double hd95(const BinaryMask& pred, const BinaryMask& gt, const Spacing& spacing = {1.0, 1.0, 1.0});

/// Exact squared Euclidean distance from every voxel to the nearest voxel
/// of `seeds`, by separable lower-envelope passes. Infinity when seeds is
/// empty.
std::vector<double> squared_distance_transform(const Dims3& dims, const std::vector<std::size_t>& seeds,
                                               const Spacing& spacing);

/// Linear-interpolation percentile over a sorted sample.
double percentile_sorted(const std::vector<double>& sorted, double q);

struct RegionScore {
    std::string region;
    double dsc = 0.0;
    double hd95 = 0.0;
    bool hd95_defined = true;
    std::string note;  // why HD95 is undefined
};

/// WT, ET, TC rows in that order.
std::vector<RegionScore> evaluate_regions(const LabelVolume& pred, const LabelVolume& gt);

/// CSV with columns case,region,dsc,hd95,note; rows per region plus an
/// "average" row (HD95 averaged over defined regions only).
std::string evaluation_csv(const std::string& case_id, const std::vector<RegionScore>& scores);

}  // namespace vtunet
