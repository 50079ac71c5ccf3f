#pragma once

#include <string>
#include <vector>

#include "vtunet/metrics.hpp"
#include "vtunet/tensor.hpp"
#include "vtunet/windowing.hpp"

namespace vtunet {

enum class Precision { f64, f32, i32, u8 };
enum class VolumeKind { intensity, labels };

const char* precision_name(Precision p);
std::size_t precision_bytes(Precision p);

/// `<path>` is a key=value header; `<path>.raw` holds the values as
/// little-endian `precision`, depth-major row-major with channels innermost.
/// Values are held as doubles in memory; every supported precision converts
/// to double exactly, so reading then writing reproduces the bytes.
struct VolumeFile {
    Dims3 dims;
    std::size_t channels = 1;
    Precision precision = Precision::f64;
    VolumeKind kind = VolumeKind::intensity;
    Spacing spacing{1.0, 1.0, 1.0};
    std::vector<double> values;

    /// [D, H, W, channels].
    Tensor to_tensor() const;
    /// Requires one channel of integral values.
    LabelVolume to_labels() const;

    static VolumeFile from_tensor(const Tensor& t, Precision precision = Precision::f64);
    static VolumeFile from_labels(const LabelVolume& labels, Precision precision = Precision::i32);
};

VolumeFile read_volume(const std::string& path);
/// Throws FormatError when a value is not representable in the precision.
void write_volume(const VolumeFile& volume, const std::string& path);

}  // namespace vtunet
