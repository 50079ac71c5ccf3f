#include "vtunet/volume_io.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "vtunet/checkpoint.hpp"
#include "vtunet/error.hpp"
#include "vtunet/text_manifest.hpp"

namespace vtunet {

namespace {

constexpr const char* kVolumeFormat = "vtunet-volume";
constexpr std::size_t kVolumeVersion = 1;

Precision parse_precision(const std::string& s, const std::string& path) {
    if (s == "f64") return Precision::f64;
    if (s == "f32") return Precision::f32;
    if (s == "i32") return Precision::i32;
    if (s == "u8") return Precision::u8;
    throw FormatError(path + ": field 'precision' has unknown value '" + s + "'");
}

Spacing parse_spacing(const std::string& text, const std::string& path) {
    Spacing sp{};
    std::istringstream in(text);
    std::string item;
    std::size_t i = 0;
    while (std::getline(in, item, ',')) {
        if (i == 3) throw FormatError(path + ": field 'spacing' needs three values");
        TextManifest one;
        one.set("spacing", item);
        try {
            sp[i++] = one.get_real("spacing");
        } catch (const FormatError&) {
            throw FormatError(path + ": field 'spacing' is malformed: '" + text + "'");
        }
        if (!(sp[i - 1] > 0.0) || !std::isfinite(sp[i - 1])) {
            throw FormatError(path + ": field 'spacing' must be positive");
        }
    }
    if (i != 3) throw FormatError(path + ": field 'spacing' needs three values");
    return sp;
}

bool is_integral_in(double v, double lo, double hi) { return std::floor(v) == v && v >= lo && v <= hi; }

}  // namespace

const char* precision_name(Precision p) {
    switch (p) {
        case Precision::f64: return "f64";
        case Precision::f32: return "f32";
        case Precision::i32: return "i32";
        case Precision::u8: return "u8";
    }
    return "?";
}

std::size_t precision_bytes(Precision p) {
    switch (p) {
        case Precision::f64: return 8;
        case Precision::f32: return 4;
        case Precision::i32: return 4;
        case Precision::u8: return 1;
    }
    return 0;
}

Tensor VolumeFile::to_tensor() const { return Tensor::from({dims.d, dims.h, dims.w, channels}, values); }

LabelVolume VolumeFile::to_labels() const {
    if (channels != 1) {
        throw DimensionError("label volume must have one channel, got " + std::to_string(channels));
    }
    LabelVolume lv{dims, std::vector<std::int32_t>(values.size()), spacing};
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!is_integral_in(values[i], std::numeric_limits<std::int32_t>::min(),
                            std::numeric_limits<std::int32_t>::max())) {
            throw FormatError("label volume holds non-integer value " + format_real(values[i]));
        }
        lv.labels[i] = static_cast<std::int32_t>(values[i]);
    }
    return lv;
}

VolumeFile VolumeFile::from_tensor(const Tensor& t, Precision precision) {
    if (t.rank() != 4) throw DimensionError("volume tensor must be [D, H, W, C], got " + shape_str(t.shape()));
    VolumeFile v;
    v.dims = {t.dim(0), t.dim(1), t.dim(2)};
    v.channels = t.dim(3);
    v.precision = precision;
    v.values.assign(t.values().begin(), t.values().end());
    if (precision == Precision::f32) {
        for (auto& x : v.values) x = static_cast<double>(static_cast<float>(x));
    }
    return v;
}

VolumeFile VolumeFile::from_labels(const LabelVolume& labels, Precision precision) {
    VolumeFile v;
    v.dims = labels.dims;
    v.channels = 1;
    v.precision = precision;
    v.kind = VolumeKind::labels;
    v.spacing = labels.spacing;
    v.values.assign(labels.labels.begin(), labels.labels.end());
    return v;
}

VolumeFile read_volume(const std::string& path) {
    const TextManifest m = TextManifest::read_file(path);
    if (m.get("format") != kVolumeFormat) throw FormatError(path + ": field 'format' is not " + kVolumeFormat);
    if (m.get_size("version") != kVolumeVersion) {
        throw FormatError(path + ": field 'version' is " + m.get("version") + ", expected " +
                          std::to_string(kVolumeVersion));
    }
    if (m.get("endianness") != "little") throw FormatError(path + ": field 'endianness' must be little");
    VolumeFile v;
    const auto extents = parse_extents(m.get("dims"), path + ": field 'dims'");
    if (extents.size() != 3) throw FormatError(path + ": field 'dims' needs three extents (DxHxW)");
    v.dims = {extents[0], extents[1], extents[2]};
    v.channels = m.get_size("channels");
    if (v.channels == 0) throw FormatError(path + ": field 'channels' must be positive");
    v.precision = parse_precision(m.get("precision"), path);
    const std::string& kind = m.get("kind");
    if (kind == "intensity") {
        v.kind = VolumeKind::intensity;
    } else if (kind == "labels") {
        v.kind = VolumeKind::labels;
    } else {
        throw FormatError(path + ": field 'kind' must be intensity or labels, got '" + kind + "'");
    }
    v.spacing = parse_spacing(m.get("spacing"), path);

    const auto blob_file = std::filesystem::path(path).parent_path() / m.get("blob");
    const std::string blob = read_bytes(blob_file.string());
    const std::size_t count = v.dims.volume() * v.channels;
    const std::size_t bytes = precision_bytes(v.precision);
    if (blob.size() != count * bytes) {
        throw FormatError(blob_file.string() + ": blob is " + std::to_string(blob.size()) + " bytes, header implies " +
                          std::to_string(count * bytes));
    }
    v.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const char* p = blob.data() + i * bytes;
        switch (v.precision) {
            case Precision::f64: v.values[i] = read_le_f64(p); break;
            case Precision::f32: v.values[i] = read_le_f32(p); break;
            case Precision::i32: v.values[i] = read_le_i32(p); break;
            case Precision::u8: v.values[i] = static_cast<unsigned char>(*p); break;
        }
    }
    return v;
}

void write_volume(const VolumeFile& v, const std::string& path) {
    const std::size_t count = v.dims.volume() * v.channels;
    if (v.values.size() != count) {
        throw DimensionError("volume " + dims_str(v.dims) + " x " + std::to_string(v.channels) + " holds " +
                             std::to_string(v.values.size()) + " values");
    }
    std::string blob;
    blob.reserve(count * precision_bytes(v.precision));
    for (double x : v.values) {
        switch (v.precision) {
            case Precision::f64: append_le_f64(blob, x); break;
            case Precision::f32:
                if (static_cast<double>(static_cast<float>(x)) != x && std::isfinite(x)) {
                    throw FormatError("value " + format_real(x) + " is not representable as f32");
                }
                append_le_f32(blob, static_cast<float>(x));
                break;
            case Precision::i32:
                if (!is_integral_in(x, std::numeric_limits<std::int32_t>::min(), std::numeric_limits<std::int32_t>::max())) {
                    throw FormatError("value " + format_real(x) + " is not representable as i32");
                }
                append_le_i32(blob, static_cast<std::int32_t>(x));
                break;
            case Precision::u8:
                if (!is_integral_in(x, 0, 255)) throw FormatError("value " + format_real(x) + " is not representable as u8");
                blob.push_back(static_cast<char>(static_cast<unsigned char>(x)));
                break;
        }
    }
    TextManifest m;
    m.set("format", kVolumeFormat);
    m.set("version", kVolumeVersion);
    m.set("dims", format_extents({v.dims.d, v.dims.h, v.dims.w}));
    m.set("channels", v.channels);
    m.set("precision", precision_name(v.precision));
    m.set("endianness", "little");
    m.set("kind", v.kind == VolumeKind::labels ? "labels" : "intensity");
    m.set("spacing", format_real(v.spacing[0]) + "," + format_real(v.spacing[1]) + "," + format_real(v.spacing[2]));
    m.set("blob", std::filesystem::path(path + ".raw").filename().string());
    write_bytes(path + ".raw", blob);
    m.write_file(path);
}

}  // namespace vtunet
