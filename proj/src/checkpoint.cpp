#include "vtunet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <set>
#include <sstream>

#include "vtunet/error.hpp"

namespace vtunet {

namespace {

constexpr const char* kCheckpointFormat = "vtunet-checkpoint";
constexpr int kCheckpointVersion = 1;

template <std::size_t N>
std::string join_array(const std::array<std::size_t, N>& v) {
    std::string out;
    for (std::size_t i = 0; i < N; ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

std::array<std::size_t, kStages> parse_stage_array(const std::string& text, const std::string& key) {
    std::array<std::size_t, kStages> out{};
    std::istringstream in(text);
    std::string item;
    std::size_t i = 0;
    while (std::getline(in, item, ',')) {
        if (i == kStages) throw ConfigError(key + ": expected " + std::to_string(kStages) + " comma-separated values");
        try {
            std::size_t used = 0;
            const unsigned long v = std::stoul(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out[i++] = v;
        } catch (const std::logic_error&) {
            throw ConfigError(key + ": '" + text + "' is not a list of integers");
        }
    }
    if (i != kStages) throw ConfigError(key + ": expected " + std::to_string(kStages) + " comma-separated values");
    return out;
}

std::uint64_t to_u64(double v) { return std::bit_cast<std::uint64_t>(v); }

std::string blob_path(const std::string& path) { return path + ".bin"; }

}  // namespace

void append_le_f64(std::string& out, double v) {
    const std::uint64_t bits = to_u64(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double read_le_f64(const char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return std::bit_cast<double>(bits);
}

void append_le_f32(std::string& out, float v) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float read_le_f32(const char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return std::bit_cast<float>(bits);
}

void append_le_i32(std::string& out, std::int32_t v) {
    const auto bits = static_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::int32_t read_le_i32(const char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return static_cast<std::int32_t>(bits);
}

void write_config(TextManifest& out, const ModelConfig& c, const std::string& prefix) {
    out.set(prefix + "channels", c.channels);
    out.set(prefix + "patch_depth", c.patch_depth);
    out.set(prefix + "patch_size", c.patch_size);
    out.set(prefix + "classes", c.classes);
    out.set(prefix + "in_channels", c.in_channels);
    out.set(prefix + "depths", join_array(c.depths));
    out.set(prefix + "heads", join_array(c.heads));
    out.set(prefix + "mlp_ratio", c.mlp_ratio);
    out.set_real(prefix + "alpha", c.alpha);
    out.set(prefix + "fpe", c.fpe ? "true" : "false");
    out.set_real(prefix + "ln_eps", c.ln_eps);
    out.set(prefix + "bias_mode", c.bias_mode == BiasMode::relative ? "relative" : "dense");
}

ModelConfig read_config(const TextManifest& in, const std::string& prefix) {
    static const std::set<std::string> known{"preset", "channels", "patch_depth", "patch_size", "classes",
                                             "in_channels", "depths", "heads", "mlp_ratio", "alpha",
                                             "fpe", "ln_eps", "bias_mode"};
    for (const auto& [key, value] : in.entries()) {
        if (key.compare(0, prefix.size(), prefix) != 0) continue;
        if (!known.count(key.substr(prefix.size()))) throw ConfigError("unknown config field '" + key + "'");
    }
    ModelConfig c;
    const std::string preset = in.get_or(prefix + "preset", "base");
    if (preset == "tiny") {
        c = ModelConfig::tiny();
    } else if (preset == "small") {
        c = ModelConfig::small();
    } else if (preset != "base") {
        throw ConfigError("unknown preset '" + preset + "'");
    }
    auto size_field = [&](const char* name, std::size_t& dst) {
        const std::string key = prefix + name;
        if (!in.has(key)) return;
        try {
            dst = in.get_size(key);
        } catch (const FormatError& e) {
            throw ConfigError(e.what());
        }
    };
    auto real_field = [&](const char* name, double& dst) {
        const std::string key = prefix + name;
        if (!in.has(key)) return;
        try {
            dst = in.get_real(key);
        } catch (const FormatError& e) {
            throw ConfigError(e.what());
        }
    };
    size_field("channels", c.channels);
    size_field("patch_depth", c.patch_depth);
    size_field("patch_size", c.patch_size);
    size_field("classes", c.classes);
    size_field("in_channels", c.in_channels);
    size_field("mlp_ratio", c.mlp_ratio);
    if (in.has(prefix + "depths")) c.depths = parse_stage_array(in.get(prefix + "depths"), prefix + "depths");
    if (in.has(prefix + "heads")) c.heads = parse_stage_array(in.get(prefix + "heads"), prefix + "heads");
    real_field("alpha", c.alpha);
    real_field("ln_eps", c.ln_eps);
    if (in.has(prefix + "fpe")) {
        try {
            c.fpe = in.get_bool(prefix + "fpe");
        } catch (const FormatError& e) {
            throw ConfigError(e.what());
        }
    }
    if (in.has(prefix + "bias_mode")) {
        const std::string& mode = in.get(prefix + "bias_mode");
        if (mode == "relative") {
            c.bias_mode = BiasMode::relative;
        } else if (mode == "dense") {
            c.bias_mode = BiasMode::dense;
        } else {
            throw ConfigError("bias_mode must be 'relative' or 'dense', got '" + mode + "'");
        }
    }
    c.validate();
    return c;
}

ModelConfig load_config(const std::string& name_or_path) {
    if (name_or_path == "tiny") return ModelConfig::tiny();
    if (name_or_path == "small") return ModelConfig::small();
    if (name_or_path == "base") return ModelConfig::base();
    if (!std::filesystem::exists(name_or_path)) {
        throw IoError("config '" + name_or_path + "' is neither a preset (tiny, small, base) nor a file");
    }
    return read_config(TextManifest::read_file(name_or_path));
}

void save_checkpoint(const VTUNet& model, const std::string& path) {
    TextManifest m;
    m.set("format", kCheckpointFormat);
    m.set("version", kCheckpointVersion);
    m.set("endianness", "little");
    m.set("precision", "f64");
    m.set("seed", model.seed());
    write_config(m, model.config(), "config.");
    m.set("blob", std::filesystem::path(blob_path(path)).filename().string());

    std::string blob;
    blob.reserve(model.params().value_count() * 8);
    const auto& entries = model.params().entries();
    m.set("tensor_count", entries.size());
    std::size_t offset = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& [name, tensor] = entries[i];
        m.set("tensor." + std::to_string(i), name + " " + format_extents(tensor.shape()) + " " + std::to_string(offset));
        for (double v : tensor.values()) append_le_f64(blob, v);
        offset += tensor.numel();
    }
    m.set("value_count", offset);
    write_bytes(blob_path(path), blob);
    m.write_file(path);
}

VTUNet load_checkpoint(const std::string& path) {
    const TextManifest m = TextManifest::read_file(path);
    if (m.get("format") != kCheckpointFormat) throw FormatError(path + ": field 'format' is not " + kCheckpointFormat);
    if (m.get_int("version") != kCheckpointVersion) throw FormatError(path + ": unsupported field 'version'");
    if (m.get("endianness") != "little") throw FormatError(path + ": field 'endianness' must be little");
    if (m.get("precision") != "f64") throw FormatError(path + ": field 'precision' must be f64");

    ModelConfig config;
    try {
        config = read_config(m, "config.");
    } catch (const Error& e) {
        throw FormatError(path + ": " + e.what());
    }
    VTUNet model(config, static_cast<std::uint64_t>(m.get_size("seed")));

    const auto blob_file = std::filesystem::path(path).parent_path() / m.get("blob");
    const std::string blob = read_bytes(blob_file.string());
    const std::size_t count = m.get_size("tensor_count");
    auto& entries = model.params().entries();
    if (count != entries.size()) {
        throw FormatError(path + ": field 'tensor_count' is " + std::to_string(count) + " but the config defines " +
                          std::to_string(entries.size()) + " tensors");
    }
    const std::size_t values = m.get_size("value_count");
    if (values != model.params().value_count()) {
        throw FormatError(path + ": field 'value_count' does not match the config");
    }
    if (blob.size() != values * 8) {
        throw FormatError(blob_file.string() + ": blob is " + std::to_string(blob.size()) + " bytes, expected " +
                          std::to_string(values * 8));
    }
    std::size_t expected_offset = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const std::string key = "tensor." + std::to_string(i);
        std::istringstream row(m.get(key));
        std::string name, extents;
        std::size_t offset = 0;
        if (!(row >> name >> extents >> offset)) throw FormatError(path + ": field '" + key + "' is malformed");
        const auto& [want_name, tensor] = entries[i];
        if (name != want_name) {
            throw FormatError(path + ": field '" + key + "' names " + name + ", expected " + want_name);
        }
        const Shape shape = parse_extents(extents, path + ": field '" + key + "'");
        if (shape != tensor.shape()) {
            throw FormatError(path + ": field '" + key + "' shape " + shape_str(shape) + " does not match config shape " +
                              shape_str(tensor.shape()));
        }
        if (offset != expected_offset) throw FormatError(path + ": field '" + key + "' has a bad offset");
        auto dst = Tensor(tensor).mutable_values();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = read_le_f64(blob.data() + (offset + j) * 8);
        expected_offset += tensor.numel();
    }
    return model;
}

}  // namespace vtunet
