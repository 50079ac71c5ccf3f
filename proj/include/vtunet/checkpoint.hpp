#pragma once

#include <cstdint>
#include <string>

#include "vtunet/network.hpp"
#include "vtunet/text_manifest.hpp"

namespace vtunet {

/// Writes every ModelConfig field under `prefix` (e.g. "config.").
void write_config(TextManifest& out, const ModelConfig& config, const std::string& prefix = "");

/// Reads a config written by write_config. A "preset" key (tiny, small,
/// base) selects the starting point; any other field overrides it. Unknown
/// keys under the prefix are rejected.
ModelConfig read_config(const TextManifest& in, const std::string& prefix = "");

/// Accepts a preset name or a path to a key=value config file.
ModelConfig load_config(const std::string& name_or_path);

/// Checkpoint = `<path>` manifest (config, seed, tensor table) plus
/// `<path>.bin`, the parameter values as little-endian f64 in manifest order.
void save_checkpoint(const VTUNet& model, const std::string& path);

/// Rebuilds the model from the manifest's config and seed, then overwrites
/// every parameter from the blob. Names, shapes, offsets and the blob length
/// are all checked.
VTUNet load_checkpoint(const std::string& path);

/// Little-endian byte packing shared by the file formats.
void append_le_f64(std::string& out, double v);
double read_le_f64(const char* p);
void append_le_f32(std::string& out, float v);
float read_le_f32(const char* p);
void append_le_i32(std::string& out, std::int32_t v);
std::int32_t read_le_i32(const char* p);

}  // namespace vtunet
