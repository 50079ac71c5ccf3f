#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vtunet/text_manifest.hpp"
#include "vtunet/windowing.hpp"

namespace vtunet {

enum class ArtefactKind { motion, ghosting, spike };

const char* artefact_name(ArtefactKind kind);
ArtefactKind parse_artefact(const std::string& name);

struct ArtefactSpec {
    ArtefactKind kind = ArtefactKind::motion;
    double intensity = 0.0;
    std::uint64_t seed = 0;
    // motion
    std::size_t movements = 4;
    double max_translation = 2.0;  // voxels at intensity 1
    // ghosting
    std::size_t ghosts = 4;  // every ghosts-th k-space plane is attenuated
    std::size_t axis = 1;    // 0 depth, 1 height, 2 width
    // spike
    std::size_t spikes = 1;

    /// Throws ConfigError on out-of-range fields.
    void validate() const;
    void write(TextManifest& out, const std::string& prefix) const;
    static ArtefactSpec read(const TextManifest& in, const std::string& prefix);
};

/// Average over `movements` rigidly translated copies, built in k-space as
/// phase ramps. Translations are drawn from the seed, scaled by intensity.
std::vector<double> add_motion(const Dims3& dims, std::span<const double> volume, const ArtefactSpec& spec);

/// Scales every k-space plane along `axis` whose index is a nonzero multiple
/// of `ghosts` by (1 - intensity).
std::vector<double> add_ghosting(const Dims3& dims, std::span<const double> volume, const ArtefactSpec& spec);

/// Adds `spikes` conjugate pairs of magnitude intensity * ||spectrum|| at
/// seeded non-DC locations.
std::vector<double> add_spike(const Dims3& dims, std::span<const double> volume, const ArtefactSpec& spec);

std::vector<double> apply_artefact(const Dims3& dims, std::span<const double> volume, const ArtefactSpec& spec);

/// Spike locations that add_spike would use (for spectral checks).
std::vector<std::array<std::size_t, 3>> spike_locations(const Dims3& dims, const ArtefactSpec& spec);

}  // namespace vtunet
