#include "vtunet/artefacts.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vtunet/error.hpp"
#include "vtunet/fft.hpp"
#include "vtunet/rng.hpp"

namespace vtunet {

namespace {

// Imaginary residue above this (relative to the largest magnitude) means a
// construction lost its conjugate symmetry.
constexpr double kImagTolerance = 1e-8;

std::vector<double> real_part(const ComplexVolume& v) {
    double peak = 1.0;
    for (const auto& c : v.values) peak = std::max(peak, std::abs(c.real()));
    std::vector<double> out(v.values.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (std::abs(v.values[i].imag()) > kImagTolerance * peak) {
            throw NumericError("artefact output is not real (imaginary residue " +
                               std::to_string(v.values[i].imag()) + ")");
        }
        out[i] = v.values[i].real();
    }
    return out;
}

void check_geometry(const Dims3& dims, std::span<const double> volume) {
    for (std::size_t a = 0; a < 3; ++a) {
        if (!is_power_of_two(dims[a])) {
            throw ConfigError("artefacts need power-of-two extents, got " + dims_str(dims) + " (pad the volume first)");
        }
    }
    if (volume.size() != dims.volume()) {
        throw DimensionError("volume holds " + std::to_string(volume.size()) + " values, dims " + dims_str(dims) +
                             " need " + std::to_string(dims.volume()));
    }
}

// Signed frequency of index k on an axis of length n; Nyquist maps to n/2.
double signed_freq(std::size_t k, std::size_t n) {
    return k <= n / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
}

}  // namespace

const char* artefact_name(ArtefactKind kind) {
    switch (kind) {
        case ArtefactKind::motion: return "motion";
        case ArtefactKind::ghosting: return "ghosting";
        case ArtefactKind::spike: return "spike";
    }
    return "?";
}

ArtefactKind parse_artefact(const std::string& name) {
    if (name == "motion") return ArtefactKind::motion;
    if (name == "ghosting") return ArtefactKind::ghosting;
    if (name == "spike") return ArtefactKind::spike;
    throw ConfigError("unknown artefact '" + name + "' (expected motion, ghosting or spike)");
}

void ArtefactSpec::validate() const {
    if (!(intensity >= 0.0) || !std::isfinite(intensity)) throw ConfigError("artefact intensity must be >= 0");
    if (movements == 0) throw ConfigError("motion needs at least one movement");
    if (!(max_translation >= 0.0) || !std::isfinite(max_translation)) {
        throw ConfigError("max translation must be >= 0");
    }
    if (ghosts < 2) throw ConfigError("ghost count must be at least 2");
    if (axis > 2) throw ConfigError("ghosting axis must be 0, 1 or 2");
    if (spikes == 0) throw ConfigError("spike count must be positive");
}

void ArtefactSpec::write(TextManifest& out, const std::string& prefix) const {
    out.set(prefix + "kind", artefact_name(kind));
    out.set_real(prefix + "intensity", intensity);
    out.set(prefix + "seed", seed);
    out.set(prefix + "movements", movements);
    out.set_real(prefix + "max_translation", max_translation);
    out.set(prefix + "ghosts", ghosts);
    out.set(prefix + "axis", axis);
    out.set(prefix + "spikes", spikes);
}

ArtefactSpec ArtefactSpec::read(const TextManifest& in, const std::string& prefix) {
    ArtefactSpec s;
    s.kind = parse_artefact(in.get(prefix + "kind"));
    s.intensity = in.get_real(prefix + "intensity");
    s.seed = in.get_size(prefix + "seed");
    s.movements = in.get_size(prefix + "movements");
    s.max_translation = in.get_real(prefix + "max_translation");
    s.ghosts = in.get_size(prefix + "ghosts");
    s.axis = in.get_size(prefix + "axis");
    s.spikes = in.get_size(prefix + "spikes");
    s.validate();
    return s;
}

std::vector<double> add_motion(const Dims3& dims, std::span<const double> volume, const ArtefactSpec& spec) {
    spec.validate();
    check_geometry(dims, volume);
    if (spec.intensity == 0.0) return {volume.begin(), volume.end()};
    Rng rng(spec.seed);
    std::vector<std::array<double, 3>> shifts(spec.movements);
    for (auto& t : shifts)
        for (auto& c : t) c = rng.uniform(-1.0, 1.0) * spec.max_translation * spec.intensity;

    ComplexVolume k = fft3(to_complex(dims, volume));
    const double two_pi = 2.0 * std::numbers::pi;
    const double inv_n = 1.0 / static_cast<double>(spec.movements);
    std::size_t idx = 0;
    for (std::size_t z = 0; z < dims.d; ++z)
        for (std::size_t y = 0; y < dims.h; ++y)
            for (std::size_t x = 0; x < dims.w; ++x, ++idx) {
                const std::array<std::size_t, 3> kk{z, y, x};
                Complex factor(0.0, 0.0);
                for (const auto& t : shifts) {
                    // Per-axis phase; at Nyquist the +/- ramps are averaged to a
                    // real cosine so the multiplier stays conjugate symmetric.
                    Complex axis_product(1.0, 0.0);
                    for (std::size_t a = 0; a < 3; ++a) {
                        const std::size_t n = dims[a];
                        const double f = signed_freq(kk[a], n) / static_cast<double>(n);
                        if (n > 1 && 2 * kk[a] == n) {
                            axis_product *= std::cos(two_pi * f * t[a]);
                        } else {
                            axis_product *= std::polar(1.0, -two_pi * f * t[a]);
                        }
                    }
                    factor += axis_product;
                }
                k.values[idx] *= factor * inv_n;
            }
    return real_part(ifft3(k));
}

std::vector<double> add_ghosting(const Dims3& dims, std::span<const double> volume, const ArtefactSpec& spec) {
    spec.validate();
    check_geometry(dims, volume);
    const std::size_t n = dims[spec.axis];
    if (n % spec.ghosts != 0) {
        throw ConfigError("ghost count " + std::to_string(spec.ghosts) + " must divide the extent " +
                          std::to_string(n) + " of the ghosting axis");
    }
    if (spec.intensity == 0.0) return {volume.begin(), volume.end()};
    ComplexVolume k = fft3(to_complex(dims, volume));
    const double keep = 1.0 - spec.intensity;
    std::size_t idx = 0;
    for (std::size_t z = 0; z < dims.d; ++z)
        for (std::size_t y = 0; y < dims.h; ++y)
            for (std::size_t x = 0; x < dims.w; ++x, ++idx) {
                const std::size_t kk = spec.axis == 0 ? z : spec.axis == 1 ? y : x;
                if (kk != 0 && kk % spec.ghosts == 0) k.values[idx] *= keep;
            }
    return real_part(ifft3(k));
}

std::vector<std::array<std::size_t, 3>> spike_locations(const Dims3& dims, const ArtefactSpec& spec) {
    Rng rng(spec.seed);
    std::vector<std::array<std::size_t, 3>> out;
    auto self_conjugate = [&](const std::array<std::size_t, 3>& k) {
        for (std::size_t a = 0; a < 3; ++a) {
            if ((dims[a] - k[a]) % dims[a] != k[a]) return false;
        }
        return true;
    };
    // With every extent <= 2 each bin is its own conjugate.
    if (dims.d < 4 && dims.h < 4 && dims.w < 4) throw ConfigError("volume " + dims_str(dims) + " has no room for a k-space spike");
    while (out.size() < spec.spikes) {
        const std::array<std::size_t, 3> k{rng.below(dims.d), rng.below(dims.h), rng.below(dims.w)};
        if (self_conjugate(k)) continue;
        out.push_back(k);
    }
    return out;
}

std::vector<double> add_spike(const Dims3& dims, std::span<const double> volume, const ArtefactSpec& spec) {
    spec.validate();
    check_geometry(dims, volume);
    if (spec.intensity == 0.0) return {volume.begin(), volume.end()};
    ComplexVolume k = fft3(to_complex(dims, volume));
    double norm2 = 0.0;
    for (const auto& c : k.values) norm2 += std::norm(c);
    const double magnitude = spec.intensity * std::sqrt(norm2);
    const auto locations = spike_locations(dims, spec);
    Rng phase_rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
    for (const auto& loc : locations) {
        const Complex value = std::polar(magnitude, 2.0 * std::numbers::pi * phase_rng.uniform());
        const std::size_t at = (loc[0] * dims.h + loc[1]) * dims.w + loc[2];
        const std::size_t mirror = (((dims.d - loc[0]) % dims.d) * dims.h + (dims.h - loc[1]) % dims.h) * dims.w +
                                   (dims.w - loc[2]) % dims.w;
        k.values[at] += value;
        k.values[mirror] += std::conj(value);
    }
    return real_part(ifft3(k));
}

std::vector<double> apply_artefact(const Dims3& dims, std::span<const double> volume, const ArtefactSpec& spec) {
    switch (spec.kind) {
        case ArtefactKind::motion: return add_motion(dims, volume, spec);
        case ArtefactKind::ghosting: return add_ghosting(dims, volume, spec);
        case ArtefactKind::spike: return add_spike(dims, volume, spec);
    }
    throw ConfigError("unknown artefact kind");
}

}  // namespace vtunet
