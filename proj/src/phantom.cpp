#include "vtunet/phantom.hpp"

#include "vtunet/error.hpp"
#include "vtunet/rng.hpp"

namespace vtunet {

Phantom make_phantom(const Dims3& dims, std::size_t channels, std::size_t classes, std::uint64_t seed) {
    if (classes < 2) throw ConfigError("phantom needs at least two classes");
    if (channels == 0) throw ConfigError("phantom needs at least one channel");
    Rng rng(seed);
    std::array<double, 3> centre{}, radius{};
    for (std::size_t a = 0; a < 3; ++a) {
        const double n = static_cast<double>(dims[a]);
        centre[a] = n * rng.uniform(0.4, 0.6);
        radius[a] = n * rng.uniform(0.25, 0.4);
    }
    std::vector<double> levels(classes * channels);
    for (auto& l : levels) l = rng.uniform(-1.0, 1.0);

    Phantom p;
    p.labels.dims = dims;
    p.labels.labels.resize(dims.volume());
    std::vector<double> image(dims.volume() * channels);
    std::size_t i = 0;
    for (std::size_t z = 0; z < dims.d; ++z)
        for (std::size_t y = 0; y < dims.h; ++y)
            for (std::size_t x = 0; x < dims.w; ++x, ++i) {
                const std::array<double, 3> pos{z + 0.5, y + 0.5, x + 0.5};
                double r2 = 0.0;
                for (std::size_t a = 0; a < 3; ++a) {
                    const double u = (pos[a] - centre[a]) / radius[a];
                    r2 += u * u;
                }
                // Label k inside normalised radius 1 - (k-1)/classes.
                std::size_t label = 0;
                for (std::size_t k = 1; k < classes; ++k) {
                    const double edge = 1.0 - static_cast<double>(k - 1) / static_cast<double>(classes);
                    if (r2 < edge * edge) label = k;
                }
                p.labels.labels[i] = static_cast<std::int32_t>(label);
                for (std::size_t c = 0; c < channels; ++c) {
                    image[i * channels + c] = levels[label * channels + c] + 0.1 * rng.uniform(-1.0, 1.0);
                }
            }
    p.image = Tensor::from({dims.d, dims.h, dims.w, channels}, std::move(image));
    return p;
}

}  // namespace vtunet
