#include "vtunet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "vtunet/error.hpp"

namespace vtunet {

Tensor finite_diff(const ScalarFn& f, const Tensor& x, double step) {
    if (!(step > 0.0)) throw ConfigError("finite_diff: step must be positive");
    TapePause pause;
    std::vector<double> base(x.values().begin(), x.values().end());
    std::vector<double> grad(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        auto plus = base;
        auto minus = base;
        plus[i] += step;
        minus[i] -= step;
        const double fp = f(Tensor::from(x.shape(), std::move(plus)));
        const double fm = f(Tensor::from(x.shape(), std::move(minus)));
        grad[i] = (fp - fm) / (2.0 * step);
    }
    return Tensor::from(x.shape(), std::move(grad));
}

double finite_diff_at(const std::function<double()>& f, Tensor& leaf, std::size_t index, double step) {
    if (!(step > 0.0)) throw ConfigError("finite_diff_at: step must be positive");
    TapePause pause;
    auto v = leaf.mutable_values();
    const double saved = v[index];
    v[index] = saved + step;
    const double fp = f();
    v[index] = saved - step;
    const double fm = f();
    v[index] = saved;
    return (fp - fm) / (2.0 * step);
}

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

}  // namespace vtunet
