#include "vtunet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "vtunet/error.hpp"
#include "vtunet/text_manifest.hpp"

namespace vtunet {

namespace {

void check_pair(const BinaryMask& a, const BinaryMask& b, const char* what) {
    if (!(a.dims == b.dims) || a.voxels.size() != a.dims.volume() || b.voxels.size() != b.dims.volume()) {
        throw DimensionError(std::string(what) + ": mask dims " + dims_str(a.dims) + " and " + dims_str(b.dims) +
                             " differ");
    }
}

// One lower-envelope pass over a line of n samples with stride `stride`.
void edt_line(double* f, std::size_t n, std::size_t stride, double spacing, std::vector<double>& line,
              std::vector<double>& out, std::vector<std::size_t>& v, std::vector<double>& z) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) line[i] = f[i * stride];
    std::size_t k = 0;
    bool any = false;
    for (std::size_t q = 0; q < n; ++q) {
        if (line[q] == inf) continue;
        const double xq = spacing * static_cast<double>(q);
        if (!any) {
            v[0] = q;
            z[0] = -inf;
            z[1] = inf;
            k = 0;
            any = true;
            continue;
        }
        while (true) {
            const double xv = spacing * static_cast<double>(v[k]);
            const double s = ((line[q] + xq * xq) - (line[v[k]] + xv * xv)) / (2.0 * (xq - xv));
            if (s <= z[k]) {
                if (k == 0) {
                    v[0] = q;
                    z[0] = -inf;
                    z[1] = inf;
                    break;
                }
                --k;
                continue;
            }
            ++k;
            v[k] = q;
            z[k] = s;
            z[k + 1] = inf;
            break;
        }
    }
    if (!any) return;
    k = 0;
    for (std::size_t q = 0; q < n; ++q) {
        const double xq = spacing * static_cast<double>(q);
        while (z[k + 1] < xq) ++k;
        const double d = xq - spacing * static_cast<double>(v[k]);
        out[q] = d * d + line[v[k]];
    }
    for (std::size_t i = 0; i < n; ++i) f[i * stride] = out[i];
}

}  // namespace

std::size_t BinaryMask::count() const {
    std::size_t n = 0;
    for (auto v : voxels) n += v != 0;
    return n;
}

BinaryMask mask_of(const LabelVolume& labels, std::int32_t label) {
    BinaryMask m{labels.dims, std::vector<std::uint8_t>(labels.labels.size())};
    for (std::size_t i = 0; i < labels.labels.size(); ++i) m.voxels[i] = labels.labels[i] == label;
    return m;
}

RegionMasks compose_regions(const LabelVolume& lv) {
    if (lv.labels.size() != lv.dims.volume()) {
        throw DimensionError("label volume " + dims_str(lv.dims) + " holds " + std::to_string(lv.labels.size()) +
                             " labels");
    }
    RegionMasks r;
    for (BinaryMask* m : {&r.et, &r.tc, &r.wt}) *m = BinaryMask{lv.dims, std::vector<std::uint8_t>(lv.labels.size())};
    for (std::size_t i = 0; i < lv.labels.size(); ++i) {
        const std::int32_t l = lv.labels[i];
        if (l < 0 || l > kLabelNecrotic) {
            throw MetricError("unknown label " + std::to_string(l) + " (expected 0 background, 1 ED, 2 ET, 3 NET/NCR)");
        }
        r.et.voxels[i] = l == kLabelEnhancing;
        r.tc.voxels[i] = l == kLabelEnhancing || l == kLabelNecrotic;
        r.wt.voxels[i] = l != 0;
    }
    return r;
}

double dsc(const BinaryMask& pred, const BinaryMask& gt) {
    check_pair(pred, gt, "dsc");
    std::size_t p = 0, g = 0, both = 0;
    for (std::size_t i = 0; i < pred.voxels.size(); ++i) {
        const bool a = pred.voxels[i] != 0, b = gt.voxels[i] != 0;
        p += a;
        g += b;
        both += a && b;
    }
    if (p + g == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

std::vector<std::size_t> surface_voxels(const BinaryMask& m) {
    const Dims3& d = m.dims;
    std::vector<std::size_t> out;
    auto inside = [&](std::size_t z, std::size_t y, std::size_t x) { return m.voxels[(z * d.h + y) * d.w + x] != 0; };
    for (std::size_t z = 0; z < d.d; ++z)
        for (std::size_t y = 0; y < d.h; ++y)
            for (std::size_t x = 0; x < d.w; ++x) {
                if (!inside(z, y, x)) continue;
                const bool surface = z == 0 || z + 1 == d.d || y == 0 || y + 1 == d.h || x == 0 || x + 1 == d.w ||
                                     !inside(z - 1, y, x) || !inside(z + 1, y, x) || !inside(z, y - 1, x) ||
                                     !inside(z, y + 1, x) || !inside(z, y, x - 1) || !inside(z, y, x + 1);
                if (surface) out.push_back((z * d.h + y) * d.w + x);
            }
    return out;
}

std::vector<double> squared_distance_transform(const Dims3& dims, const std::vector<std::size_t>& seeds,
                                               const Spacing& spacing) {
    std::vector<double> f(dims.volume(), std::numeric_limits<double>::infinity());
    for (auto s : seeds) f[s] = 0.0;
    const std::size_t longest = std::max({dims.d, dims.h, dims.w});
    std::vector<double> line(longest), out(longest), z(longest + 1);
    std::vector<std::size_t> v(longest);
    for (std::size_t zz = 0; zz < dims.d; ++zz)
        for (std::size_t y = 0; y < dims.h; ++y)
            edt_line(&f[(zz * dims.h + y) * dims.w], dims.w, 1, spacing[2], line, out, v, z);
    for (std::size_t zz = 0; zz < dims.d; ++zz)
        for (std::size_t x = 0; x < dims.w; ++x)
            edt_line(&f[zz * dims.h * dims.w + x], dims.h, dims.w, spacing[1], line, out, v, z);
    for (std::size_t y = 0; y < dims.h; ++y)
        for (std::size_t x = 0; x < dims.w; ++x)
            edt_line(&f[y * dims.w + x], dims.d, dims.h * dims.w, spacing[0], line, out, v, z);
    return f;
}

double percentile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw MetricError("percentile of an empty sample");
    const double rank = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double hd95(const BinaryMask& pred, const BinaryMask& gt, const Spacing& spacing) {
    check_pair(pred, gt, "hd95");
    for (double s : spacing) {
        if (!(s > 0.0) || !std::isfinite(s)) throw MetricError("spacing must be positive and finite");
    }
    const auto sp = surface_voxels(pred);
    const auto sg = surface_voxels(gt);
    if (sp.empty() || sg.empty()) {
        throw MetricError(std::string("hd95 undefined: ") + (sp.empty() ? "prediction" : "ground truth") +
                          " mask is empty");
    }
    const auto to_gt = squared_distance_transform(gt.dims, sg, spacing);
    const auto to_pred = squared_distance_transform(pred.dims, sp, spacing);
    std::vector<double> pooled;
    pooled.reserve(sp.size() + sg.size());
    for (auto i : sp) pooled.push_back(std::sqrt(to_gt[i]));
    for (auto i : sg) pooled.push_back(std::sqrt(to_pred[i]));
    std::sort(pooled.begin(), pooled.end());
    return percentile_sorted(pooled, 0.95);
}

std::vector<RegionScore> evaluate_regions(const LabelVolume& pred, const LabelVolume& gt) {
    if (!(pred.dims == gt.dims)) {
        throw DimensionError("prediction " + dims_str(pred.dims) + " and ground truth " + dims_str(gt.dims) +
                             " differ in size");
    }
    const RegionMasks p = compose_regions(pred);
    const RegionMasks g = compose_regions(gt);
    std::vector<RegionScore> out;
    auto score = [&](const char* name, const BinaryMask& a, const BinaryMask& b) {
        RegionScore s;
        s.region = name;
        s.dsc = dsc(a, b);
        try {
            s.hd95 = hd95(a, b, gt.spacing);
        } catch (const MetricError& e) {
            s.hd95_defined = false;
            s.hd95 = std::numeric_limits<double>::quiet_NaN();
            s.note = a.count() == 0 && b.count() == 0 ? "both masks empty" : "one mask empty";
        }
        out.push_back(s);
    };
    score("WT", p.wt, g.wt);
    score("ET", p.et, g.et);
    score("TC", p.tc, g.tc);
    return out;
}

std::string evaluation_csv(const std::string& case_id, const std::vector<RegionScore>& scores) {
    std::ostringstream os;
    os << "case,region,dsc,hd95,note\n";
    double dsc_sum = 0.0, hd_sum = 0.0;
    std::size_t hd_n = 0;
    for (const auto& s : scores) {
        os << case_id << ',' << s.region << ',' << format_real(s.dsc) << ',';
        if (s.hd95_defined) {
            os << format_real(s.hd95);
            hd_sum += s.hd95;
            ++hd_n;
        } else {
            os << "nan";
        }
        os << ',' << s.note << '\n';
        dsc_sum += s.dsc;
    }
    os << case_id << ",average," << format_real(scores.empty() ? 0.0 : dsc_sum / static_cast<double>(scores.size()))
       << ',';
    if (hd_n) {
        os << format_real(hd_sum / static_cast<double>(hd_n));
    } else {
        os << "nan";
    }
    os << ',' << (hd_n == scores.size() ? "" : "hd95 averaged over defined regions") << '\n';
    return os.str();
}

}  // namespace vtunet
