#include "vtunet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vtunet/error.hpp"
#include "vtunet/mac_counter.hpp"
#include "vtunet/parallel.hpp"

namespace vtunet {

namespace {

// Row-parallel GEMM kernels over `batch` independent problems. Each output
// row is owned by one worker and summed in a fixed order.

// C[m,n] += A[m,k] B[k,n]
void gemm_nn(std::size_t batch, std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t a_stride,
             const double* b, std::size_t b_stride, double* c) {
    parallel_for(batch * m, [=](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            const std::size_t bi = r / m, i = r % m;
            const double* ar = a + bi * a_stride + i * k;
            const double* bb = b + bi * b_stride;
            double* cr = c + r * n;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = ar[p];
                const double* br = bb + p * n;
                for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
            }
        }
    });
}

// C[m,n] += A[m,k] B[n,k]^T
void gemm_nt(std::size_t batch, std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t a_stride,
             const double* b, std::size_t b_stride, double* c) {
    parallel_for(batch * m, [=](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            const std::size_t bi = r / m, i = r % m;
            const double* ar = a + bi * a_stride + i * k;
            const double* bb = b + bi * b_stride;
            double* cr = c + r * n;
            for (std::size_t j = 0; j < n; ++j) {
                const double* br = bb + j * k;
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
                cr[j] += acc;
            }
        }
    });
}

// C[m,n] += sum over batches of A[k,m]^T B[k,n]. With c_stride == 0 every
// batch accumulates into the same C (shared-weight gradient).
void gemm_tn(std::size_t batch, std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t a_stride,
             const double* b, std::size_t b_stride, double* c, std::size_t c_stride) {
    if (c_stride == 0) {
        parallel_for(m, [=](std::size_t i0, std::size_t i1) {
            for (std::size_t i = i0; i < i1; ++i) {
                double* cr = c + i * n;
                for (std::size_t bi = 0; bi < batch; ++bi) {
                    const double* ab = a + bi * a_stride;
                    const double* bb = b + bi * b_stride;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double av = ab[p * m + i];
                        const double* br = bb + p * n;
                        for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
                    }
                }
            }
        });
        return;
    }
    parallel_for(batch * m, [=](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            const std::size_t bi = r / m, i = r % m;
            const double* ab = a + bi * a_stride;
            const double* bb = b + bi * b_stride;
            double* cr = c + bi * c_stride + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = ab[p * m + i];
                const double* br = bb + p * n;
                for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
            }
        }
    });
}

bool count_macs(std::uint64_t macs) {
    if (auto* counter = MacCounter::active()) {
        counter->add(macs);
        return counter->dry_run();
    }
    return false;
}

struct MatmulDims {
    Shape out_shape;
    std::size_t batch = 1, m = 0, n = 0, k = 0;
    bool shared_b = false;
};

MatmulDims matmul_dims(const char* op, const Tensor& a, const Tensor& b, bool b_transposed) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    auto fail = [&] {
        throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(as) + " and " + shape_str(bs));
    };
    if (as.size() < 2 || bs.size() < 2) fail();
    MatmulDims d;
    d.m = as[as.size() - 2];
    d.k = as.back();
    const std::size_t bk = b_transposed ? bs.back() : bs[bs.size() - 2];
    d.n = b_transposed ? bs[bs.size() - 2] : bs.back();
    if (bk != d.k) fail();
    const Shape a_batch(as.begin(), as.end() - 2);
    const Shape b_batch(bs.begin(), bs.end() - 2);
    if (b_batch.empty()) {
        d.shared_b = true;
    } else if (a_batch != b_batch) {
        fail();
    }
    d.batch = shape_numel(a_batch);
    d.out_shape = a_batch;
    d.out_shape.push_back(d.m);
    d.out_shape.push_back(d.n);
    return d;
}

// Strides of `shape` aligned to an output of rank `rank`, zero on broadcast axes.
std::vector<std::size_t> broadcast_strides(const Shape& shape, const Shape& out) {
    std::vector<std::size_t> strides(out.size(), 0);
    std::size_t stride = 1;
    const std::size_t offset = out.size() - shape.size();
    for (std::size_t i = shape.size(); i-- > 0;) {
        if (shape[i] != 1) strides[i + offset] = stride;
        stride *= shape[i];
    }
    return strides;
}

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t ai = i + a.size() >= rank ? a[i + a.size() - rank] : 1;
        const std::size_t bi = i + b.size() >= rank ? b[i + b.size() - rank] : 1;
        if (ai != bi && ai != 1 && bi != 1) {
            throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        }
        out[i] = std::max(ai, bi);
    }
    return out;
}

// Calls f(out_index, a_offset, b_offset) for every output element in order.
template <typename F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb,
                        F&& f) {
    const std::size_t rank = out.size();
    const std::size_t total = shape_numel(out);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t oa = 0, ob = 0;
    for (std::size_t i = 0; i < total; ++i) {
        f(i, oa, ob);
        for (std::size_t ax = rank; ax-- > 0;) {
            ++idx[ax];
            oa += sa[ax];
            ob += sb[ax];
            if (idx[ax] < out[ax]) break;
            oa -= sa[ax] * out[ax];
            ob -= sb[ax] * out[ax];
            idx[ax] = 0;
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto d = matmul_dims("matmul", a, b, false);
    std::vector<double> out(shape_numel(d.out_shape), 0.0);
    const std::size_t b_stride = d.shared_b ? 0 : d.k * d.n;
    if (!count_macs(static_cast<std::uint64_t>(d.batch) * d.m * d.n * d.k)) {
        gemm_nn(d.batch, d.m, d.n, d.k, a.values().data(), d.m * d.k, b.values().data(), b_stride, out.data());
    }
    return make_result("matmul", d.out_shape, std::move(out), {a, b},
                       [a, b, d, b_stride](std::span<const double> g, GradSink& sink) {
                           if (sink.needs(0)) {
                               // dA = dC B^T
                               gemm_nt(d.batch, d.m, d.k, d.n, g.data(), d.m * d.n, b.values().data(), b_stride,
                                       sink.buffer(0).data());
                           }
                           if (sink.needs(1)) {
                               // dB = A^T dC
                               gemm_tn(d.batch, d.k, d.n, d.m, a.values().data(), d.m * d.k, g.data(), d.m * d.n,
                                       sink.buffer(1).data(), b_stride);
                           }
                       });
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
    const auto d = matmul_dims("matmul_bt", a, b, true);
    std::vector<double> out(shape_numel(d.out_shape), 0.0);
    const std::size_t b_stride = d.shared_b ? 0 : d.n * d.k;
    if (!count_macs(static_cast<std::uint64_t>(d.batch) * d.m * d.n * d.k)) {
        gemm_nt(d.batch, d.m, d.n, d.k, a.values().data(), d.m * d.k, b.values().data(), b_stride, out.data());
    }
    return make_result("matmul_bt", d.out_shape, std::move(out), {a, b},
                       [a, b, d, b_stride](std::span<const double> g, GradSink& sink) {
                           if (sink.needs(0)) {
                               // dA = dC B
                               gemm_nn(d.batch, d.m, d.k, d.n, g.data(), d.m * d.n, b.values().data(), b_stride,
                                       sink.buffer(0).data());
                           }
                           if (sink.needs(1)) {
                               // dB = dC^T A
                               gemm_tn(d.batch, d.n, d.k, d.m, g.data(), d.m * d.n, a.values().data(), d.m * d.k,
                                       sink.buffer(1).data(), b_stride);
                           }
                       });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (ws.size() != 2 || xs.empty() || xs.back() != ws[0]) {
        throw DimensionError("linear: input " + shape_str(xs) + " does not match weight " + shape_str(ws));
    }
    const std::size_t in = ws[0], outc = ws[1];
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != outc)) {
        throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " + shape_str(ws));
    }
    const std::size_t rows = x.numel() / in;
    Shape out_shape = xs;
    out_shape.back() = outc;
    std::vector<double> out(rows * outc, 0.0);
    if (!count_macs(static_cast<std::uint64_t>(rows) * in * outc)) {
        if (bias.defined()) {
            const auto bv = bias.values();
            for (std::size_t r = 0; r < rows; ++r) std::copy(bv.begin(), bv.end(), out.begin() + r * outc);
        }
        gemm_nn(1, rows, outc, in, x.values().data(), 0, w.values().data(), 0, out.data());
    }
    std::vector<Tensor> inputs{x, w};
    if (bias.defined()) inputs.push_back(bias);
    return make_result("linear", std::move(out_shape), std::move(out), std::move(inputs),
                       [x, w, rows, in, outc, has_bias = bias.defined()](std::span<const double> g,
                                                                          GradSink& sink) {
                           if (sink.needs(0)) {
                               gemm_nt(1, rows, in, outc, g.data(), 0, w.values().data(), 0, sink.buffer(0).data());
                           }
                           if (sink.needs(1)) {
                               gemm_tn(1, in, outc, rows, x.values().data(), 0, g.data(), 0, sink.buffer(1).data(),
                                       0);
                           }
                           if (has_bias && sink.needs(2)) {
                               auto gb = sink.buffer(2);
                               for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t j = 0; j < outc; ++j) gb[j] += g[r * outc + j];
                               }
                           }
                       });
}


Tensor add(const Tensor& a, const Tensor& b) {
    Shape out_shape = broadcast_shape("add", a.shape(), b.shape());
    const auto sa = broadcast_strides(a.shape(), out_shape);
    const auto sb = broadcast_strides(b.shape(), out_shape);
    std::vector<double> out(shape_numel(out_shape));
    const auto av = a.values();
    const auto bv = b.values();
    for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = av[ia] + bv[ib]; });
    return make_result("add", out_shape, std::move(out), {a, b},
                       [out_shape, sa, sb](std::span<const double> g, GradSink& sink) {
                           const bool ga = sink.needs(0), gb = sink.needs(1);
                           std::span<double> da, db;
                           if (ga) da = sink.buffer(0);
                           if (gb) db = sink.buffer(1);
                           for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
                               if (ga) da[ia] += g[i];
                               if (gb) db[ib] += g[i];
                           });
                       });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    Shape out_shape = broadcast_shape("mul", a.shape(), b.shape());
    const auto sa = broadcast_strides(a.shape(), out_shape);
    const auto sb = broadcast_strides(b.shape(), out_shape);
    std::vector<double> out(shape_numel(out_shape));
    const auto av = a.values();
    const auto bv = b.values();
    for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = av[ia] * bv[ib]; });
    return make_result("mul", out_shape, std::move(out), {a, b},
                       [a, b, out_shape, sa, sb](std::span<const double> g, GradSink& sink) {
                           const bool ga = sink.needs(0), gb = sink.needs(1);
                           std::span<double> da, db;
                           if (ga) da = sink.buffer(0);
                           if (gb) db = sink.buffer(1);
                           const auto av = a.values();
                           const auto bv = b.values();
                           for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
                               if (ga) da[ia] += g[i] * bv[ib];
                               if (gb) db[ib] += g[i] * av[ia];
                           });
                       });
}

Tensor scale(const Tensor& x, double factor) {
    std::vector<double> out(x.values().begin(), x.values().end());
    for (auto& v : out) v *= factor;
    return make_result("scale", x.shape(), std::move(out), {x}, [factor](std::span<const double> g, GradSink& sink) {
        auto dx = sink.buffer(0);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += factor * g[i];
    });
}

Tensor softmax_last(const Tensor& x) {
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.numel() / n;
    const auto xv = x.values();
    std::vector<double> out(x.numel());
    parallel_for(rows, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            const double* xr = xv.data() + r * n;
            double* yr = out.data() + r * n;
            double mx = xr[0];
            for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
            double total = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                yr[j] = std::exp(xr[j] - mx);
                total += yr[j];
            }
            for (std::size_t j = 0; j < n; ++j) yr[j] /= total;
        }
    }, 64);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (std::isnan(xv[i])) throw NumericError("softmax_last: NaN in input");
    }
    auto shared = std::make_shared<std::vector<double>>(out);
    return make_result("softmax_last", x.shape(), std::move(out), {x},
                       [shared, n, rows](std::span<const double> g, GradSink& sink) {
                           auto dx = sink.buffer(0);
                           const auto& y = *shared;
                           for (std::size_t r = 0; r < rows; ++r) {
                               double dot = 0.0;
                               for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
                               for (std::size_t j = 0; j < n; ++j) dx[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
                           }
                       });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const std::size_t c = x.shape().back();
    if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
        throw DimensionError("layer_norm: input " + shape_str(x.shape()) + " with gamma " + shape_str(gamma.shape()) +
                             " and beta " + shape_str(beta.shape()));
    }
    if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
    const std::size_t rows = x.numel() / c;
    const auto xv = x.values();
    const auto gv = gamma.values();
    const auto bv = beta.values();
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv.data() + r * c;
        double mu = 0.0;
        for (std::size_t j = 0; j < c; ++j) mu += xr[j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(c);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t j = 0; j < c; ++j) {
            const double h = (xr[j] - mu) * is;
            (*xhat)[r * c + j] = h;
            out[r * c + j] = gv[j] * h + bv[j];
        }
    }
    return make_result("layer_norm", x.shape(), std::move(out), {x, gamma, beta},
                       [gamma, xhat, inv_std, rows, c](std::span<const double> g, GradSink& sink) {
                           const auto gv = gamma.values();
                           const auto& h = *xhat;
                           if (sink.needs(0)) {
                               auto dx = sink.buffer(0);
                               for (std::size_t r = 0; r < rows; ++r) {
                                   double m1 = 0.0, m2 = 0.0;
                                   for (std::size_t j = 0; j < c; ++j) {
                                       const double dh = g[r * c + j] * gv[j];
                                       m1 += dh;
                                       m2 += dh * h[r * c + j];
                                   }
                                   m1 /= static_cast<double>(c);
                                   m2 /= static_cast<double>(c);
                                   for (std::size_t j = 0; j < c; ++j) {
                                       const double dh = g[r * c + j] * gv[j];
                                       dx[r * c + j] += (*inv_std)[r] * (dh - m1 - h[r * c + j] * m2);
                                   }
                               }
                           }
                           if (sink.needs(1)) {
                               auto dg = sink.buffer(1);
                               for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t j = 0; j < c; ++j) dg[j] += g[r * c + j] * h[r * c + j];
                               }
                           }
                           if (sink.needs(2)) {
                               auto db = sink.buffer(2);
                               for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t j = 0; j < c; ++j) db[j] += g[r * c + j];
                               }
                           }
                       });
}

Tensor gelu(const Tensor& x) {
    const auto xv = x.values();
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
    }
    return make_result("gelu", x.shape(), std::move(out), {x}, [x](std::span<const double> g, GradSink& sink) {
        auto dx = sink.buffer(0);
        const auto xv = x.values();
        const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = xv[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            dx[i] += g[i] * (cdf + v * pdf);
        }
    });
}

Tensor gather(const Tensor& x, Shape out_shape, GatherIndex index) {
    if (!index || index->size() != shape_numel(out_shape)) {
        throw DimensionError("gather: index length does not match output shape " + shape_str(out_shape));
    }
    const auto xv = x.values();
    const auto& idx = *index;
    std::vector<double> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= xv.size()) throw DimensionError("gather: index out of range for " + shape_str(x.shape()));
        out[i] = xv[idx[i]];
    }
    return make_result("gather", std::move(out_shape), std::move(out), {x},
                       [index](std::span<const double> g, GradSink& sink) {
                           auto dx = sink.buffer(0);
                           const auto& idx = *index;
                           for (std::size_t i = 0; i < idx.size(); ++i) dx[idx[i]] += g[i];
                       });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    std::vector<double> out(x.values().begin(), x.values().end());
    return make_result("reshape", std::move(shape), std::move(out), {x}, [](std::span<const double> g, GradSink& sink) {
        auto dx = sink.buffer(0);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.values()) total += v;
    return make_result("sum", {1}, {total}, {x}, [](std::span<const double> g, GradSink& sink) {
        auto dx = sink.buffer(0);
        for (auto& v : dx) v += g[0];
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

}  // namespace vtunet
