#include "hazefuse/kernels.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hazefuse::kernels {

namespace {

struct Tap {
    std::ptrdiff_t dy;
    std::ptrdiff_t dx;
    std::size_t y0, y1, x0, x1;  // output rows/cols for which the tap is in bounds
};

Tap make_tap(const ConvGeometry& g, std::size_t ky, std::size_t kx) {
    const auto pad = static_cast<std::ptrdiff_t>(g.kernel / 2);
    const auto h = static_cast<std::ptrdiff_t>(g.height);
    const auto w = static_cast<std::ptrdiff_t>(g.width);
    Tap t{};
    t.dy = static_cast<std::ptrdiff_t>(ky) - pad;
    t.dx = static_cast<std::ptrdiff_t>(kx) - pad;
    t.y0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -t.dy));
    t.y1 = static_cast<std::size_t>(std::min<std::ptrdiff_t>(h, h - t.dy));
    t.x0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -t.dx));
    t.x1 = static_cast<std::size_t>(std::min<std::ptrdiff_t>(w, w - t.dx));
    return t;
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_max_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
    const std::size_t hw = g.height * g.width;
    const std::size_t kk = g.kernel * g.kernel;
    const auto n = static_cast<std::int64_t>(g.batch * g.out_channels);

#pragma omp parallel for schedule(static)
    for (std::int64_t job = 0; job < n; ++job) {
        const std::size_t b = static_cast<std::size_t>(job) / g.out_channels;
        const std::size_t oc = static_cast<std::size_t>(job) % g.out_channels;
        double* out = y.data() + (b * g.out_channels + oc) * hw;
        std::fill(out, out + hw, bias.empty() ? 0.0 : bias[oc]);
        for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
            const double* in = x.data() + (b * g.in_channels + ic) * hw;
            const double* wk = w.data() + (oc * g.in_channels + ic) * kk;
            if (g.kernel == 1) {
                const double a = wk[0];
                for (std::size_t i = 0; i < hw; ++i) out[i] += a * in[i];
                continue;
            }
            for (std::size_t ky = 0; ky < g.kernel; ++ky) {
                for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                    const double a = wk[ky * g.kernel + kx];
                    const Tap t = make_tap(g, ky, kx);
                    for (std::size_t yy = t.y0; yy < t.y1; ++yy) {
                        double* orow = out + yy * g.width;
                        const double* irow =
                            in + static_cast<std::ptrdiff_t>(yy * g.width) + t.dy * static_cast<std::ptrdiff_t>(g.width) + t.dx;
                        for (std::size_t xx = t.x0; xx < t.x1; ++xx) orow[xx] += a * irow[xx];
                    }
                }
            }
        }
    }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx) {
    const std::size_t hw = g.height * g.width;
    const std::size_t kk = g.kernel * g.kernel;
    const auto n = static_cast<std::int64_t>(g.batch * g.in_channels);

#pragma omp parallel for schedule(static)
    for (std::int64_t job = 0; job < n; ++job) {
        const std::size_t b = static_cast<std::size_t>(job) / g.in_channels;
        const std::size_t ic = static_cast<std::size_t>(job) % g.in_channels;
        double* din = dx.data() + (b * g.in_channels + ic) * hw;
        for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
            const double* dout = dy.data() + (b * g.out_channels + oc) * hw;
            const double* wk = w.data() + (oc * g.in_channels + ic) * kk;
            if (g.kernel == 1) {
                const double a = wk[0];
                for (std::size_t i = 0; i < hw; ++i) din[i] += a * dout[i];
                continue;
            }
            for (std::size_t ky = 0; ky < g.kernel; ++ky) {
                for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                    const double a = wk[ky * g.kernel + kx];
                    const Tap t = make_tap(g, ky, kx);
                    for (std::size_t yy = t.y0; yy < t.y1; ++yy) {
                        const double* orow = dout + yy * g.width;
                        double* irow =
                            din + static_cast<std::ptrdiff_t>(yy * g.width) + t.dy * static_cast<std::ptrdiff_t>(g.width) + t.dx;
                        for (std::size_t xx = t.x0; xx < t.x1; ++xx) irow[xx] += a * orow[xx];
                    }
                }
            }
        }
    }
}

void conv2d_backward_params(const ConvGeometry& g, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> dbias) {
    const std::size_t hw = g.height * g.width;
    const std::size_t kk = g.kernel * g.kernel;
    const auto n = static_cast<std::int64_t>(g.out_channels * g.in_channels);

#pragma omp parallel for schedule(static)
    for (std::int64_t job = 0; job < n; ++job) {
        const std::size_t oc = static_cast<std::size_t>(job) / g.in_channels;
        const std::size_t ic = static_cast<std::size_t>(job) % g.in_channels;
        double* wk = dw.data() + (oc * g.in_channels + ic) * kk;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                const Tap t = make_tap(g, ky, kx);
                double acc = 0.0;
                for (std::size_t b = 0; b < g.batch; ++b) {
                    const double* dout = dy.data() + (b * g.out_channels + oc) * hw;
                    const double* in = x.data() + (b * g.in_channels + ic) * hw;
                    for (std::size_t yy = t.y0; yy < t.y1; ++yy) {
                        const double* orow = dout + yy * g.width;
                        const double* irow =
                            in + static_cast<std::ptrdiff_t>(yy * g.width) + t.dy * static_cast<std::ptrdiff_t>(g.width) + t.dx;
#pragma omp simd reduction(+ : acc)
                        for (std::size_t xx = t.x0; xx < t.x1; ++xx) acc += orow[xx] * irow[xx];
                    }
                }
                wk[ky * g.kernel + kx] += acc;
            }
        }
    }

    if (dbias.empty()) return;
    for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
        double acc = 0.0;
        for (std::size_t b = 0; b < g.batch; ++b) {
            const double* dout = dy.data() + (b * g.out_channels + oc) * hw;
            for (std::size_t i = 0; i < hw; ++i) acc += dout[i];
        }
        dbias[oc] += acc;
    }
}

void gemm_batched(const GemmGeometry& g, std::span<const double> a, std::span<const double> b,
                  std::span<double> c, bool accumulate) {
    const std::size_t a_stride = g.m * g.k;
    const std::size_t b_stride = g.k * g.n;
    const std::size_t c_stride = g.m * g.n;

    // Row-major k x n copy of B when it is stored transposed.
    std::vector<double> bt;
    if (g.trans_b) {
        bt.resize(g.batch * b_stride);
        for (std::size_t bi = 0; bi < g.batch; ++bi) {
            const double* src = b.data() + bi * b_stride;
            double* dst = bt.data() + bi * b_stride;
            for (std::size_t j = 0; j < g.n; ++j)
                for (std::size_t kk = 0; kk < g.k; ++kk) dst[kk * g.n + j] = src[j * g.k + kk];
        }
    }
    const double* bmat = g.trans_b ? bt.data() : b.data();
    const auto n = static_cast<std::int64_t>(g.batch * g.m);

#pragma omp parallel for schedule(static)
    for (std::int64_t job = 0; job < n; ++job) {
        const std::size_t bi = static_cast<std::size_t>(job) / g.m;
        const std::size_t i = static_cast<std::size_t>(job) % g.m;
        const double* am = a.data() + bi * a_stride;
        const double* bm = bmat + bi * b_stride;
        double* crow = c.data() + bi * c_stride + i * g.n;
        if (!accumulate) std::fill(crow, crow + g.n, 0.0);
        for (std::size_t kk = 0; kk < g.k; ++kk) {
            const double av = g.trans_a ? am[kk * g.m + i] : am[i * g.k + kk];
            const double* brow = bm + kk * g.n;
            for (std::size_t j = 0; j < g.n; ++j) crow[j] += av * brow[j];
        }
    }
}

namespace reference {

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
    const auto pad = static_cast<long>(g.kernel / 2);
    const auto h = static_cast<long>(g.height);
    const auto wd = static_cast<long>(g.width);
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t oc = 0; oc < g.out_channels; ++oc)
            for (long yy = 0; yy < h; ++yy)
                for (long xx = 0; xx < wd; ++xx) {
                    double acc = bias.empty() ? 0.0 : bias[oc];
                    for (std::size_t ic = 0; ic < g.in_channels; ++ic)
                        for (std::size_t ky = 0; ky < g.kernel; ++ky)
                            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                                const long iy = yy + static_cast<long>(ky) - pad;
                                const long ix = xx + static_cast<long>(kx) - pad;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                                acc += w[((oc * g.in_channels + ic) * g.kernel + ky) * g.kernel + kx] *
                                       x[((b * g.in_channels + ic) * g.height + iy) * g.width + ix];
                            }
                    y[((b * g.out_channels + oc) * g.height + yy) * g.width + xx] = acc;
                }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx) {
    const auto pad = static_cast<long>(g.kernel / 2);
    const auto h = static_cast<long>(g.height);
    const auto wd = static_cast<long>(g.width);
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t oc = 0; oc < g.out_channels; ++oc)
            for (long yy = 0; yy < h; ++yy)
                for (long xx = 0; xx < wd; ++xx) {
                    const double d = dy[((b * g.out_channels + oc) * g.height + yy) * g.width + xx];
                    for (std::size_t ic = 0; ic < g.in_channels; ++ic)
                        for (std::size_t ky = 0; ky < g.kernel; ++ky)
                            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                                const long iy = yy + static_cast<long>(ky) - pad;
                                const long ix = xx + static_cast<long>(kx) - pad;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                                dx[((b * g.in_channels + ic) * g.height + iy) * g.width + ix] +=
                                    d * w[((oc * g.in_channels + ic) * g.kernel + ky) * g.kernel + kx];
                            }
                }
}

void conv2d_backward_params(const ConvGeometry& g, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> dbias) {
    const auto pad = static_cast<long>(g.kernel / 2);
    const auto h = static_cast<long>(g.height);
    const auto wd = static_cast<long>(g.width);
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t oc = 0; oc < g.out_channels; ++oc)
            for (long yy = 0; yy < h; ++yy)
                for (long xx = 0; xx < wd; ++xx) {
                    const double d = dy[((b * g.out_channels + oc) * g.height + yy) * g.width + xx];
                    if (!dbias.empty()) dbias[oc] += d;
                    for (std::size_t ic = 0; ic < g.in_channels; ++ic)
                        for (std::size_t ky = 0; ky < g.kernel; ++ky)
                            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                                const long iy = yy + static_cast<long>(ky) - pad;
                                const long ix = xx + static_cast<long>(kx) - pad;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                                dw[((oc * g.in_channels + ic) * g.kernel + ky) * g.kernel + kx] +=
                                    d * x[((b * g.in_channels + ic) * g.height + iy) * g.width + ix];
                            }
                }
}

void gemm_batched(const GemmGeometry& g, std::span<const double> a, std::span<const double> b,
                  std::span<double> c, bool accumulate) {
    for (std::size_t bi = 0; bi < g.batch; ++bi)
        for (std::size_t i = 0; i < g.m; ++i)
            for (std::size_t j = 0; j < g.n; ++j) {
                double acc = 0.0;
                for (std::size_t kk = 0; kk < g.k; ++kk) {
                    const double av = g.trans_a ? a[bi * g.m * g.k + kk * g.m + i]
                                                : a[bi * g.m * g.k + i * g.k + kk];
                    const double bv = g.trans_b ? b[bi * g.k * g.n + j * g.k + kk]
                                                : b[bi * g.k * g.n + kk * g.n + j];
                    acc += av * bv;
                }
                double& out = c[bi * g.m * g.n + i * g.n + j];
                out = accumulate ? out + acc : acc;
            }
}

}  // namespace reference

}  // namespace hazefuse::kernels
