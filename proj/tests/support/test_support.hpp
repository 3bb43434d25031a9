#pragma once

// Test-only helpers: seeded random tensors and a central finite-difference
// gradient oracle that never touches the tape.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "hazefuse/tensor.hpp"

namespace hazefuse::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// Direct cross-correlation with zero padding, written independently of the kernels.
inline std::vector<double> conv_oracle(const Tensor& x, const Tensor& w, const Tensor& bias) {
    const long B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const long O = w.dim(0), k = w.dim(2), pad = k / 2;
    std::vector<double> out(B * O * H * W, 0.0);
    for (long b = 0; b < B; ++b)
        for (long o = 0; o < O; ++o)
            for (long y = 0; y < H; ++y)
                for (long xx = 0; xx < W; ++xx) {
                    double acc = bias.defined() ? bias[o] : 0.0;
                    for (long c = 0; c < C; ++c)
                        for (long i = 0; i < k; ++i)
                            for (long j = 0; j < k; ++j) {
                                long sy = y + i - pad, sx = xx + j - pad;
                                if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                                acc += w[((o * C + c) * k + i) * k + j] * x[((b * C + c) * H + sy) * W + sx];
                            }
                    out[((b * O + o) * H + y) * W + xx] = acc;
                }
    return out;
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

// Relative error with a 1e-6 magnitude floor so entries whose true gradient is
// ~0 are judged on absolute error.
inline double rel_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / denom;
}

// loss_fn must rebuild the graph from the current values of `leaves` each
// call. Analytic gradients come from one taped pass; numeric ones from
// (f(x+h) - f(x-h)) / 2h. At most `max_per_leaf` evenly spaced entries of
// each leaf are probed.
inline GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> leaves,
                                  double h = 1e-5, std::size_t max_per_leaf = 1u << 30) {
    for (auto& t : leaves) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = loss_fn();
        tape.backward(loss);
    }
    for (auto& t : leaves) analytic.push_back(t.grad());

    GradCheckResult r;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto values = leaves[li].mutable_data();
        const std::size_t n = values.size();
        const std::size_t step = std::max<std::size_t>(1, n / std::min(n, max_per_leaf));
        for (std::size_t i = 0; i < n; i += step) {
            const double orig = values[i];
            values[i] = orig + h;
            const double fp = loss_fn().item();
            values[i] = orig - h;
            const double fm = loss_fn().item();
            values[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            r.max_rel_error = std::max(r.max_rel_error, rel_error(analytic[li][i], numeric));
            ++r.checked;
        }
    }
    return r;
}

}  // namespace hazefuse::testing
