#pragma once

#include <cstddef>
#include <span>

// Numeric hot loops. The top-level functions are the OpenMP versions used by
// the ops layer; kernels::reference holds direct nested-loop versions that
// the tests and the benchmark compare against.
//
// Every output element is written by exactly one thread and accumulates its
// terms in a fixed order, so results do not depend on the thread count.

namespace hazefuse::kernels {

// NCHW input, OutC x InC x k x k weights, stride 1, zero "same" padding.
struct ConvGeometry {
    std::size_t batch = 1;
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t kernel = 1;  // 1 or 3
};

// C[b] = op(A[b]) * op(B[b]) where op(A) is m x k and op(B) is k x n.
// A is stored k x m when trans_a, B is stored n x k when trans_b.
struct GemmGeometry {
    std::size_t batch = 1;
    std::size_t m = 1;
    std::size_t n = 1;
    std::size_t k = 1;
    bool trans_a = false;
    bool trans_b = false;
};

// bias may be empty.
void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);
// dx += dL/dx
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx);
// dw += dL/dw, dbias += dL/dbias (dbias may be empty)
void conv2d_backward_params(const ConvGeometry& g, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> dbias);

void gemm_batched(const GemmGeometry& g, std::span<const double> a, std::span<const double> b,
                  std::span<double> c, bool accumulate);

// Worker count used by the parallel kernels.
int max_threads();
void set_max_threads(int n);

namespace reference {

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx);
void conv2d_backward_params(const ConvGeometry& g, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> dbias);
void gemm_batched(const GemmGeometry& g, std::span<const double> a, std::span<const double> b,
                  std::span<double> c, bool accumulate);

}  // namespace reference

}  // namespace hazefuse::kernels
