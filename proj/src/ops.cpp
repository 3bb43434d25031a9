#include "hazefuse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>

#include "hazefuse/errors.hpp"
#include "hazefuse/kernels.hpp"

namespace hazefuse {

namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;
using Backward = std::function<void(const std::vector<double>& gout)>;

// Wraps freshly computed values into a tensor and, when recording, appends a
// tape node whose closure receives the output gradient.
Tensor finish(Shape shape, std::vector<double> values, const char* op,
              std::initializer_list<const Tensor*> inputs, Backward bw) {
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
    }
    Tensor out(std::move(shape), std::move(values));
    Tape* tape = active_tape();
    if (!tape) return out;
    bool needs = false;
    for (const Tensor* t : inputs) needs = needs || (t->defined() && t->requires_grad());
    if (!needs) return out;

    auto& impl = out.impl();
    impl.requires_grad = true;
    impl.on_tape = true;
    Tape::Node node;
    for (const Tensor* t : inputs) {
        if (t->defined()) node.inputs.push_back(t->impl_ptr());
    }
    node.output = out.impl_ptr();
    TensorImpl* raw = node.output.get();
    node.backward = [raw, bw = std::move(bw)] { bw(raw->grad); };
    tape->record(std::move(node));
    return out;
}

bool wants_grad(const ImplPtr& p) { return p && p->requires_grad; }

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
    if (x.rank() != rank) {
        throw DimensionError(std::string(op) + " expects rank " + std::to_string(rank) + ", got " +
                             shape_str(x.shape()));
    }
}

// Odometer over an output shape producing the matching flat offsets in two
// broadcast operands.
struct BroadcastPlan {
    Shape out;
    std::vector<std::size_t> stride_a, stride_b;

    template <class Fn>
    void for_each(Fn&& fn) const {
        const std::size_t rank = out.size();
        const std::size_t n = shape_numel(out);
        std::vector<std::size_t> idx(rank, 0);
        std::size_t oa = 0, ob = 0;
        for (std::size_t i = 0; i < n; ++i) {
            fn(i, oa, ob);
            for (std::size_t d = rank; d-- > 0;) {
                ++idx[d];
                oa += stride_a[d];
                ob += stride_b[d];
                if (idx[d] < out[d]) break;
                oa -= stride_a[d] * out[d];
                ob -= stride_b[d] * out[d];
                idx[d] = 0;
            }
        }
    }
};

std::vector<std::size_t> contiguous_strides(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (std::size_t d = s.size(); d-- > 1;) st[d - 1] = st[d] * s[d];
    return st;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
    auto fail = [&] {
        return DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                              shape_str(b));
    };
    if (a.size() != b.size()) throw fail();
    BroadcastPlan p;
    p.out.resize(a.size());
    auto sa = contiguous_strides(a);
    auto sb = contiguous_strides(b);
    p.stride_a.resize(a.size());
    p.stride_b.resize(a.size());
    for (std::size_t d = 0; d < a.size(); ++d) {
        if (a[d] != b[d] && a[d] != 1 && b[d] != 1) throw fail();
        p.out[d] = std::max(a[d], b[d]);
        p.stride_a[d] = a[d] == 1 ? 0 : sa[d];
        p.stride_b[d] = b[d] == 1 ? 0 : sb[d];
    }
    return p;
}

enum class Binary { Add, Sub, Mul };

Tensor binary(const Tensor& a, const Tensor& b, Binary kind, const char* op) {
    const auto& av = a.data();
    const auto& bv = b.data();
    auto pa = a.impl_ptr();
    auto pb = b.impl_ptr();

    if (a.shape() == b.shape()) {
        std::vector<double> out(av.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            switch (kind) {
                case Binary::Add: out[i] = av[i] + bv[i]; break;
                case Binary::Sub: out[i] = av[i] - bv[i]; break;
                case Binary::Mul: out[i] = av[i] * bv[i]; break;
            }
        }
        return finish(a.shape(), std::move(out), op, {&a, &b}, [pa, pb, kind](const auto& g) {
            if (wants_grad(pa)) {
                auto& ga = pa->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i)
                    ga[i] += kind == Binary::Mul ? g[i] * pb->data[i] : g[i];
            }
            if (wants_grad(pb)) {
                auto& gb = pb->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    switch (kind) {
                        case Binary::Add: gb[i] += g[i]; break;
                        case Binary::Sub: gb[i] -= g[i]; break;
                        case Binary::Mul: gb[i] += g[i] * pa->data[i]; break;
                    }
                }
            }
        });
    }

    BroadcastPlan plan = plan_broadcast(a.shape(), b.shape(), op);
    std::vector<double> out(shape_numel(plan.out));
    plan.for_each([&](std::size_t i, std::size_t ia, std::size_t ib) {
        switch (kind) {
            case Binary::Add: out[i] = av[ia] + bv[ib]; break;
            case Binary::Sub: out[i] = av[ia] - bv[ib]; break;
            case Binary::Mul: out[i] = av[ia] * bv[ib]; break;
        }
    });
    return finish(plan.out, std::move(out), op, {&a, &b}, [pa, pb, kind, plan](const auto& g) {
        const bool ga_on = wants_grad(pa);
        const bool gb_on = wants_grad(pb);
        std::vector<double>* ga = ga_on ? &pa->grad_buffer() : nullptr;
        std::vector<double>* gb = gb_on ? &pb->grad_buffer() : nullptr;
        plan.for_each([&](std::size_t i, std::size_t ia, std::size_t ib) {
            if (ga) (*ga)[ia] += kind == Binary::Mul ? g[i] * pb->data[ib] : g[i];
            if (gb) {
                switch (kind) {
                    case Binary::Add: (*gb)[ib] += g[i]; break;
                    case Binary::Sub: (*gb)[ib] -= g[i]; break;
                    case Binary::Mul: (*gb)[ib] += g[i] * pa->data[ia]; break;
                }
            }
        });
    });
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias) {
    require_rank(x, 4, "conv2d input");
    require_rank(w, 4, "conv2d weight");
    const std::size_t k = w.dim(2);
    if ((k != 1 && k != 3) || w.dim(3) != k) {
        throw DimensionError("conv2d kernel must be 1x1 or 3x3, weight is " + shape_str(w.shape()));
    }
    if (x.dim(1) != w.dim(1)) {
        throw DimensionError("conv2d channel mismatch: input " + shape_str(x.shape()) + " vs weight " +
                             shape_str(w.shape()));
    }
    if (bias.defined() && (bias.numel() != w.dim(0))) {
        throw DimensionError("conv2d bias " + shape_str(bias.shape()) + " does not match weight " +
                             shape_str(w.shape()));
    }
    kernels::ConvGeometry g{x.dim(0), x.dim(1), w.dim(0), x.dim(2), x.dim(3), k};
    Shape out_shape{g.batch, g.out_channels, g.height, g.width};
    std::vector<double> out(shape_numel(out_shape));
    kernels::conv2d_forward(g, x.data(), w.data(),
                            bias.defined() ? bias.data() : std::span<const double>{}, out);

    auto px = x.impl_ptr();
    auto pw = w.impl_ptr();
    auto pb = bias.defined() ? bias.impl_ptr() : ImplPtr{};
    return finish(std::move(out_shape), std::move(out), "conv2d", {&x, &w, &bias},
                  [g, px, pw, pb](const auto& gout) {
                      if (wants_grad(px)) kernels::conv2d_backward_input(g, gout, pw->data, px->grad_buffer());
                      const bool dw = wants_grad(pw);
                      const bool db = wants_grad(pb);
                      if (dw) {
                          kernels::conv2d_backward_params(
                              g, gout, px->data, pw->grad_buffer(),
                              db ? std::span<double>(pb->grad_buffer()) : std::span<double>{});
                      } else if (db) {
                          std::vector<double> scratch(pw->data.size());
                          kernels::conv2d_backward_params(g, gout, px->data, scratch, pb->grad_buffer());
                      }
                  });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::Mul, "mul"); }

Tensor affine(const Tensor& x, double scale, double shift) {
    const auto& xv = x.data();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * xv[i] + shift;
    auto px = x.impl_ptr();
    return finish(x.shape(), std::move(out), "affine", {&x}, [px, scale](const auto& g) {
        if (!wants_grad(px)) return;
        auto& gx = px->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += scale * g[i];
    });
}

Tensor sigmoid(const Tensor& x) {
    const auto& xv = x.data();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = xv[i];
        // Split by sign so exp never overflows.
        if (v >= 0) {
            out[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            out[i] = e / (1.0 + e);
        }
    }
    auto px = x.impl_ptr();
    auto y = std::make_shared<std::vector<double>>(out);
    return finish(x.shape(), std::move(out), "sigmoid", {&x}, [px, y](const auto& g) {
        if (!wants_grad(px)) return;
        auto& gx = px->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*y)[i] * (1.0 - (*y)[i]);
    });
}

Tensor gelu(const Tensor& x) {
    const auto& xv = x.data();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
    auto px = x.impl_ptr();
    return finish(x.shape(), std::move(out), "gelu", {&x}, [px](const auto& g) {
        if (!wants_grad(px)) return;
        auto& gx = px->grad_buffer();
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = px->data[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            gx[i] += g[i] * (cdf + v * pdf);
        }
    });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    const Shape& s = x.shape();
    if (axis >= s.size()) {
        throw DimensionError("softmax axis " + std::to_string(axis) + " invalid for " + shape_str(s));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    const std::size_t n = s[axis];
    const auto& xv = x.data();
    std::vector<double> out(xv.size());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
            double total = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double e = std::exp(xv[base + j * inner] - mx);
                out[base + j * inner] = e;
                total += e;
            }
            for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
        }
    }
    auto px = x.impl_ptr();
    auto y = std::make_shared<std::vector<double>>(out);
    return finish(s, std::move(out), "softmax", {&x}, [px, y, outer, inner, n](const auto& g) {
        if (!wants_grad(px)) return;
        auto& gx = px->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * n * inner + in;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += g[base + j * inner] * (*y)[base + j * inner];
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t i = base + j * inner;
                    gx[i] += (*y)[i] * (g[i] - dot);
                }
            }
        }
    });
}

Tensor gap(const Tensor& x) {
    require_rank(x, 4, "gap");
    const std::size_t bc = x.dim(0) * x.dim(1);
    const std::size_t hw = x.dim(2) * x.dim(3);
    const auto& xv = x.data();
    std::vector<double> out(bc);
    for (std::size_t i = 0; i < bc; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < hw; ++j) acc += xv[i * hw + j];
        out[i] = acc / static_cast<double>(hw);
    }
    auto px = x.impl_ptr();
    return finish({x.dim(0), x.dim(1), 1, 1}, std::move(out), "gap", {&x}, [px, bc, hw](const auto& g) {
        if (!wants_grad(px)) return;
        auto& gx = px->grad_buffer();
        for (std::size_t i = 0; i < bc; ++i) {
            const double v = g[i] / static_cast<double>(hw);
            for (std::size_t j = 0; j < hw; ++j) gx[i * hw + j] += v;
        }
    });
}

Tensor avg_pool2(const Tensor& x) {
    require_rank(x, 4, "avg_pool2");
    const std::size_t h = x.dim(2), w = x.dim(3);
    if (h % 2 || w % 2) throw DimensionError("avg_pool2 needs even spatial size, got " + shape_str(x.shape()));
    const std::size_t bc = x.dim(0) * x.dim(1);
    const std::size_t oh = h / 2, ow = w / 2;
    const auto& xv = x.data();
    std::vector<double> out(bc * oh * ow);
    for (std::size_t p = 0; p < bc; ++p)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xx = 0; xx < ow; ++xx) {
                const double* r0 = xv.data() + p * h * w + 2 * y * w + 2 * xx;
                out[(p * oh + y) * ow + xx] = 0.25 * (r0[0] + r0[1] + r0[w] + r0[w + 1]);
            }
    auto px = x.impl_ptr();
    return finish({x.dim(0), x.dim(1), oh, ow}, std::move(out), "avg_pool2", {&x},
                  [px, bc, h, w, oh, ow](const auto& g) {
                      if (!wants_grad(px)) return;
                      auto& gx = px->grad_buffer();
                      for (std::size_t p = 0; p < bc; ++p)
                          for (std::size_t y = 0; y < oh; ++y)
                              for (std::size_t xx = 0; xx < ow; ++xx) {
                                  const double v = 0.25 * g[(p * oh + y) * ow + xx];
                                  double* r0 = gx.data() + p * h * w + 2 * y * w + 2 * xx;
                                  r0[0] += v;
                                  r0[1] += v;
                                  r0[w] += v;
                                  r0[w + 1] += v;
                              }
                  });
}

Tensor upsample2(const Tensor& x) {
    require_rank(x, 4, "upsample2");
    const std::size_t bc = x.dim(0) * x.dim(1);
    const std::size_t h = x.dim(2), w = x.dim(3);
    const std::size_t oh = 2 * h, ow = 2 * w;
    const auto& xv = x.data();
    std::vector<double> out(bc * oh * ow);
    for (std::size_t p = 0; p < bc; ++p)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xx = 0; xx < ow; ++xx)
                out[(p * oh + y) * ow + xx] = xv[(p * h + y / 2) * w + xx / 2];
    auto px = x.impl_ptr();
    return finish({x.dim(0), x.dim(1), oh, ow}, std::move(out), "upsample2", {&x},
                  [px, bc, h, w, oh, ow](const auto& g) {
                      if (!wants_grad(px)) return;
                      auto& gx = px->grad_buffer();
                      for (std::size_t p = 0; p < bc; ++p)
                          for (std::size_t y = 0; y < oh; ++y)
                              for (std::size_t xx = 0; xx < ow; ++xx)
                                  gx[(p * h + y / 2) * w + xx / 2] += g[(p * oh + y) * ow + xx];
                  });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
    }
    auto px = x.impl_ptr();
    std::vector<double> out(x.data().begin(), x.data().end());
    return finish(std::move(shape), std::move(out), "reshape", {&x}, [px](const auto& g) {
        if (!wants_grad(px)) return;
        auto& gx = px->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

Tensor transpose(const Tensor& x, const std::vector<std::size_t>& perm) {
    const Shape& s = x.shape();
    if (perm.size() != s.size()) {
        throw DimensionError("transpose permutation rank does not match " + shape_str(s));
    }
    std::vector<bool> seen(s.size(), false);
    Shape out_shape(s.size());
    for (std::size_t d = 0; d < perm.size(); ++d) {
        if (perm[d] >= s.size() || seen[perm[d]]) throw DimensionError("invalid transpose permutation");
        seen[perm[d]] = true;
        out_shape[d] = s[perm[d]];
    }
    // Walk the output in order; src strides are the input strides permuted.
    const auto in_strides = contiguous_strides(s);
    std::vector<std::size_t> src_strides(s.size());
    for (std::size_t d = 0; d < perm.size(); ++d) src_strides[d] = in_strides[perm[d]];
    BroadcastPlan plan{out_shape, src_strides, contiguous_strides(out_shape)};

    const auto& xv = x.data();
    std::vector<double> out(xv.size());
    plan.for_each([&](std::size_t i, std::size_t src, std::size_t) { out[i] = xv[src]; });
    auto px = x.impl_ptr();
    return finish(std::move(out_shape), std::move(out), "transpose", {&x}, [px, plan](const auto& g) {
        if (!wants_grad(px)) return;
        auto& gx = px->grad_buffer();
        plan.for_each([&](std::size_t i, std::size_t src, std::size_t) { gx[src] += g[i]; });
    });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    require_rank(a, 3, "bmm lhs");
    require_rank(b, 3, "bmm rhs");
    const std::size_t batch = a.dim(0);
    const std::size_t m = trans_a ? a.dim(2) : a.dim(1);
    const std::size_t k = trans_a ? a.dim(1) : a.dim(2);
    const std::size_t kb = trans_b ? b.dim(2) : b.dim(1);
    const std::size_t n = trans_b ? b.dim(1) : b.dim(2);
    if (b.dim(0) != batch || kb != k) {
        throw DimensionError("bmm shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    kernels::GemmGeometry g{batch, m, n, k, trans_a, trans_b};
    std::vector<double> out(batch * m * n);
    kernels::gemm_batched(g, a.data(), b.data(), out, false);

    auto pa = a.impl_ptr();
    auto pb = b.impl_ptr();
    return finish({batch, m, n}, std::move(out), "bmm", {&a, &b},
                  [pa, pb, batch, m, n, k, trans_a, trans_b](const auto& gc) {
                      // C = A B  =>  dA = dC B^T, dB = A^T dC, adjusted for stored layouts.
                      if (wants_grad(pa)) {
                          auto& ga = pa->grad_buffer();
                          if (!trans_a) {
                              kernels::gemm_batched({batch, m, k, n, false, !trans_b}, gc, pb->data, ga, true);
                          } else {
                              // stored A is k x m: dA_stored = B dC^T
                              kernels::gemm_batched({batch, k, m, n, trans_b, true}, pb->data, gc, ga, true);
                          }
                      }
                      if (wants_grad(pb)) {
                          auto& gb = pb->grad_buffer();
                          if (!trans_b) {
                              kernels::gemm_batched({batch, k, n, m, !trans_a, false}, pa->data, gc, gb, true);
                          } else {
                              // stored B is n x k: dB_stored = dC^T A
                              kernels::gemm_batched({batch, n, k, m, true, trans_a}, gc, pa->data, gb, true);
                          }
                      }
                  });
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    auto px = x.impl_ptr();
    return finish({1}, {acc}, "sum", {&x}, [px](const auto& g) {
        if (!wants_grad(px)) return;
        for (double& v : px->grad_buffer()) v += g[0];
    });
}

Tensor mean(const Tensor& x) { return affine(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) {
        throw DimensionError("l1_loss shape mismatch: " + shape_str(pred.shape()) + " vs " +
                             shape_str(target.shape()));
    }
    const auto& p = pred.data();
    const auto& t = target.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - t[i]);
    const double inv_n = 1.0 / static_cast<double>(p.size());
    auto pp = pred.impl_ptr();
    auto pt = target.impl_ptr();
    return finish({1}, {acc * inv_n}, "l1_loss", {&pred, &target}, [pp, pt, inv_n](const auto& g) {
        for (std::size_t i = 0; i < pp->data.size(); ++i) {
            const double d = pp->data[i] - pt->data[i];
            const double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
            if (wants_grad(pp)) pp->grad_buffer()[i] += g[0] * inv_n * s;
            if (wants_grad(pt)) pt->grad_buffer()[i] -= g[0] * inv_n * s;
        }
    });
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    Tensor d = sub(pred, target);
    return mean(mul(d, d));
}

Tensor mhsa(const Tensor& x, std::size_t heads, const ParamSet& params, std::string_view prefix) {
    require_rank(x, 4, "mhsa");
    const std::size_t b = x.dim(0), c = x.dim(1), tokens = x.dim(2) * x.dim(3);
    if (heads == 0 || c % heads != 0) {
        throw ConfigError("mhsa: channels " + std::to_string(c) + " not divisible by heads " +
                          std::to_string(heads));
    }
    const std::string p(prefix);
    const std::size_t dh = c / heads;
    // [B, C, H, W] -> [B*heads, dh, T]; channel blocks are contiguous per head.
    auto project = [&](const char* which) {
        Tensor y = conv2d(x, params.at(p + "." + which + ".w"), params.at(p + "." + which + ".b"));
        return reshape(y, {b * heads, dh, tokens});
    };
    Tensor q = project("q");
    Tensor k = project("k");
    Tensor v = project("v");
    Tensor logits = affine(bmm(q, k, true, false), 1.0 / std::sqrt(static_cast<double>(dh)));
    Tensor attn = softmax(logits, 2);               // [B*h, T, T], rows over keys
    Tensor out = bmm(v, attn, false, true);         // [B*h, dh, T]
    return reshape(out, x.shape());
}

}  // namespace hazefuse
