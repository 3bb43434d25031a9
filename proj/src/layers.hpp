#pragma once

// Internal helpers shared by the fusion module and the dehazing network.

#include <cmath>
#include <string>

#include "hazefuse/ops.hpp"
#include "hazefuse/rng.hpp"
#include "hazefuse/tensor.hpp"

namespace hazefuse::detail {

// Registers <name>.w (out x in x k x k) and <name>.b (out). Weights are drawn
// from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) unless zero is set; biases start at 0.
inline void add_conv(ParamSet& p, const std::string& name, std::size_t in, std::size_t out, std::size_t k,
                     Rng& rng, bool zero = false) {
    Tensor w = Tensor::zeros({out, in, k, k});
    if (!zero) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in * k * k));
        // float32-representable so checkpoint rounding never moves a fresh init
        for (double& v : w.mutable_data()) v = static_cast<float>(rng.uniform(-bound, bound));
    }
    p.add(name + ".w", std::move(w));
    p.add(name + ".b", Tensor::zeros({out}));
}

inline std::size_t conv_param_count(std::size_t in, std::size_t out, std::size_t k) {
    return out * in * k * k + out;
}

inline Tensor conv(const Tensor& x, const ParamSet& p, const std::string& name) {
    return conv2d(x, p.at(name + ".w"), p.at(name + ".b"));
}

}  // namespace hazefuse::detail
