#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hazefuse/tensor.hpp"

namespace hazefuse {

inline constexpr double kMinSceneDepth = 1.0;   // meters
inline constexpr double kMaxSceneDepth = 50.0;  // meters
inline constexpr double kTransmissionFloor = 1e-4;
inline constexpr double kDefaultAtmosphericLight = 0.9;

struct Scene {
    Tensor clear;  // 3 x H x W in [0, 1]
    Tensor depth;  // 1 x H x W meters
    std::uint64_t seed = 0;
    std::string id;

    std::size_t height() const { return clear.dim(1); }
    std::size_t width() const { return clear.dim(2); }
};

struct HazeParams {
    double beta = 0.1;  // 1/m
    std::array<double, 3> airlight{kDefaultAtmosphericLight, kDefaultAtmosphericLight,
                                   kDefaultAtmosphericLight};

    static HazeParams uniform(double beta, double a) { return {beta, {a, a, a}}; }
};

struct HazyPair {
    Tensor hazy;  // 3 x H x W
    std::string scene_id;
    HazeParams params;
};

void validate(const Scene& scene);
void validate(const HazeParams& params);

// Procedural scene: sky, a ground plane whose depth falls with image row, and
// depth-sorted rectangles/disks. difficulty 0 is a single frontal plane.
Scene generate_scene(std::uint64_t seed, std::size_t height, std::size_t width, int difficulty = 2);

Tensor transmission(const Tensor& depth, double beta);

// I = J t + A (1 - t), t = exp(-beta d).
HazyPair synthesize(const Scene& scene, const HazeParams& params);

// J = (I - A (1 - t)) / t. Throws SingularityError when any t < kTransmissionFloor.
Tensor invert(const HazyPair& hazy, const Tensor& depth, const HazeParams& params);

// The six default haze levels spanning [0.04, 0.20].
std::vector<double> default_betas();

std::vector<HazyPair> beta_sweep(const Scene& scene, const std::vector<double>& betas,
                                 double airlight = kDefaultAtmosphericLight);

}  // namespace hazefuse
