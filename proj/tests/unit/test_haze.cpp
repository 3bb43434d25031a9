#include <cmath>

#include "doctest.h"
#include "hazefuse/errors.hpp"
#include "hazefuse/haze.hpp"
#include "test_support.hpp"

using namespace hazefuse;

namespace {

Scene constant_scene(double j, double d, std::size_t n = 16) {
    return {Tensor({3, n, n}, j), Tensor({1, n, n}, d), 0, "const"};
}

// Local maxima of a coarse histogram, plateaus counted once.
int histogram_modes(std::span<const double> values, double lo, double hi, int bins) {
    std::vector<int> h(bins, 0);
    for (double v : values) {
        int b = static_cast<int>((v - lo) / (hi - lo) * bins);
        h[std::clamp(b, 0, bins - 1)]++;
    }
    int modes = 0;
    for (int i = 0; i < bins; ++i) {
        if (h[i] == 0) continue;
        const int left = i > 0 ? h[i - 1] : 0;
        int j = i;
        while (j + 1 < bins && h[j + 1] == h[i]) ++j;
        const int right = j + 1 < bins ? h[j + 1] : 0;
        if (h[i] > left && h[i] > right) ++modes;
        i = j;
    }
    return modes;
}

}  // namespace

TEST_CASE("scalar evaluation of the scattering model") {
    const Scene s = constant_scene(0.5, 10.0);
    const HazyPair p = synthesize(s, HazeParams::uniform(0.1, 1.0));
    const double t = std::exp(-1.0);
    CHECK(t == doctest::Approx(0.3678794).epsilon(1e-7));
    for (double v : p.hazy.data()) CHECK(v == doctest::Approx(0.8160603).epsilon(1e-7));
    for (double v : p.hazy.data()) CHECK(std::abs(v - (0.5 * t + (1.0 - t))) < 1e-15);
}

TEST_CASE("zero depth leaves the image untouched and huge depth gives the airlight") {
    Scene s = generate_scene(3, 16, 16);
    Scene flat{s.clear, Tensor({1, 16, 16}, 0.0), 3, "flat"};
    const HazyPair p = synthesize(flat, HazeParams::uniform(0.2, 0.9));
    CHECK(testing::max_abs_diff(p.hazy.data(), s.clear.data()) == 0.0);

    Scene far{s.clear, Tensor({1, 16, 16}, 1e4), 3, "far"};
    const HazyPair q = synthesize(far, HazeParams::uniform(0.2, 0.9));
    for (double v : q.hazy.data()) CHECK(v == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("invert round-trips synthesize") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Scene s = generate_scene(seed, 32, 32);
        for (double beta : default_betas()) {
            const HazeParams hp = HazeParams::uniform(beta, 0.9);
            const HazyPair p = synthesize(s, hp);
            const Tensor t = transmission(s.depth, beta);
            if (*std::min_element(t.data().begin(), t.data().end()) < kTransmissionFloor) {
                CHECK_THROWS_AS(invert(p, s.depth, hp), SingularityError);
                continue;
            }
            CHECK(testing::max_abs_diff(invert(p, s.depth, hp).data(), s.clear.data()) < 1e-10);
        }
    }
    const Scene s = generate_scene(5, 16, 16);
    const HazeParams none = HazeParams::uniform(0.0, 0.9);
    const HazyPair p = synthesize(s, none);
    CHECK(testing::max_abs_diff(invert(p, s.depth, none).data(), p.hazy.data()) == 0.0);
}

TEST_CASE("inversion refuses transmission below the floor") {
    const Scene s = constant_scene(0.3, 200.0);
    const HazeParams hp = HazeParams::uniform(0.2, 0.9);
    const HazyPair p = synthesize(s, hp);
    try {
        invert(p, s.depth, hp);
        FAIL("expected singularity error");
    } catch (const SingularityError& e) {
        CHECK(std::string(e.what()).find("256") != std::string::npos);
        CHECK(e.kind() == "singularity_error");
    }
}

TEST_CASE("hazy pixels stay between J and A and move monotonically with beta") {
    const Scene s = generate_scene(11, 32, 32);
    const auto betas = default_betas();
    const auto sweep = beta_sweep(s, betas, 0.9);
    REQUIRE(sweep.size() == betas.size());
    const std::size_t hw = 32 * 32;
    for (std::size_t i = 0; i < 3 * hw; ++i) {
        const double j = s.clear[i];
        double prev = j;
        for (const auto& p : sweep) {
            const double v = p.hazy[i];
            CHECK(v >= std::min(j, 0.9));
            CHECK(v <= std::max(j, 0.9));
            if (j < 0.9) CHECK(v > prev);
            if (j > 0.9) CHECK(v < prev);
            prev = v;
        }
    }
}

TEST_CASE("constant-depth sweep approaches the airlight") {
    const Scene s = constant_scene(0.2, 12.0);
    const auto sweep = beta_sweep(s, {0.04, 0.20}, 0.9);
    auto mean = [](const Tensor& t) {
        double a = 0;
        for (double v : t.data()) a += v;
        return a / t.numel();
    };
    CHECK(std::abs(mean(sweep[1].hazy) - 0.9) < std::abs(mean(sweep[0].hazy) - 0.9));
    CHECK(beta_sweep(s, {0.1}).size() == 1);
    CHECK_THROWS_AS(beta_sweep(s, {0.2, 0.1}), ConfigError);
    CHECK_THROWS_AS(beta_sweep(s, {}), ConfigError);
}

TEST_CASE("default sweep levels") {
    const auto b = default_betas();
    REQUIRE(b.size() == 6);
    CHECK(b.front() == 0.04);
    CHECK(b.back() == 0.20);
}

TEST_CASE("scene generation") {
    const Scene a = generate_scene(42, 32, 48);
    const Scene b = generate_scene(42, 32, 48);
    CHECK(testing::max_abs_diff(a.clear.data(), b.clear.data()) == 0.0);
    CHECK(testing::max_abs_diff(a.depth.data(), b.depth.data()) == 0.0);
    CHECK(a.id == "scene-42");
    validate(a);

    const Scene plane = generate_scene(9, 16, 16, 0);
    for (double d : plane.depth.data()) CHECK(d == plane.depth[0]);

    CHECK_THROWS_AS(generate_scene(1, 8, 32), ConfigError);
    CHECK_THROWS_AS(generate_scene(1, 32, 31), ConfigError);

    SUBCASE("seed 7 depth is multimodal") {
        const Scene s = generate_scene(7, 32, 32);
        CHECK(histogram_modes(s.depth.data(), 0.0, 50.0, 10) >= 2);
    }
    SUBCASE("depth increases toward the horizon on the ground plane") {
        const Scene s = generate_scene(123, 32, 32, 1);
        bool has_jump = false;
        for (std::size_t y = 0; y + 1 < 32; ++y)
            for (std::size_t x = 0; x + 1 < 32; ++x) {
                const double d = s.depth[y * 32 + x];
                if (std::abs(s.depth[y * 32 + x + 1] - d) > 1.0) has_jump = true;
            }
        CHECK(has_jump);
        for (double d : s.depth.data()) {
            CHECK(d >= kMinSceneDepth);
            CHECK(d <= kMaxSceneDepth);
        }
    }
}

TEST_CASE("haze parameter validation") {
    const Scene s = constant_scene(0.5, 5.0);
    CHECK_THROWS_AS(synthesize(s, HazeParams::uniform(-0.1, 0.9)), ConfigError);
    CHECK_THROWS_AS(synthesize(s, HazeParams::uniform(0.1, 0.0)), ConfigError);
    CHECK_THROWS_AS(synthesize(s, HazeParams::uniform(0.1, 1.5)), ConfigError);
}
