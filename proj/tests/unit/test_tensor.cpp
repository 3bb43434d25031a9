#include <cmath>
#include <numeric>

#include "doctest.h"
#include "hazefuse/errors.hpp"
#include "hazefuse/ops.hpp"
#include "test_support.hpp"

using namespace hazefuse;
using hazefuse::testing::conv_oracle;
using hazefuse::testing::grad_check;
using hazefuse::testing::max_abs_diff;
using hazefuse::testing::random_tensor;

namespace {

// softmax(q k^T / sqrt(dh)) v per head with explicit token-major matrices.
std::vector<double> dense_mhsa(const Tensor& x, std::size_t heads, const ParamSet& p) {
    const std::size_t C = x.dim(1), T = x.dim(2) * x.dim(3), dh = C / heads;
    auto proj = [&](const char* n) {
        const Tensor& w = p.at(std::string("a.") + n + ".w");
        const Tensor& b = p.at(std::string("a.") + n + ".b");
        std::vector<std::vector<double>> m(T, std::vector<double>(C));
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t o = 0; o < C; ++o) {
                double acc = b[o];
                for (std::size_t c = 0; c < C; ++c) acc += w[o * C + c] * x[c * T + t];
                m[t][o] = acc;
            }
        return m;
    };
    auto Q = proj("q"), K = proj("k"), V = proj("v");
    std::vector<double> out(C * T);
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < T; ++i) {
            std::vector<double> logits(T);
            for (std::size_t j = 0; j < T; ++j) {
                double s = 0;
                for (std::size_t d = 0; d < dh; ++d) s += Q[i][h * dh + d] * K[j][h * dh + d];
                logits[j] = s / std::sqrt(double(dh));
            }
            double mx = *std::max_element(logits.begin(), logits.end()), z = 0;
            for (auto& l : logits) z += (l = std::exp(l - mx));
            for (std::size_t d = 0; d < dh; ++d) {
                double acc = 0;
                for (std::size_t j = 0; j < T; ++j) acc += logits[j] / z * V[j][h * dh + d];
                out[(h * dh + d) * T + i] = acc;
            }
        }
    return out;
}

ParamSet attention_params(std::size_t c, std::uint64_t seed) {
    ParamSet p;
    for (const char* n : {"q", "k", "v"}) {
        p.add(std::string("a.") + n + ".w", random_tensor({c, c, 1, 1}, seed++));
        p.add(std::string("a.") + n + ".b", random_tensor({c}, seed++));
    }
    return p;
}

}  // namespace

TEST_CASE("conv2d with zero weights is zero") {
    Tensor x = random_tensor({2, 3, 5, 5}, 1);
    Tensor y = conv2d(x, Tensor::zeros({4, 3, 3, 3}));
    for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("conv2d 1x1 scalar scaling") {
    Tensor y = conv2d(Tensor::ones({1, 1, 2, 2}), Tensor({1, 1, 1, 1}, 3.0));
    for (double v : y.data()) CHECK(v == 3.0);
}

TEST_CASE("conv2d impulse response is the flipped kernel") {
    Tensor x = Tensor::zeros({1, 1, 3, 3});
    x.mutable_data()[4] = 1.0;
    std::vector<double> k(9);
    std::iota(k.begin(), k.end(), 1.0);
    Tensor w({1, 1, 3, 3}, k);
    Tensor y = conv2d(x, w);
    for (std::size_t i = 0; i < 9; ++i) CHECK(y[i] == k[8 - i]);
    CHECK(max_abs_diff(y.data(), conv_oracle(x, w, {})) == 0.0);

    Tensor ones_out = conv2d(x, Tensor::ones({1, 1, 3, 3}));
    for (double v : ones_out.data()) CHECK(v == 1.0);
}

TEST_CASE("conv2d matches brute force on random inputs") {
    for (std::size_t k : {1u, 3u}) {
        Tensor x = random_tensor({2, 3, 6, 5}, 11 + k);
        Tensor w = random_tensor({4, 3, k, k}, 12 + k);
        Tensor b = random_tensor({4}, 13 + k);
        CHECK(max_abs_diff(conv2d(x, w, b).data(), conv_oracle(x, w, b)) < 1e-12);
    }
}

TEST_CASE("conv2d shape errors name both shapes") {
    Tensor x = random_tensor({1, 3, 4, 4}, 2);
    try {
        conv2d(x, Tensor::zeros({2, 4, 3, 3}));
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        std::string msg = e.what();
        CHECK(msg.find("[1x3x4x4]") != std::string::npos);
        CHECK(msg.find("[2x4x3x3]") != std::string::npos);
    }
    CHECK_THROWS_AS(conv2d(x, Tensor::zeros({2, 3, 5, 5})), DimensionError);
}

TEST_CASE("conv2d is linear without bias") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Tensor x = random_tensor({2, 3, 5, 6}, 100 + seed);
        Tensor y = random_tensor({2, 3, 5, 6}, 200 + seed);
        Tensor w = random_tensor({4, 3, 3, 3}, 300 + seed);
        const double a = 0.5 + seed, b = -1.25 * seed;
        Tensor lhs = conv2d(add(affine(x, a), affine(y, b)), w);
        Tensor rhs = add(affine(conv2d(x, w), a), affine(conv2d(y, w), b));
        CHECK(max_abs_diff(lhs.data(), rhs.data()) < 1e-10);
    }
}

TEST_CASE("mhsa single token returns the value projection") {
    ParamSet p = attention_params(4, 5);
    Tensor x = random_tensor({1, 4, 1, 1}, 9);
    Tensor y = mhsa(x, 2, p, "a");
    Tensor v = conv2d(x, p.at("a.v.w"), p.at("a.v.b"));
    CHECK(max_abs_diff(y.data(), v.data()) == 0.0);
}

TEST_CASE("mhsa with zero query weights averages values uniformly") {
    ParamSet p = attention_params(4, 5);
    for (double& v : p.at("a.q.w").mutable_data()) v = 0.0;
    for (double& v : p.at("a.q.b").mutable_data()) v = 0.0;
    Tensor x = random_tensor({1, 4, 2, 2}, 3);
    Tensor y = mhsa(x, 2, p, "a");
    Tensor v = conv2d(x, p.at("a.v.w"), p.at("a.v.b"));
    for (std::size_t c = 0; c < 4; ++c) {
        double mean = 0.25 * (v[c * 4] + v[c * 4 + 1] + v[c * 4 + 2] + v[c * 4 + 3]);
        for (std::size_t t = 0; t < 4; ++t) CHECK(y[c * 4 + t] == doctest::Approx(mean).epsilon(1e-14));
    }
}

TEST_CASE("mhsa matches a dense-matrix oracle") {
    ParamSet p = attention_params(4, 21);
    Tensor x = random_tensor({1, 4, 2, 2}, 22);
    CHECK(max_abs_diff(mhsa(x, 2, p, "a").data(), dense_mhsa(x, 2, p)) < 1e-10);
    CHECK_THROWS_AS(mhsa(x, 3, p, "a"), ConfigError);
}

TEST_CASE("scalar activations") {
    CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
    CHECK(gelu(Tensor::scalar(0.0)).item() == 0.0);
    Tensor s = sigmoid(Tensor({4}, {-800.0, -30.0, 30.0, 800.0}));
    for (double v : s.data()) CHECK((v >= 0.0 && v <= 1.0));
    CHECK(s[1] > 0.0);
    CHECK(s[2] < 1.0);
}

TEST_CASE("gap is the per-channel mean") {
    Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor g = gap(x);
    CHECK(g.shape() == Shape{1, 1, 1, 1});
    CHECK(g.item() == 2.5);
}

TEST_CASE("softmax slices sum to one even for huge logits") {
    Tensor x = random_tensor({3, 5, 4}, 8, -1e3, 1e3);
    for (std::size_t axis = 0; axis < 3; ++axis) {
        Tensor y = softmax(x, axis);
        const auto& s = x.shape();
        std::size_t inner = 1;
        for (std::size_t d = axis + 1; d < 3; ++d) inner *= s[d];
        std::size_t outer = x.numel() / (inner * s[axis]);
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < inner; ++i) {
                double total = 0;
                for (std::size_t j = 0; j < s[axis]; ++j) total += y[(o * s[axis] + j) * inner + i];
                CHECK(std::abs(total - 1.0) < 1e-12);
            }
    }
    Tensor u = softmax(Tensor::zeros({1, 4}), 1);
    for (double v : u.data()) CHECK(v == 0.25);
    CHECK_THROWS_AS(softmax(x, 3), DimensionError);
}

TEST_CASE("broadcast gates and mismatches") {
    Tensor x = random_tensor({2, 3, 4, 4}, 1);
    Tensor g = random_tensor({2, 3, 1, 1}, 2);
    Tensor m = random_tensor({2, 1, 4, 4}, 3);
    Tensor y = mul(x, g);
    CHECK(y[5] == x[5] * g[0]);
    CHECK(y[16 * 4 + 3] == x[16 * 4 + 3] * g[4]);
    Tensor z = mul(x, m);
    CHECK(z[16 + 7] == x[16 + 7] * m[7]);
    CHECK_THROWS_AS(mul(x, random_tensor({2, 2, 1, 1}, 4)), DimensionError);
    CHECK_THROWS_AS(add(x, random_tensor({3, 4, 4}, 4)), DimensionError);
}

TEST_CASE("non-finite values are rejected") {
    Tensor big({2}, {1e200, 1e200});
    CHECK_THROWS_AS(mul(big, big), NumericError);
}

TEST_CASE("backward of sum of squares is 2x") {
    Tensor x = random_tensor({3, 4}, 7).set_requires_grad(true);
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = sum(mul(x, x));
    tape.backward(loss);
    auto g = x.grad();
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 2.0 * x[i]);
}

TEST_CASE("backward of a detached constant leaves grads zero") {
    Tensor x = random_tensor({3}, 7).set_requires_grad(true);
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = sum(x.detach());
    tape.backward(loss);
    CHECK_FALSE(x.has_grad());
    for (double v : x.grad()) CHECK(v == 0.0);
}

TEST_CASE("backward rejects non-scalar losses") {
    Tensor x = random_tensor({3}, 7).set_requires_grad(true);
    Tape tape;
    TapeScope scope(tape);
    CHECK_THROWS_AS(tape.backward(affine(x, 2.0)), ContractError);
}

TEST_CASE("unreachable leaves receive no gradient") {
    Tensor x = random_tensor({3}, 1).set_requires_grad(true);
    Tensor y = random_tensor({3}, 2).set_requires_grad(true);
    Tape tape;
    TapeScope scope(tape);
    Tensor unused = mul(y, y);
    tape.backward(sum(x));
    CHECK_FALSE(y.has_grad());
    (void)unused;
}

TEST_CASE("primitive gradients match central differences") {
    const Tensor weights = random_tensor({2, 4, 3, 3}, 999);
    auto probe = [&](const Tensor& y) {
        // Random projection to a scalar keeps every output entry in play.
        Tensor wv = random_tensor(y.shape(), 1234);
        return sum(mul(y, wv));
    };
    Tensor x = random_tensor({2, 4, 3, 3}, 1);
    Tensor w3 = random_tensor({3, 4, 3, 3}, 2);
    Tensor w1 = random_tensor({3, 4, 1, 1}, 3);
    Tensor b = random_tensor({3}, 4);
    Tensor g = random_tensor({2, 4, 1, 1}, 5);
    Tensor m = random_tensor({2, 1, 3, 3}, 6);
    Tensor a3 = random_tensor({2, 3, 4}, 7);
    Tensor b3 = random_tensor({2, 4, 5}, 8);
    Tensor p4 = random_tensor({2, 4, 4, 4}, 9);

    struct Case {
        const char* name;
        std::function<Tensor()> f;
        std::vector<Tensor> leaves;
    };
    std::vector<Case> cases = {
        {"conv3", [&] { return probe(conv2d(x, w3, b)); }, {x, w3, b}},
        {"conv1", [&] { return probe(conv2d(x, w1, b)); }, {x, w1, b}},
        {"add_bcast", [&] { return probe(add(x, g)); }, {x, g}},
        {"sub_bcast", [&] { return probe(sub(m, x)); }, {x, m}},
        {"mul_bcast", [&] { return probe(mul(x, m)); }, {x, m}},
        {"affine", [&] { return probe(affine(x, -1.5, 0.3)); }, {x}},
        {"sigmoid", [&] { return probe(sigmoid(x)); }, {x}},
        {"gelu", [&] { return probe(gelu(x)); }, {x}},
        {"softmax1", [&] { return probe(softmax(x, 1)); }, {x}},
        {"softmax3", [&] { return probe(softmax(x, 3)); }, {x}},
        {"gap", [&] { return probe(gap(x)); }, {x}},
        {"pool", [&] { return probe(avg_pool2(p4)); }, {p4}},
        {"upsample", [&] { return probe(upsample2(x)); }, {x}},
        {"transpose", [&] { return probe(transpose(x, {0, 2, 3, 1})); }, {x}},
        {"reshape", [&] { return probe(reshape(x, {8, 9})); }, {x}},
        {"bmm", [&] { return probe(bmm(a3, b3)); }, {a3, b3}},
        {"bmm_ta", [&] { return probe(bmm(transpose(a3, {0, 2, 1}), b3, true, false)); }, {a3, b3}},
        {"bmm_tb", [&] { return probe(bmm(a3, transpose(b3, {0, 2, 1}), false, true)); }, {a3, b3}},
        {"bmm_tab",
         [&] { return probe(bmm(transpose(a3, {0, 2, 1}), transpose(b3, {0, 2, 1}), true, true)); },
         {a3, b3}},
        {"mse", [&] { return mse_loss(x, weights); }, {x}},
    };
    for (auto& c : cases) {
        INFO(c.name);
        auto r = grad_check(c.f, c.leaves);
        CHECK(r.max_rel_error < 1e-4);
        CHECK(r.checked > 0);
    }
}

TEST_CASE("mhsa gradients match central differences") {
    ParamSet p = attention_params(4, 31);
    Tensor x = random_tensor({2, 4, 3, 3}, 32);
    std::vector<Tensor> leaves{x};
    for (auto& [name, e] : p) leaves.push_back(e.tensor);
    Tensor wv = random_tensor({2, 4, 3, 3}, 33);
    auto r = grad_check([&] { return sum(mul(mhsa(x, 2, p, "a"), wv)); }, leaves);
    CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("identical inputs give bit-identical outputs") {
    ParamSet p = attention_params(4, 41);
    Tensor x = random_tensor({2, 4, 4, 4}, 42);
    Tensor a = mhsa(gelu(x), 2, p, "a");
    Tensor b = mhsa(gelu(x), 2, p, "a");
    CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST_CASE("param set iterates lexicographically and rejects duplicates") {
    ParamSet p;
    p.add("b.w", Tensor::zeros({1}));
    p.add("a.w", Tensor::zeros({2}));
    p.add("a.b", Tensor::zeros({3}));
    CHECK(p.names() == std::vector<std::string>{"a.b", "a.w", "b.w"});
    CHECK(p.numel() == 6);
    CHECK_THROWS_AS(p.add("a.w", Tensor::zeros({1})), ConfigError);
    p.set_trainable("a.", false);
    CHECK_FALSE(p.entry("a.w").trainable);
    CHECK(p.entry("b.w").trainable);
}
