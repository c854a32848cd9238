#include <cmath>
#include <random>

#include <doctest.h>

#include "sphnet/autodiff.hpp"
#include "sphnet/errors.hpp"
#include "sphnet/tensor.hpp"
#include "test_util.hpp"

using namespace sphnet;
using testutil::random_tensor;

TEST_CASE("tensor basics") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    t.at(1, 2) = 5.0;
    CHECK(t[5] == 5.0);
    CHECK(t.shape_str() == "[2x3]");
    CHECK_THROWS_AS(Tensor({2, -1}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), ShapeError);
    CHECK(Tensor::identity(2) == Tensor({2, 2}, {1, 0, 0, 1}));
}

TEST_CASE("matmul identity and hand oracle") {
    Tape tape;
    Var i2 = tape.constant(Tensor::identity(2));
    Var m = tape.constant(Tensor({2, 2}, {1, 2, 3, 4}));
    CHECK(tape.value(matmul(i2, m)) == Tensor({2, 2}, {1, 2, 3, 4}));

    // [[1,2],[3,4]] * [[5],[6]] = [[17],[39]]
    Var b = tape.constant(Tensor({2, 1}, {5, 6}));
    CHECK(tape.value(matmul(m, b)) == Tensor({2, 1}, {17, 39}));
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tape tape;
    Var a = tape.constant(Tensor({2, 3}));
    Var b = tape.constant(Tensor({2, 3}));
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("inner dims 3 vs 2"), ShapeError);
}

TEST_CASE("softmax rows") {
    Tape tape;
    Var z = tape.constant(Tensor({1, 2}, {0, 0}));
    CHECK(tape.value(softmax_rows(z)).values() == std::vector<double>{0.5, 0.5});

    Var l = tape.constant(Tensor({1, 2}, {std::log(2.0), 0.0}));
    const Tensor& out = tape.value(softmax_rows(l));
    CHECK(out[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(out[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    Var big = tape.constant(Tensor({1, 2}, {1000, 1000}));
    const Tensor& sb = tape.value(softmax_rows(big));
    CHECK(sb.all_finite());
    CHECK(sb[0] == 0.5);
    CHECK(sb[1] == 0.5);
}

TEST_CASE("softmax rows sum to 1 on random matrices") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor m = random_tensor({3, 7}, rng, -50.0, 50.0);
        Tensor s = softmax_rows_values(m);
        for (int i = 0; i < 3; ++i) {
            double sum = 0.0;
            for (int j = 0; j < 7; ++j) sum += s.at(i, j);
            CHECK(std::abs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("softmax jacobian-vector product against ones is zero") {
    // Rows sum to a constant, so seeding the output adjoint with all ones must
    // produce a zero input gradient.
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 20; ++trial) {
        Tape tape;
        Var x = tape.leaf(random_tensor({4, 6}, rng, -5.0, 5.0), true);
        Var loss = sum_all(softmax_rows(x));
        tape.backward(loss);
        const Tensor& g = tape.grad(x);
        for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(g[i]) < 1e-12);
    }
}

TEST_CASE("layer_norm hand oracles") {
    Tape tape;
    Var g1 = tape.constant(Tensor({2}, {1, 1}));
    Var b0 = tape.constant(Tensor({2}, {0, 0}));

    // already normalized input, eps -> 0
    Var x = tape.constant(Tensor({1, 2}, {1, -1}));
    const Tensor& y = tape.value(layer_norm(x, g1, b0, 0.0));
    CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(y[1] == doctest::Approx(-1.0).epsilon(1e-15));

    // constant input survives through the eps guard
    Var c = tape.constant(Tensor({1, 2}, {2, 2}));
    const Tensor& yc = tape.value(layer_norm(c, g1, b0, 1e-5));
    CHECK(yc[0] == 0.0);
    CHECK(yc[1] == 0.0);

    // x=[0,2], gamma=2, beta=1 -> [-1,3]
    Var x2 = tape.constant(Tensor({1, 2}, {0, 2}));
    Var g2 = tape.constant(Tensor({2}, {2, 2}));
    Var b1 = tape.constant(Tensor({2}, {1, 1}));
    const Tensor& y2 = tape.value(layer_norm(x2, g2, b1, 0.0));
    CHECK(y2[0] == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(y2[1] == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("backward analytic derivatives") {
    // f(x) = x^2 at x=3 -> 6
    {
        Tape tape;
        Var x = tape.leaf(Tensor::scalar(3.0), true);
        Var y = mul(x, x);
        tape.backward(y);
        CHECK(tape.grad(x)[0] == doctest::Approx(6.0));
    }
    // mean squared loss with yhat=[1], y=[0]: d/dyhat = 2
    {
        Tape tape;
        Var yhat = tape.leaf(Tensor::scalar(1.0), true);
        Var diff = sub(yhat, tape.constant(Tensor::scalar(0.0)));
        Var loss = mean_all(mul(diff, diff));
        tape.backward(loss);
        CHECK(tape.grad(yhat)[0] == doctest::Approx(2.0));
    }
}

TEST_CASE("backward rejects non-scalar loss") {
    Tape tape;
    Var x = tape.leaf(Tensor({1, 2}, {1, 2}), true);
    Var y = mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), ShapeError);
}

namespace {

// Finite-difference oracle: central differences on a scalar function of a flat
// parameter vector.
double central_diff(const std::function<double(const std::vector<double>&)>& f,
                    std::vector<double> theta, std::size_t i, double h = 1e-5) {
    theta[i] += h;
    const double fp = f(theta);
    theta[i] -= 2 * h;
    const double fm = f(theta);
    return (fp - fm) / (2 * h);
}

}  // namespace

TEST_CASE("backward matches finite differences on a random 2-layer network") {
    std::mt19937_64 rng(77);
    const int in = 4, hid = 5;
    Tensor w1 = random_tensor({in, hid}, rng);
    Tensor b1 = random_tensor({hid}, rng);
    Tensor w2 = random_tensor({hid, 1}, rng);
    Tensor x = random_tensor({1, in}, rng);

    auto flatten = [&](const Tensor& a, const Tensor& b, const Tensor& c) {
        std::vector<double> v;
        for (std::size_t i = 0; i < a.size(); ++i) v.push_back(a[i]);
        for (std::size_t i = 0; i < b.size(); ++i) v.push_back(b[i]);
        for (std::size_t i = 0; i < c.size(); ++i) v.push_back(c[i]);
        return v;
    };
    auto unflatten = [&](const std::vector<double>& v) {
        Tensor a({in, hid}), b({hid}), c({hid, 1});
        std::size_t k = 0;
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = v[k++];
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = v[k++];
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = v[k++];
        return std::tuple{a, b, c};
    };
    auto f = [&](const std::vector<double>& theta) {
        auto [a, b, c] = unflatten(theta);
        Tape tape;
        Var h = gelu(add_row(matmul(tape.constant(x), tape.constant(a)), tape.constant(b)));
        Var out = matmul(h, tape.constant(c));
        return tape.value(mean_all(mul(out, out)))[0];
    };

    Tape tape;
    Var vw1 = tape.leaf(w1, true);
    Var vb1 = tape.leaf(b1, true);
    Var vw2 = tape.leaf(w2, true);
    Var h = gelu(add_row(matmul(tape.constant(x), vw1), vb1));
    Var out = matmul(h, vw2);
    tape.backward(mean_all(mul(out, out)));

    const std::vector<double> theta = flatten(w1, b1, w2);
    std::vector<double> analytic;
    for (std::size_t i = 0; i < w1.size(); ++i) analytic.push_back(tape.grad(vw1)[i]);
    for (std::size_t i = 0; i < b1.size(); ++i) analytic.push_back(tape.grad(vb1)[i]);
    for (std::size_t i = 0; i < w2.size(); ++i) analytic.push_back(tape.grad(vw2)[i]);

    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double fd = central_diff(f, theta, i);
        const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
        CHECK(std::abs(fd - analytic[i]) / denom < 1e-4);
    }
}

TEST_CASE("backward matches finite differences on random primitive compositions") {
    // Chains softmax, layer_norm, gelu/relu, transpose, mean/sum and matmuls.
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor a0 = random_tensor({3, 4}, rng);
        Tensor g0 = random_tensor({4}, rng, 0.5, 1.5);
        Tensor b0 = random_tensor({4}, rng);
        Tensor w0 = random_tensor({4, 3}, rng);

        auto f = [&](const Tensor& a, const Tensor& g, const Tensor& b, const Tensor& w) {
            Tape tape;
            Var va = tape.constant(a);
            Var y = layer_norm(va, tape.constant(g), tape.constant(b), 1e-5);
            y = softmax_rows(matmul(y, tape.constant(w)));
            y = gelu(matmul(transpose(y), va));
            return tape.value(mean_all(mul(y, y)))[0];
        };

        Tape tape;
        Var va = tape.leaf(a0, true);
        Var vg = tape.leaf(g0, true);
        Var vb = tape.leaf(b0, true);
        Var vw = tape.leaf(w0, true);
        {
            Var y = layer_norm(va, vg, vb, 1e-5);
            y = softmax_rows(matmul(y, vw));
            y = gelu(matmul(transpose(y), va));
            tape.backward(mean_all(mul(y, y)));
        }

        auto probe = [&](Tensor& t, const Tensor& grad, std::size_t i) {
            const double saved = t[i];
            t[i] = saved + 1e-5;
            const double fp = f(a0, g0, b0, w0);
            t[i] = saved - 1e-5;
            const double fm = f(a0, g0, b0, w0);
            t[i] = saved;
            const double fd = (fp - fm) / 2e-5;
            const double ad = grad.empty() ? 0.0 : grad[i];
            const double denom = std::max({std::abs(fd), std::abs(ad), 1e-6});
            CHECK(std::abs(fd - ad) / denom < 1e-4);
        };
        probe(a0, tape.grad(va), rng() % a0.size());
        probe(g0, tape.grad(vg), rng() % g0.size());
        probe(b0, tape.grad(vb), rng() % b0.size());
        probe(w0, tape.grad(vw), rng() % w0.size());
    }
}

TEST_CASE("grad_check on a linear model is essentially exact") {
    ParamStore params;
    params.add("w", Tensor::scalar(1.7));
    LossBuilder build = [](Tape& tape, const std::vector<Var>& vars) {
        Var x = tape.constant(Tensor::scalar(3.0));
        return mul(vars[0], x);  // loss = w*x, d/dw = 3
    };
    CHECK(grad_check(build, params, 10) < 1e-6);
}

TEST_CASE("grad_check rejects zero probes") {
    ParamStore params;
    params.add("w", Tensor::scalar(1.0));
    LossBuilder build = [](Tape& tape, const std::vector<Var>& vars) { return mul(vars[0], vars[0]); };
    CHECK_THROWS_WITH_AS(grad_check(build, params, 0), doctest::Contains("probe_count must be"),
                         ConfigError);
}

TEST_CASE("operations are bit-deterministic") {
    std::mt19937_64 rng(5);
    Tensor a = random_tensor({7, 9}, rng, -3.0, 3.0);
    Tensor b = random_tensor({9, 4}, rng, -3.0, 3.0);
    Tensor g = random_tensor({9}, rng, 0.5, 2.0);
    Tensor be = random_tensor({9}, rng);

    CHECK(matmul_values(a, b) == matmul_values(a, b));
    CHECK(softmax_rows_values(a) == softmax_rows_values(a));
    CHECK(layer_norm_values(a, g, be, 1e-5) == layer_norm_values(a, g, be, 1e-5));

    auto run = [&] {
        Tape tape;
        Var va = tape.leaf(a, true);
        Var out = softmax_rows(matmul(va, tape.constant(b)));
        tape.backward(mean_all(mul(out, out)));
        return tape.grad(va);
    };
    CHECK(run() == run());
}

TEST_CASE("add_row broadcast and reductions") {
    Tape tape;
    Var m = tape.constant(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    Var r = tape.constant(Tensor({3}, {10, 20, 30}));
    CHECK(tape.value(add_row(m, r)) == Tensor({2, 3}, {11, 22, 33, 14, 25, 36}));
    CHECK(tape.value(mean_rows(m)) == Tensor({1, 3}, {2.5, 3.5, 4.5}));
    CHECK(tape.value(mean_all(m))[0] == doctest::Approx(3.5));
    CHECK(tape.value(sum_all(m))[0] == doctest::Approx(21.0));
    CHECK(tape.value(transpose(m)) == Tensor({3, 2}, {1, 4, 2, 5, 3, 6}));

    Var c = concat_cols({m, m});
    CHECK(tape.value(c) == Tensor({2, 6}, {1, 2, 3, 1, 2, 3, 4, 5, 6, 4, 5, 6}));
}
