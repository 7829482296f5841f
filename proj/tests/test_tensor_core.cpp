#include <doctest.h>

#include <cmath>
#include <vector>

#include "softworld/autograd.hpp"
#include "softworld/errors.hpp"
#include "softworld/nn.hpp"
#include "softworld/rng.hpp"
#include "test_util.hpp"

using namespace softworld;
using namespace softworld::ag;
using swtest::bit_equal;
using swtest::check_close;
using swtest::check_gradients;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, scale);
    return t;
}

}  // namespace

TEST_SUITE_BEGIN("tensor_core");

TEST_CASE("affine: identity weights pass input through") {
    Rng rng(11);
    Tape t;
    Tensor xv = random_tensor({4, 3}, rng);
    Var x = t.input(xv);
    Var w = t.input(Tensor::identity(3));
    Var b = t.input(Tensor::zeros({3}));
    Var y = affine(x, w, b);
    CHECK(bit_equal(y.val(), xv));
}

TEST_CASE("affine: zero weights broadcast the bias") {
    Rng rng(12);
    Tape t;
    Var x = t.input(random_tensor({5, 4}, rng));
    Var w = t.input(Tensor::zeros({4, 2}));
    Var b = t.input(Tensor({2}, {0.5, -1.25}));
    Var y = affine(x, w, b);
    for (int64_t r = 0; r < 5; ++r) {
        CHECK(y.val().at(r, 0) == 0.5);
        CHECK(y.val().at(r, 1) == -1.25);
    }
}

TEST_CASE("affine: hand-computed product") {
    Tape t;
    Var x = t.input(Tensor::matrix({{1.0, 2.0}}));
    Var w = t.input(Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}}));
    Var b = t.input(Tensor({2}, {3.0, 4.0}));
    Var y = affine(x, w, b);
    CHECK(y.val()[0] == 4.0);
    CHECK(y.val()[1] == 6.0);
}

TEST_CASE("affine: shape mismatch raises dimension error") {
    Tape t;
    Var x = t.input(Tensor::zeros({2, 3}));
    Var w = t.input(Tensor::zeros({4, 2}));
    Var b = t.input(Tensor::zeros({2}));
    CHECK_THROWS_AS(affine(x, w, b), ShapeError);
}

TEST_CASE("layer_norm: constant row collapses to bias") {
    Tape t;
    Var x = t.input(Tensor::full({2, 6}, 3.7));
    Var gain = t.input(Tensor::full({6}, 1.0));
    Var bias = t.input(Tensor::full({6}, -0.75));
    Var y = layer_norm(x, gain, bias, 1e-5);
    for (int64_t i = 0; i < y.val().size(); ++i) CHECK(y.val()[i] == doctest::Approx(-0.75));
}

TEST_CASE("layer_norm: already-normalized row is preserved as eps -> 0") {
    Tape t;
    Var x = t.input(Tensor::matrix({{1.0, -1.0}}));
    Var gain = t.input(Tensor({2}, {1.0, 1.0}));
    Var bias = t.input(Tensor({2}, {0.0, 0.0}));
    Var y = layer_norm(x, gain, bias, 1e-12);
    CHECK(y.val()[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(y.val()[1] == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("layer_norm: matches independent scalar-loop recomputation") {
    Rng rng(13);
    const double eps = 1e-5;
    Tensor xv = random_tensor({3, 7}, rng);
    Tensor gv = random_tensor({7}, rng);
    Tensor bv = random_tensor({7}, rng);
    Tape t;
    Var y = layer_norm(t.input(xv), t.input(gv), t.input(bv), eps);

    for (int64_t r = 0; r < 3; ++r) {
        double mean = 0.0;
        for (int64_t j = 0; j < 7; ++j) mean += xv.at(r, j);
        mean /= 7.0;
        double var = 0.0;
        for (int64_t j = 0; j < 7; ++j) var += (xv.at(r, j) - mean) * (xv.at(r, j) - mean);
        var /= 7.0;
        for (int64_t j = 0; j < 7; ++j) {
            const double expect = gv[j] * (xv.at(r, j) - mean) / std::sqrt(var + eps) + bv[j];
            CHECK(y.val().at(r, j) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

namespace {

struct AttentionFixture {
    Parameter wqkv;
    Parameter bqkv;
    Parameter wo;
    Parameter bo;
    int heads;

    AttentionFixture(int64_t d, int heads_, Rng& rng)
        : wqkv("wqkv", nn::scaled_normal({d, 3 * d}, rng)),
          bqkv("bqkv", Tensor::zeros({3 * d})),
          wo("wo", nn::scaled_normal({d, d}, rng)),
          bo("bo", Tensor::zeros({d})),
          heads(heads_) {}

    Var forward(Tape& t, Var x) {
        return causal_attention(x, t.param(wqkv), t.param(bqkv), t.param(wo), t.param(bo), heads);
    }
    Tensor run(const Tensor& x) {
        Tape t(false);
        return forward(t, t.input(x)).val();
    }
};

}  // namespace

TEST_CASE("causal_attention: single token equals projected value vector") {
    Rng rng(14);
    const int64_t d = 8;
    AttentionFixture att(d, 4, rng);
    Tensor x = random_tensor({1, d}, rng);
    Tensor y = att.run(x);

    // softmax over one element is 1, so output = (x wqkv).v_slice * wo + bo
    Tensor v({1, d});
    for (int64_t j = 0; j < d; ++j) {
        double acc = att.bqkv.value[2 * d + j];
        for (int64_t k = 0; k < d; ++k) acc += x[k] * att.wqkv.value.at(k, 2 * d + j);
        v[j] = acc;
    }
    Tensor expect({1, d});
    for (int64_t j = 0; j < d; ++j) {
        double acc = att.bo.value[j];
        for (int64_t k = 0; k < d; ++k) acc += v[k] * att.wo.value.at(k, j);
        expect[j] = acc;
    }
    check_close(y, expect, 1e-12);
}

TEST_CASE("causal_attention: zeroed query/key projections give prefix means") {
    Rng rng(15);
    const int64_t d = 6, T = 5;
    AttentionFixture att(d, 2, rng);
    // zero the q and k blocks; identity out-projection exposes raw head output
    for (int64_t k = 0; k < d; ++k)
        for (int64_t j = 0; j < 2 * d; ++j) att.wqkv.value.at(k, j) = 0.0;
    att.wo.value = Tensor::identity(d);
    att.bo.value = Tensor::zeros({d});

    Tensor x = random_tensor({T, d}, rng);
    Tensor y = att.run(x);

    // value projection of each row
    Tensor v({T, d});
    for (int64_t i = 0; i < T; ++i)
        for (int64_t j = 0; j < d; ++j) {
            double acc = att.bqkv.value[2 * d + j];
            for (int64_t k = 0; k < d; ++k) acc += x.at(i, k) * att.wqkv.value.at(k, 2 * d + j);
            v.at(i, j) = acc;
        }
    for (int64_t i = 0; i < T; ++i)
        for (int64_t j = 0; j < d; ++j) {
            double mean = 0.0;
            for (int64_t p = 0; p <= i; ++p) mean += v.at(p, j);
            mean /= static_cast<double>(i + 1);
            CHECK(y.at(i, j) == doctest::Approx(mean).epsilon(1e-12));
        }
}

TEST_CASE("causal_attention: outputs before a perturbation are bit-identical") {
    Rng rng(16);
    const int64_t d = 8, T = 6;
    AttentionFixture att(d, 4, rng);
    Tensor x = random_tensor({T, d}, rng);
    Tensor y1 = att.run(x);
    for (int64_t trial = 0; trial < 4; ++trial) {
        Tensor x2 = x;
        const int64_t cut = 1 + rng.uniform_int(T - 1);  // perturb rows >= cut
        for (int64_t i = cut; i < T; ++i)
            for (int64_t j = 0; j < d; ++j) x2.at(i, j) += rng.normal(0.0, 2.0);
        Tensor y2 = att.run(x2);
        for (int64_t i = 0; i < cut; ++i)
            for (int64_t j = 0; j < d; ++j) CHECK(y1.at(i, j) == y2.at(i, j));
    }
}

TEST_CASE("causal_attention: indivisible head count is a configuration error") {
    Rng rng(17);
    AttentionFixture att(8, 4, rng);
    att.heads = 3;
    Tensor x = random_tensor({2, 8}, rng);
    CHECK_THROWS_AS(att.run(x), ConfigError);
}

TEST_CASE("message_pass: isolated node uses only the self term") {
    Rng rng(18);
    Tensor xv = random_tensor({1, 3}, rng);
    Tensor ws = random_tensor({3, 4}, rng);
    Tensor wn = random_tensor({3, 4}, rng);
    Tape t;
    Var y = message_pass(t.input(xv), {}, t.input(ws), t.input(wn));
    for (int64_t j = 0; j < 4; ++j) {
        double acc = 0.0;
        for (int64_t k = 0; k < 3; ++k) acc += xv[k] * ws.at(k, j);
        CHECK(y.val()[j] == doctest::Approx(std::tanh(acc)).epsilon(1e-12));
    }
}

TEST_CASE("message_pass: identical fully-connected nodes stay identical") {
    Rng rng(19);
    Tensor xv({2, 3});
    for (int64_t j = 0; j < 3; ++j) xv.at(0, j) = xv.at(1, j) = rng.normal();
    std::vector<Edge> edges = {{0, 1}, {1, 0}};
    Tape t;
    Var y = message_pass(t.input(xv), edges, t.input(random_tensor({3, 4}, rng)),
                         t.input(random_tensor({3, 4}, rng)));
    for (int64_t j = 0; j < 4; ++j) CHECK(y.val().at(0, j) == y.val().at(1, j));
}

TEST_CASE("message_pass: three-node path matches scalar-loop oracle") {
    Rng rng(20);
    Tensor xv = random_tensor({3, 2}, rng);
    Tensor ws = random_tensor({2, 3}, rng);
    Tensor wn = random_tensor({2, 3}, rng);
    // undirected path 0-1-2 expressed as directed edges both ways
    std::vector<Edge> edges = {{0, 1}, {1, 0}, {1, 2}, {2, 1}};
    Tape t;
    Var y = message_pass(t.input(xv), edges, t.input(ws), t.input(wn));

    auto row_dot = [&](const Tensor& m, const double* x, int64_t j) {
        double acc = 0.0;
        for (int64_t k = 0; k < 2; ++k) acc += x[k] * m.at(k, j);
        return acc;
    };
    std::vector<std::vector<int>> in_neigh = {{1}, {0, 2}, {1}};
    for (int64_t i = 0; i < 3; ++i) {
        double mean_feat[2] = {0.0, 0.0};
        for (int n : in_neigh[static_cast<size_t>(i)]) {
            mean_feat[0] += xv.at(n, 0);
            mean_feat[1] += xv.at(n, 1);
        }
        mean_feat[0] /= static_cast<double>(in_neigh[static_cast<size_t>(i)].size());
        mean_feat[1] /= static_cast<double>(in_neigh[static_cast<size_t>(i)].size());
        for (int64_t j = 0; j < 3; ++j) {
            const double pre =
                row_dot(ws, xv.data() + i * 2, j) + row_dot(wn, mean_feat, j);
            CHECK(y.val().at(i, j) == doctest::Approx(std::tanh(pre)).epsilon(1e-12));
        }
    }
}

TEST_CASE("message_pass: out-of-range edge raises graph error") {
    Tape t;
    Var x = t.input(Tensor::zeros({2, 3}));
    std::vector<Edge> edges = {{0, 2}};
    CHECK_THROWS_AS(
        message_pass(x, edges, t.input(Tensor::zeros({3, 3})), t.input(Tensor::zeros({3, 3}))),
        GraphError);
}

TEST_CASE("message_pass: permutation equivariance") {
    Rng rng(21);
    const int64_t n = 6;
    Tensor xv = random_tensor({n, 3}, rng);
    Tensor ws = random_tensor({3, 5}, rng);
    Tensor wn = random_tensor({3, 5}, rng);
    std::vector<Edge> edges = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 4}, {1, 4}};

    std::vector<int32_t> perm = {3, 0, 5, 1, 4, 2};
    Tensor xp({n, 3});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < 3; ++j) xp.at(perm[static_cast<size_t>(i)], j) = xv.at(i, j);
    std::vector<Edge> edges_p;
    for (const Edge& e : edges) {
        edges_p.push_back({perm[static_cast<size_t>(e.src)], perm[static_cast<size_t>(e.dst)]});
    }
    Tape t;
    Var y = message_pass(t.input(xv), edges, t.input(ws), t.input(wn));
    Var yp = message_pass(t.input(xp), edges_p, t.input(ws), t.input(wn));
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < 5; ++j) {
            CHECK(y.val().at(i, j) ==
                  doctest::Approx(yp.val().at(perm[static_cast<size_t>(i)], j)).epsilon(1e-12));
        }
}

TEST_CASE("backward: sum gives all-ones gradient") {
    Rng rng(22);
    Parameter x("x", random_tensor({3, 4}, rng));
    Tape t;
    Var loss = sum_all(t.param(x));
    t.backward(loss);
    for (int64_t i = 0; i < x.grad.size(); ++i) CHECK(x.grad[i] == 1.0);
}

TEST_CASE("backward: d(x*x)/dx at 3 is 6") {
    Parameter x("x", Tensor::scalar(3.0));
    Tape t;
    Var xv = t.param(x);
    t.backward(mul(xv, xv));
    CHECK(x.grad[0] == doctest::Approx(6.0));
}

TEST_CASE("backward: rejects non-scalar loss") {
    Parameter x("x", Tensor::zeros({2, 2}));
    Tape t;
    Var v = t.param(x);
    CHECK_THROWS_AS(t.backward(v), UsageError);
}

TEST_CASE("backward: untouched parameters keep zero gradient") {
    Rng rng(23);
    Parameter used("used", random_tensor({2}, rng));
    Parameter untouched("untouched", random_tensor({2}, rng));
    Tape t;
    t.backward(sum_all(t.param(used)));
    CHECK(untouched.grad[0] == 0.0);
    CHECK(untouched.grad[1] == 0.0);
}

TEST_CASE("gradient suite: every block matches central finite differences") {
    Rng rng(24);

    SUBCASE("affine") {
        Parameter w("w", nn::scaled_normal({3, 4}, rng));
        Parameter b("b", random_tensor({4}, rng, 0.1));
        Tensor x = random_tensor({5, 3}, rng);
        check_gradients({&w, &b}, [&](Tape& t) {
            return mean_all(square(affine(t.input(x), t.param(w), t.param(b))));
        });
    }
    SUBCASE("layer_norm") {
        Parameter g("g", random_tensor({6}, rng, 0.5));
        Parameter b("b", random_tensor({6}, rng, 0.5));
        Parameter x("x", random_tensor({4, 6}, rng));
        check_gradients({&g, &b, &x}, [&](Tape& t) {
            return mean_all(square(layer_norm(t.param(x), t.param(g), t.param(b), 1e-5)));
        });
    }
    SUBCASE("causal_attention") {
        const int64_t d = 8;
        Parameter wqkv("wqkv", nn::scaled_normal({d, 3 * d}, rng));
        Parameter bqkv("bqkv", random_tensor({3 * d}, rng, 0.05));
        Parameter wo("wo", nn::scaled_normal({d, d}, rng));
        Parameter bo("bo", random_tensor({d}, rng, 0.05));
        Parameter x("x", random_tensor({5, d}, rng));
        check_gradients({&wqkv, &bqkv, &wo, &bo, &x}, [&](Tape& t) {
            return mean_all(square(causal_attention(t.param(x), t.param(wqkv), t.param(bqkv),
                                                    t.param(wo), t.param(bo), 4)));
        });
    }
    SUBCASE("message_pass") {
        Parameter ws("ws", nn::scaled_normal({3, 4}, rng));
        Parameter wn("wn", nn::scaled_normal({3, 4}, rng));
        Parameter bias("bias", random_tensor({4}, rng, 0.1));
        Parameter x("x", random_tensor({5, 3}, rng));
        std::vector<Edge> edges = {{0, 1}, {1, 0}, {1, 2}, {3, 2}, {4, 0}};
        check_gradients({&ws, &wn, &bias, &x}, [&](Tape& t) {
            return mean_all(
                square(message_pass(t.param(x), edges, t.param(ws), t.param(wn), t.param(bias))));
        });
    }
    SUBCASE("composite mlp with reductions and activations") {
        Parameter w1("w1", nn::scaled_normal({4, 8}, rng));
        Parameter b1("b1", random_tensor({8}, rng, 0.1));
        Parameter w2("w2", nn::scaled_normal({8, 2}, rng));
        Parameter b2("b2", random_tensor({2}, rng, 0.1));
        Tensor x = random_tensor({6, 4}, rng);
        Tensor target = random_tensor({6, 2}, rng);
        check_gradients({&w1, &b1, &w2, &b2}, [&](Tape& t) {
            Var h = gelu(affine(t.input(x), t.param(w1), t.param(b1)));
            Var y = affine(h, t.param(w2), t.param(b2));
            return mean_all(square(sub(y, t.input(target))));
        });
    }
    SUBCASE("pointwise chain exp log tanh minimum") {
        Parameter a("a", random_tensor({5}, rng, 0.4));
        Parameter b("b", random_tensor({5}, rng, 0.4));
        check_gradients({&a, &b}, [&](Tape& t) {
            Var ea = exp(t.param(a));
            Var lb = log(add_scalar(square(t.param(b)), 1.0));
            return mean_all(minimum(tanh(ea), lb));
        });
    }
}

TEST_CASE("adam: zero gradient leaves fresh parameters unchanged") {
    Rng rng(25);
    Parameter p("p", random_tensor({4}, rng));
    const Tensor before = p.value;
    nn::Adam opt({&p}, {.lr = 0.1});
    p.zero_grad();
    opt.step();
    CHECK(bit_equal(p.value, before));
    CHECK(opt.step_count() == 1);
}

TEST_CASE("adam: first step moves by ~lr*sign(gradient)") {
    Parameter p("p", Tensor({3}, {1.0, -2.0, 0.5}));
    nn::Adam opt({&p}, {.lr = 0.01});
    p.grad = Tensor({3}, {0.3, -4.0, 1e-3});
    const Tensor before = p.value;
    opt.step();
    for (int64_t i = 0; i < 3; ++i) {
        const double delta = p.value[i] - before[i];
        const double sign = p.grad[i] > 0 ? 1.0 : -1.0;
        CHECK(delta == doctest::Approx(-0.01 * sign).epsilon(1e-4));
    }
}

TEST_CASE("adam: two steps with constant gradient match hand-rolled oracle") {
    const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    Parameter p("p", Tensor({2}, {0.7, -0.3}));
    nn::Adam opt({&p}, {.lr = lr, .beta1 = b1, .beta2 = b2, .eps = eps});
    const Tensor g({2}, {0.11, -0.64});

    // independent scalar recomputation
    double value[2] = {0.7, -0.3}, m[2] = {0.0, 0.0}, v[2] = {0.0, 0.0};
    for (int step = 1; step <= 2; ++step) {
        for (int i = 0; i < 2; ++i) {
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
            const double mhat = m[i] / (1 - std::pow(b1, step));
            const double vhat = v[i] / (1 - std::pow(b2, step));
            value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
    p.grad = g;
    opt.step();
    p.grad = g;
    opt.step();
    CHECK(p.value[0] == doctest::Approx(value[0]).epsilon(1e-15));
    CHECK(p.value[1] == doctest::Approx(value[1]).epsilon(1e-15));
    CHECK(opt.step_count() == 2);
}

TEST_CASE("adam: non-finite gradient aborts the step and names the parameter") {
    Parameter good("good", Tensor::scalar(1.0));
    Parameter bad("bad_param", Tensor::scalar(1.0));
    nn::Adam opt({&good, &bad}, {.lr = 0.1});
    good.grad[0] = 1.0;
    bad.grad[0] = std::nan("");
    CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("bad_param"), TrainingError);
    CHECK(good.value[0] == 1.0);  // aborted before applying anything
    CHECK(opt.step_count() == 0);
}

TEST_CASE("determinism: identical seeds produce bit-identical forward passes") {
    auto run = [](uint64_t seed) {
        Rng rng(seed);
        Tensor x = random_tensor({4, 8}, rng);
        Parameter wqkv("wqkv", nn::scaled_normal({8, 24}, rng));
        Parameter bqkv("bqkv", Tensor::zeros({24}));
        Parameter wo("wo", nn::scaled_normal({8, 8}, rng));
        Parameter bo("bo", Tensor::zeros({8}));
        Tape t;
        Var y = causal_attention(t.input(x), t.param(wqkv), t.param(bqkv), t.param(wo),
                                 t.param(bo), 4);
        return Tensor(y.val());
    };
    CHECK(bit_equal(run(99), run(99)));
}

TEST_SUITE_END();
