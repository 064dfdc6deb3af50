#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "archdiff/errors.hpp"
#include "archdiff/optim.hpp"
#include "archdiff/rng.hpp"
#include "archdiff/tape.hpp"
#include "fd_check.hpp"

using namespace archdiff;

namespace {

Tensor randn_tensor(int r, int c, Rng& rng, double scale = 1.0) {
    Tensor t(r, c);
    for (double& v : t.data) v = scale * rng.normal();
    return t;
}

}  // namespace

TEST_CASE("matmul identity returns operand") {
    Tape tape;
    Rng rng(1, 0);
    auto x = make_leaf(randn_tensor(3, 4, rng), false);
    auto id = make_leaf(Tensor::identity(3), false);
    auto y = tape.matmul(id, x);
    for (std::size_t i = 0; i < x->value.numel(); ++i) {
        CHECK(y->value.data[i] == x->value.data[i]);
    }
}

TEST_CASE("relu and swish basics") {
    Tape tape;
    auto x = make_leaf(Tensor::row({-1.0, 0.0, 2.0}), false);
    auto r = tape.relu(x);
    CHECK(r->value.data[0] == 0.0);
    CHECK(r->value.data[1] == 0.0);
    CHECK(r->value.data[2] == 2.0);

    auto z = make_leaf(Tensor::scalar(0.0), false);
    CHECK(tape.swish(z)->value.item() == 0.0);
}

TEST_CASE("softmax_masked examples") {
    Tape tape;

    SUBCASE("masked exponent underflows to exact zero") {
        auto s = make_leaf(Tensor::row({0.0, 0.0}), false);
        Tensor mask = Tensor::row({0.0, -1e9});
        auto y = tape.softmax_masked(s, mask);
        CHECK(y->value.data[0] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(y->value.data[1] == 0.0);
    }

    SUBCASE("uniform over equal unmasked scores") {
        auto s = make_leaf(Tensor::row({3.0, 3.0, 3.0}), false);
        Tensor mask(1, 3);
        auto y = tape.softmax_masked(s, mask);
        for (int j = 0; j < 3; ++j) CHECK(y->value.data[j] == doctest::Approx(1.0 / 3.0));
    }

    SUBCASE("closed-form two-entry softmax") {
        auto s = make_leaf(Tensor::row({1.0, 2.0}), false);
        Tensor mask(1, 2);
        auto y = tape.softmax_masked(s, mask);
        const double e = std::exp(1.0);
        CHECK(y->value.data[0] == doctest::Approx(1.0 / (1.0 + e)).epsilon(1e-12));
        CHECK(y->value.data[1] == doctest::Approx(e / (1.0 + e)).epsilon(1e-12));
    }

    SUBCASE("rows sum to one under random masks") {
        Rng rng(11, 3);
        for (int trial = 0; trial < 50; ++trial) {
            const int n = 2 + rng.uniform_int(6);
            auto s = make_leaf(randn_tensor(n, n, rng, 2.0), false);
            Tensor mask(n, n);
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) mask.at(i, j) = rng.uniform() < 0.4 ? -1e9 : 0.0;
                mask.at(i, i) = 0.0;  // keep at least one entry alive
            }
            auto y = tape.softmax_masked(s, mask);
            for (int i = 0; i < n; ++i) {
                double row = 0.0;
                for (int j = 0; j < n; ++j) {
                    row += y->value.at(i, j);
                    if (mask.at(i, j) != 0.0) CHECK(y->value.at(i, j) <= 1e-12);
                }
                CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
            }
        }
    }

    SUBCASE("fully masked row is a numeric error") {
        auto s = make_leaf(Tensor::row({0.0, 0.0}), false);
        Tensor mask = Tensor::row({-1e9, -1e9});
        CHECK_THROWS_AS(tape.softmax_masked(s, mask), NumericError);
    }
}

TEST_CASE("backward on linear map returns the weights") {
    Tape tape;
    auto w = make_leaf(Tensor::row({2.0, -3.0, 0.5}), false);
    auto a = make_leaf(Tensor::row({1.0, 1.0, 1.0}), true);
    auto loss = tape.sum_all(tape.mul(w, a));
    tape.backward(loss);
    CHECK(a->grad.data[0] == 2.0);
    CHECK(a->grad.data[1] == -3.0);
    CHECK(a->grad.data[2] == 0.5);
}

TEST_CASE("mse gradient is 2x/n") {
    Tape tape;
    auto x = make_leaf(Tensor::scalar(3.0), true);
    auto loss = tape.mse(x, Tensor::scalar(0.0));
    CHECK(loss->value.item() == doctest::Approx(9.0));
    tape.backward(loss);
    CHECK(x->grad.data[0] == doctest::Approx(6.0));
}

TEST_CASE("backward usage errors") {
    Tape tape;
    auto x = make_leaf(Tensor::scalar(1.0), true);
    CHECK_THROWS_AS(tape.backward(x), UsageError);  // detached leaf

    auto loss = tape.mean_all(tape.mul(x, x));
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), UsageError);  // one backward per forward
}

TEST_CASE("tape replay produces bit-identical gradients") {
    Rng rng(5, 1);
    const Tensor x0 = randn_tensor(4, 4, rng);
    const Tensor w0 = randn_tensor(4, 4, rng);
    std::vector<double> first;
    for (int rep = 0; rep < 2; ++rep) {
        Tape tape;
        auto x = make_leaf(x0, true);
        auto w = make_leaf(w0, true);
        auto h = tape.swish(tape.matmul(x, w));
        auto loss = tape.mean_all(tape.mul(h, h));
        tape.backward(loss);
        if (rep == 0) {
            first = x->grad.data;
            first.insert(first.end(), w->grad.data.begin(), w->grad.data.end());
        } else {
            std::vector<double> second = x->grad.data;
            second.insert(second.end(), w->grad.data.begin(), w->grad.data.end());
            CHECK(first == second);
        }
    }
}

TEST_CASE("finite differences agree for each primitive") {
    Rng rng(42, 7);

    SUBCASE("matmul") {
        const Tensor x0 = randn_tensor(3, 5, rng);
        const Tensor w = randn_tensor(5, 2, rng);
        auto res = fd::check_grad(
            [&](Tape& t, const VarPtr& x) {
                return t.mean_all(t.matmul(x, make_leaf(w, false)));
            },
            x0);
        CHECK_MESSAGE(res.ok, res.detail);
    }

    SUBCASE("elementwise chain") {
        const Tensor x0 = randn_tensor(4, 3, rng);
        auto res = fd::check_grad(
            [&](Tape& t, const VarPtr& x) {
                auto y = t.sigmoid(t.scale(x, 1.7));
                auto z = t.swish(t.add(y, x));
                return t.mean_all(t.mul(z, z));
            },
            x0);
        CHECK_MESSAGE(res.ok, res.detail);
    }

    SUBCASE("softmax_masked") {
        const Tensor x0 = randn_tensor(4, 4, rng);
        Tensor mask(4, 4);
        mask.at(0, 3) = -1e9;
        mask.at(2, 1) = -1e9;
        auto res = fd::check_grad(
            [&](Tape& t, const VarPtr& x) {
                auto y = t.softmax_masked(x, mask);
                return t.sum_all(t.mul(y, y));
            },
            x0);
        CHECK_MESSAGE(res.ok, res.detail);
    }

    SUBCASE("exp log recip abs away from kinks") {
        Tensor x0(3, 3);
        for (std::size_t i = 0; i < x0.numel(); ++i) x0.data[i] = 0.5 + 0.1 * static_cast<double>(i);
        auto res = fd::check_grad(
            [&](Tape& t, const VarPtr& x) {
                auto y = t.log(t.add(t.exp(t.scale(x, -1.0)), t.recip(x)));
                return t.mean_all(t.mul(y, t.abs(x)));
            },
            x0);
        CHECK_MESSAGE(res.ok, res.detail);
    }

    SUBCASE("transpose diag rowvec concat") {
        const Tensor x0 = randn_tensor(3, 1, rng);
        const Tensor b = randn_tensor(1, 3, rng);
        auto res = fd::check_grad(
            [&](Tape& t, const VarPtr& x) {
                auto d = t.make_diag(x);
                auto dt = t.transpose(d);
                auto s = t.add_rowvec(t.concat_cols({d, dt}), make_leaf(
                    Tensor(1, 6, {b.data[0], b.data[1], b.data[2], 0.1, 0.2, 0.3}), false));
                return t.mean_all(t.mul(s, s));
            },
            x0);
        CHECK_MESSAGE(res.ok, res.detail);
    }
}

TEST_CASE("random compositions match finite differences") {
    // Depth <= 5, dims <= 8 compositions of smooth primitives.
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(900 + seed, 0);
        const int n = 2 + rng.uniform_int(6);
        const int m = 2 + rng.uniform_int(6);
        const Tensor x0 = randn_tensor(n, m, rng);
        const Tensor w = randn_tensor(m, n, rng);
        const int depth = 1 + rng.uniform_int(5);
        std::vector<int> plan;
        for (int d = 0; d < depth; ++d) plan.push_back(rng.uniform_int(5));

        auto res = fd::check_grad(
            [&](Tape& t, const VarPtr& x) {
                VarPtr h = x;
                for (int op : plan) {
                    switch (op) {
                        case 0: h = t.sigmoid(h); break;
                        case 1: h = t.swish(h); break;
                        case 2: h = t.scale(h, 0.7); break;
                        case 3: h = t.mul(h, h); break;
                        case 4: h = t.add(h, x); break;
                    }
                }
                return t.mean_all(t.mul(t.matmul(h, make_leaf(w, false)),
                                        t.matmul(h, make_leaf(w, false))));
            },
            x0);
        CHECK_MESSAGE(res.ok, "seed ", seed, ": ", res.detail);
    }
}

TEST_CASE("dropout scales surviving entries and backprops the mask") {
    Tape tape;
    Rng rng(3, 9);
    auto x = make_leaf(Tensor::full(10, 10, 1.0), true);
    auto y = tape.dropout(x, 0.3, rng);
    int kept = 0;
    for (double v : y->value.data) {
        CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.7)));
        if (v != 0.0) ++kept;
    }
    CHECK(kept > 40);
    CHECK(kept < 95);
    auto loss = tape.sum_all(y);
    tape.backward(loss);
    for (std::size_t i = 0; i < x->grad.numel(); ++i) {
        CHECK(x->grad.data[i] == y->value.data[i]);  // mask value is the gradient
    }
}

TEST_CASE("adam single step from zero moments") {
    ParamMap params;
    auto p = params.add("w", Tensor::scalar(1.0));
    p->grad.data[0] = 1.0;
    AdamConfig cfg;
    cfg.lr = 0.1;
    AdamState state;
    auto rep = adam_step(params, cfg, state, 10.0);
    CHECK_FALSE(rep.skipped);
    CHECK(state.step == 1);
    CHECK(p->value.item() == doctest::Approx(1.0 - 0.1).epsilon(1e-6));
}

TEST_CASE("adam constant gradient approaches lr-sized steps") {
    ParamMap params;
    auto p = params.add("w", Tensor::scalar(0.0));
    AdamConfig cfg;
    cfg.lr = 0.1;
    AdamState state;
    double prev = 0.0;
    double last_step = 0.0;
    for (int i = 0; i < 500; ++i) {
        p->grad.data[0] = 1.0;
        adam_step(params, cfg, state, 10.0);
        last_step = prev - p->value.item();
        prev = p->value.item();
    }
    CHECK(last_step == doctest::Approx(0.1).epsilon(0.01));
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
    ParamMap params;
    auto p = params.add("w", Tensor::row({1.0, -2.0}));
    AdamConfig cfg;
    AdamState state;
    adam_step(params, cfg, state, 1.0);
    CHECK(p->value.data[0] == 1.0);
    CHECK(p->value.data[1] == -2.0);
}

TEST_CASE("adam skips non-finite gradients") {
    ParamMap params;
    auto p = params.add("w", Tensor::scalar(1.0));
    p->grad.data[0] = std::numeric_limits<double>::quiet_NaN();
    AdamConfig cfg;
    AdamState state;
    auto rep = adam_step(params, cfg, state, 1.0);
    CHECK(rep.skipped);
    CHECK(p->value.item() == 1.0);
    CHECK(state.step == 0);
}

TEST_CASE("clip_global_norm") {
    SUBCASE("below threshold unchanged") {
        Tensor g = Tensor::row({0.3, 0.4});
        clip_global_norm({&g}, 1.0);
        CHECK(g.data[0] == 0.3);
        CHECK(g.data[1] == 0.4);
    }
    SUBCASE("scales 3-4-5 triangle to unit norm") {
        Tensor g = Tensor::row({3.0, 4.0});
        const double norm = clip_global_norm({&g}, 1.0);
        CHECK(norm == doctest::Approx(5.0));
        CHECK(g.data[0] == doctest::Approx(0.6));
        CHECK(g.data[1] == doctest::Approx(0.8));
    }
    SUBCASE("idempotent") {
        Rng rng(8, 8);
        Tensor g = randn_tensor(4, 4, rng, 3.0);
        clip_global_norm({&g}, 1.0);
        Tensor once = g;
        clip_global_norm({&g}, 1.0);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            CHECK(g.data[i] == doctest::Approx(once.data[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("rng normal draw statistics") {
    Rng rng(123, 5);
    const int n = 100000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sumsq += z * z;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::fabs(mean) < 0.02);
    CHECK(var > 0.97);
    CHECK(var < 1.03);
}

TEST_CASE("rng determinism and stream separation") {
    Rng a(7, 2), b(7, 2), c(7, 3);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 100; ++i) {
        const double x = a.uniform(), y = b.uniform(), z = c.uniform();
        all_equal = all_equal && (x == y);
        any_diff = any_diff || (x != z);
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("ema at decay zero tracks raw params") {
    ParamMap params;
    auto p = params.add("w", Tensor::scalar(2.0));
    Ema ema;
    ema.decay = 0.0;
    ema.init_from(params);
    p->value.data[0] = -1.5;
    ema.update(params);
    CHECK(ema.shadow.at("w").data[0] == -1.5);
}

TEST_CASE("non-finite op output raises numeric error") {
    Tape tape;
    auto x = make_leaf(Tensor::scalar(1e308), false);
    auto big = make_leaf(Tensor::scalar(1e308), false);
    CHECK_THROWS_AS(tape.add(x, big), NumericError);
}
