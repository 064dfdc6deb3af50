#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "archdiff/errors.hpp"
#include "archdiff/sde.hpp"
#include "fd_check.hpp"

using namespace archdiff;

TEST_CASE("marginal_std endpoints and midpoint") {
    VeSdeConfig cfg;
    CHECK(marginal_std(cfg, 0.0) == 0.1);
    CHECK(marginal_std(cfg, 1.0) == 5.0);
    CHECK(marginal_std(cfg, 0.5) == doctest::Approx(0.1 * std::sqrt(50.0)).epsilon(1e-12));
    CHECK_THROWS_AS(marginal_std(cfg, -0.1), UsageError);
    CHECK_THROWS_AS(marginal_std(cfg, 1.1), UsageError);
}

TEST_CASE("marginal_std is monotone over a 1000-point grid") {
    VeSdeConfig cfg;
    double prev = marginal_std(cfg, 0.0);
    for (int i = 1; i <= 1000; ++i) {
        const double cur = marginal_std(cfg, i / 1000.0);
        CHECK(cur > prev);
        prev = cur;
    }
}

TEST_CASE("diffusion coefficient squares to the variance derivative") {
    VeSdeConfig cfg;
    CHECK(diffusion_coeff(cfg, 0.0) ==
          doctest::Approx(0.1 * std::sqrt(2.0 * std::log(50.0))).epsilon(1e-12));
    const double h = 1e-6;
    for (double t : {0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95}) {
        const double g2 = std::pow(diffusion_coeff(cfg, t), 2);
        const double s_plus = std::pow(marginal_std(cfg, t + h), 2);
        const double s_minus = std::pow(marginal_std(cfg, t - h), 2);
        const double fd = (s_plus - s_minus) / (2.0 * h);
        CHECK(std::fabs(g2 - fd) / fd <= 1e-6);
        CHECK(diffusion_coeff(cfg, t) > 0.0);
    }
}

TEST_CASE("perturb matches the transition kernel std") {
    VeSdeConfig cfg;
    auto space = make_space("tiny5");
    Rng arch_rng(10, 0);
    Architecture a = random_arch(space, arch_rng);
    auto a0 = to_continuous(a);

    for (double t : {0.1, 0.5, 0.9}) {
        Rng rng(55, 100 + static_cast<std::uint64_t>(t * 10));
        double sumsq = 0.0;
        long long count = 0;
        const int draws = 223;  // 45 perturbed entries each, ~10k pooled samples
        for (int d = 0; d < draws; ++d) {
            auto p = perturb(cfg, a0, t, rng);
            for (std::size_t i = 0; i < p.a_t.v.numel(); ++i) {
                const double diff = p.a_t.v.data[i] - a0.v.data[i];
                sumsq += diff * diff;
                ++count;
            }
            for (int i = 0; i < 5; ++i)
                for (int j = i + 1; j < 5; ++j) {
                    const double diff = p.a_t.e.at(i, j) - a0.e.at(i, j);
                    sumsq += diff * diff;
                    ++count;
                }
        }
        const double emp_std = std::sqrt(sumsq / static_cast<double>(count));
        const double expect = marginal_std(cfg, t);
        CHECK(std::fabs(emp_std - expect) / expect < 0.03);
    }
}

TEST_CASE("perturb near eps stays close to the data") {
    VeSdeConfig cfg;
    auto space = make_space("tiny5");
    Rng arch_rng(11, 0);
    Architecture a = random_arch(space, arch_rng);
    auto a0 = to_continuous(a);
    Rng rng(56, 0);
    const double sigma_eps = marginal_std(cfg, cfg.eps);
    for (int d = 0; d < 10; ++d) {
        auto p = perturb(cfg, a0, cfg.eps, rng);
        for (std::size_t i = 0; i < p.a_t.v.numel(); ++i) {
            CHECK(std::fabs(p.a_t.v.data[i] - a0.v.data[i]) <= 4.0 * sigma_eps);
        }
    }
}

TEST_CASE("perturb never writes below the diagonal") {
    VeSdeConfig cfg;
    auto space = make_space("nb201");
    Rng arch_rng(12, 0);
    auto a0 = to_continuous(random_arch(space, arch_rng));
    Rng rng(57, 0);
    auto p = perturb(cfg, a0, 0.7, rng);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j <= i; ++j) CHECK(p.a_t.e.at(i, j) == 0.0);
}

TEST_CASE("prior sample statistics") {
    VeSdeConfig cfg;
    auto space = make_space("nb201");
    Rng rng(99, 4);
    double sum = 0.0, sumsq = 0.0;
    long long count = 0;
    for (int d = 0; d < 300; ++d) {
        auto a = prior_sample(cfg, space, rng);
        for (double v : a.v.data) {
            sum += v;
            sumsq += v * v;
            ++count;
        }
        for (int i = 0; i < 8; ++i)
            for (int j = i + 1; j < 8; ++j) {
                const double v = a.e.at(i, j);
                sum += v;
                sumsq += v * v;
                ++count;
            }
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j <= i; ++j) CHECK(a.e.at(i, j) == 0.0);
    }
    const double mean = sum / static_cast<double>(count);
    const double std = std::sqrt(sumsq / static_cast<double>(count) - mean * mean);
    CHECK(std::fabs(std - 5.0) / 5.0 < 0.03);
    CHECK(std::fabs(mean) < 0.05 * 5.0);

    Rng r1(4, 2), r2(4, 2);
    auto s1 = prior_sample(cfg, space, r1);
    auto s2 = prior_sample(cfg, space, r2);
    CHECK(s1.v.data == s2.v.data);
    CHECK(s1.e.data == s2.e.data);
}

TEST_CASE("dsm loss vanishes exactly at the conditional score target") {
    VeSdeConfig cfg;
    auto space = make_space("tiny5");
    Rng arch_rng(13, 0);
    auto a0 = to_continuous(random_arch(space, arch_rng));
    Rng rng(58, 0);
    const double t = 0.4;
    auto p = perturb(cfg, a0, t, rng);
    const double sigma = marginal_std(cfg, t);

    Tape tape;
    // target score = -(a_t - a0) / sigma^2 = -z / sigma
    Tensor sv(5, 7), se(5, 5);
    for (std::size_t i = 0; i < sv.numel(); ++i) sv.data[i] = -p.z_v.data[i] / sigma;
    for (std::size_t i = 0; i < se.numel(); ++i) se.data[i] = -p.z_e.data[i] / sigma;
    auto loss = dsm_loss(tape, cfg, make_leaf(sv, false), make_leaf(se, false), p, t);
    CHECK(loss->value.item() == doctest::Approx(0.0).epsilon(1e-15));

    // zero prediction: loss is mean z^2 ~ 1
    Tape tape2;
    auto loss0 = dsm_loss(tape2, cfg, make_leaf(Tensor(5, 7), false),
                          make_leaf(Tensor(5, 5), false), p, t);
    double zsum = 0.0;
    for (double z : p.z_v.data) zsum += z * z;
    for (double z : p.z_e.data) zsum += z * z;
    CHECK(loss0->value.item() == doctest::Approx(zsum / 45.0));
}

TEST_CASE("dsm loss gradient matches finite differences") {
    VeSdeConfig cfg;
    auto space = make_space("tiny5");
    Rng arch_rng(14, 0);
    auto a0 = to_continuous(random_arch(space, arch_rng));
    Rng rng(59, 0);
    const double t = 0.6;
    auto p = perturb(cfg, a0, t, rng);

    Tensor sv0(5, 7);
    Rng init(60, 0);
    for (double& v : sv0.data) v = init.normal();
    auto res = fd::check_grad(
        [&](Tape& tp, const VarPtr& sv) {
            return dsm_loss(tp, cfg, sv, make_leaf(Tensor(5, 5), false), p, t);
        },
        sv0);
    CHECK_MESSAGE(res.ok, res.detail);
}

TEST_CASE("config validation") {
    VeSdeConfig bad;
    bad.sigma_min = 1.0;
    bad.sigma_max = 0.5;
    CHECK_THROWS_AS(bad.check(), ConfigError);
}
