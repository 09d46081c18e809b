#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "heatflow/density.hpp"
#include "heatflow/diagnostics.hpp"
#include "heatflow/errors.hpp"
#include "heatflow/flow.hpp"
#include "heatflow/rng.hpp"

using namespace heatflow;

namespace {

Eigen::VectorXd vec1(double a) {
    Eigen::VectorXd v(1);
    v[0] = a;
    return v;
}

TargetDensity gamma1d() {
    return TargetDensity::gaussian_perturbation(PerturbationFamily::zero(1), 1.0, 1.0);
}

TargetDensity conjugate1d(double m, double sigma2) {
    return TargetDensity::gaussian_perturbation(
        PerturbationFamily::conjugate_gaussian(vec1(m), sigma2), 1.0, 1.0);
}

TargetDensity bimodal1d() {
    return TargetDensity::gaussian_perturbation(
        PerturbationFamily::log_mixture_ratio(
            {{0.35, vec1(-1.3), 0.36}, {0.65, vec1(1.1), 0.64}}),
        1.0, 1.0);
}

TargetDensity mixture2d() {
    Eigen::VectorXd m1(2), m2(2);
    m1 << 0.8, -0.5;
    m2 << -0.8, 0.5;
    return TargetDensity::gaussian_perturbation(
        PerturbationFamily::log_mixture_ratio({{0.4, m1, 0.5}, {0.6, m2, 0.7}}), 1.0, 1.0);
}

double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

}  // namespace

TEST_CASE("adaptive quadrature reproduces closed-form integrals") {
    CHECK(adaptive_quadrature([](double x) { return x * x; }, 0.0, 1.0, 1e-12) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(adaptive_quadrature(norm_pdf, -8.0, 8.0, 1e-12) ==
          doctest::Approx(1.0).epsilon(1e-10));
    CHECK(adaptive_quadrature([](double x) { return std::sin(x); }, 0.0, M_PI, 1e-12) ==
          doctest::Approx(2.0).epsilon(1e-12));

    CHECK_THROWS_AS(adaptive_quadrature(norm_pdf, 1.0, 1.0, 1e-10), InvalidInputError);
    CHECK_THROWS_AS(adaptive_quadrature(norm_pdf, 0.0, 1.0, 0.0), InvalidInputError);
}

TEST_CASE("quantile oracle is the identity on the base Gaussian") {
    const QuantileOracle1D oracle(gamma1d());
    for (double x : {-5.0, -3.0, -1.0, 0.0, 0.7, 2.4, 4.8})
        CHECK(oracle.quantile_map(x) == doctest::Approx(x).epsilon(1e-8));
}

TEST_CASE("quantile oracle matches the affine map of a conjugate target") {
    const QuantileOracle1D oracle(conjugate1d(1.0, 4.0));
    // the [-10, 10] table truncates ~3e-6 of N(1, 4) mass, so expect ~1e-5
    // shifts rather than the tol of the panel builder
    CHECK(oracle.quantile_map(0.0) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(oracle.quantile_map(0.5) == doctest::Approx(2.0).epsilon(1e-4));
    CHECK(oracle.quantile_map(-1.0) == doctest::Approx(-1.0).epsilon(1e-4));
}

TEST_CASE("quantile oracle handles multimodal targets") {
    const auto density = TargetDensity::gaussian_perturbation(
        PerturbationFamily::log_mixture_ratio(
            {{0.5, vec1(-1.0), 0.25}, {0.5, vec1(1.0), 0.25}}),
        1.0, 1.0);
    const QuantileOracle1D oracle(density);
    CHECK(std::abs(oracle.quantile_map(0.0)) <= 1e-9);  // symmetric law, exact median
    CHECK(oracle.cdf(0.0) == doctest::Approx(0.5).epsilon(1e-10));

    double prev = oracle.quantile_map(-4.0);
    for (double x = -3.5; x <= 4.01; x += 0.5) {
        const double y = oracle.quantile_map(x);
        CHECK(y > prev);
        prev = y;
    }

    CHECK(adaptive_quadrature([&](double y) { return oracle.pdf(y); }, -10.0, 10.0, 1e-10) ==
          doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("quantile oracle agrees with the integrated transport map") {
    const auto density = bimodal1d();
    const QuantileOracle1D oracle(density);
    const auto quad = QuadratureSpec::gauss_hermite(1, 48);
    FlowConfig cfg;
    cfg.rel_tol = 1e-8;
    cfg.abs_tol = 1e-10;
    for (double x : {-1.2, 0.4, 1.8}) {
        const double mapped = integrate_flow(density, vec1(x), cfg, quad).x_final[0];
        CHECK(mapped == doctest::Approx(oracle.quantile_map(x)).epsilon(1e-3));
    }
}

TEST_CASE("quantile oracle validation") {
    // braces, not parens: a parenthesised temporary inside the macro body is
    // swallowed by the most vexing parse and never constructed
    CHECK_THROWS_AS(QuantileOracle1D{mixture2d()}, InvalidInputError);
    CHECK_THROWS_AS(QuantileOracle1D(gamma1d(), 0.0), InvalidInputError);
    CHECK_THROWS_AS(QuantileOracle1D(gamma1d(), 1e-6), InvalidInputError);
    const QuantileOracle1D oracle(gamma1d());
    CHECK_THROWS_AS(oracle.quantile_map(7.0), DomainError);
    CHECK_THROWS_AS(oracle.quantile_map(-7.0), DomainError);
}

TEST_CASE("two-sample KS statistic") {
    std::vector<double> a(150), b(150);
    for (int i = 0; i < 150; ++i) a[i] = b[i] = counter_normal(1, 0, i);
    const KsResult same = ks_two_sample(a, b);
    CHECK(same.statistic == 0.0);
    CHECK(same.critical_1pct ==
          doctest::Approx(1.628 * std::sqrt(300.0 / (150.0 * 150.0))).epsilon(1e-15));

    // null calibration: the 1% critical value should reject rarely
    int rejections = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> u(400), v(400);
        for (int i = 0; i < 400; ++i) {
            u[i] = counter_normal(40, 2 * trial, i);
            v[i] = counter_normal(40, 2 * trial + 1, i);
        }
        const KsResult ks = ks_two_sample(u, v);
        if (ks.statistic >= ks.critical_1pct) ++rejections;
    }
    CHECK(rejections <= 5);

    // a 0.2 mean shift at n = 10^4 sits far above the critical value
    std::vector<double> base(10000), shifted(10000);
    for (int i = 0; i < 10000; ++i) {
        base[i] = counter_normal(41, 0, i);
        shifted[i] = 0.2 + counter_normal(41, 1, i);
    }
    const KsResult ks = ks_two_sample(base, shifted);
    CHECK(ks.statistic > ks.critical_1pct);

    std::vector<double> tiny(99, 0.0);
    CHECK_THROWS_AS(ks_two_sample(tiny, tiny), DomainError);
}

TEST_CASE("sliced Wasserstein distance") {
    const int n = 500;
    std::vector<Eigen::VectorXd> a(n), b(n), c(n);
    Eigen::VectorXd delta(2);
    delta << 0.3, -0.4;
    for (int i = 0; i < n; ++i) {
        a[i] = counter_normal_vec(8, 0, 2 * i, 2);
        b[i] = a[i];
        c[i] = a[i] + delta;
    }

    CHECK(sliced_wasserstein(a, b, 8, 5) == 0.0);

    const double sym_ab = sliced_wasserstein(a, c, 8, 5);
    const double sym_ba = sliced_wasserstein(c, a, 8, 5);
    CHECK(sym_ab == doctest::Approx(sym_ba).epsilon(1e-12));

    // shifting a cloud by delta moves each projection by <dir, delta> exactly,
    // so the distance equals the average absolute projection of the shift
    double expect = 0.0;
    for (int p = 0; p < 8; ++p)
        expect += std::abs(counter_unit_vec(5, p + 1, 0, 2).dot(delta)) / 8.0;
    CHECK(sym_ab == doctest::Approx(expect).epsilon(1e-12));
    CHECK(sym_ab <= delta.norm() + 1e-12);

    CHECK_THROWS_AS(sliced_wasserstein({}, b, 4, 1), DomainError);
    CHECK_THROWS_AS(sliced_wasserstein(a, {vec1(0.0)}, 4, 1), DomainError);
    CHECK_THROWS_AS(sliced_wasserstein(a, b, 0, 1), InvalidInputError);
}

TEST_CASE("transported clouds match direct target samples") {
    const auto density = mixture2d();
    const auto quad = QuadratureSpec::gauss_hermite(2, 12);
    FlowConfig cfg;
    cfg.rel_tol = 1e-6;
    cfg.abs_tol = 1e-9;
    cfg.max_step_fraction = 0.3;
    const std::size_t n = 1200;

    const auto pushed = pushforward_samples(density, n, 1.0, 31, cfg, quad, 1);
    const SampleResult direct = sample_target(density, n, 32);
    const double sw = sliced_wasserstein(pushed, direct.samples, 6, 33);
    CHECK(sw <= 0.12);  // two n = 1200 clouds of the same law measure ~0.05
}

TEST_CASE("marginal interpolation law holds along the flow") {
    const auto density = bimodal1d();
    const auto quad = QuadratureSpec::gauss_hermite(1, 16);
    FlowConfig cfg;
    cfg.rel_tol = 1e-6;
    cfg.abs_tol = 1e-9;

    const MarginalCheckResult res = marginal_law_check(density, 0.6, 2000, 17, cfg, quad);
    REQUIRE(res.per_coordinate.size() == 1);
    CHECK(res.per_coordinate[0].statistic < res.per_coordinate[0].critical_1pct);
    CHECK(res.pass);

    const auto zero2 =
        TargetDensity::gaussian_perturbation(PerturbationFamily::zero(2), 1.0, 1.0);
    const MarginalCheckResult z =
        marginal_law_check(zero2, 0.5, 1000, 19, cfg, QuadratureSpec::gauss_hermite(2, 12));
    REQUIRE(z.per_coordinate.size() == 2);
    CHECK(z.pass);

    CHECK_THROWS_AS(marginal_law_check(density, 0.0, 500, 1, cfg, quad), DomainError);
    CHECK_THROWS_AS(marginal_law_check(density, 1.0, 500, 1, cfg, quad), DomainError);
}

TEST_CASE("hypercontractivity harness: constant and null functions") {
    const auto density = bimodal1d();

    TestFn one;
    one.f = [](double) { return 1.0; };
    one.df = [](double) { return 0.0; };
    one.d2f = [](double) { return 0.0; };
    one.label = "constant";
    const LogSobolevResult r1 = log_sobolev_check(density, 1, one);
    CHECK(!r1.degenerate);
    CHECK(r1.lhs == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r1.rhs == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(r1.ratio == doctest::Approx(0.0).epsilon(1e-12));

    TestFn null_fn;
    null_fn.f = [](double) { return 0.0; };
    null_fn.df = [](double) { return 0.0; };
    null_fn.d2f = [](double) { return 0.0; };
    null_fn.label = "null";
    const LogSobolevResult r0 = log_sobolev_check(density, 1, null_fn);
    CHECK(r0.degenerate);
    CHECK(r0.ratio == 0.0);
}

TEST_CASE("hypercontractivity harness: first Hermite function on the Gaussian") {
    TestFn h1;
    h1.f = [](double y) { return y * std::exp(-0.25 * y * y); };
    h1.df = [](double y) { return (1.0 - 0.5 * y * y) * std::exp(-0.25 * y * y); };
    h1.d2f = [](double y) { return (0.25 * y * y * y - 1.5 * y) * std::exp(-0.25 * y * y); };
    h1.label = "hermite1";

    for (int k : {1, 2}) {
        const LogSobolevResult r = log_sobolev_check(gamma1d(), k, h1);
        CHECK(!r.degenerate);
        CHECK(r.lhs > 0.0);
        CHECK(r.rhs > 1.0);
        CHECK(r.ratio > 0.0);
        CHECK(r.ratio < 2.0);
    }

    CHECK_THROWS_AS(log_sobolev_check(gamma1d(), 3, h1), InvalidInputError);
    CHECK_THROWS_AS(log_sobolev_check(gamma1d(), 0, h1), InvalidInputError);
    CHECK_THROWS_AS(log_sobolev_check(mixture2d(), 1, h1), CapabilityError);
    const auto ball = TargetDensity::ball_supported(PerturbationFamily::zero(1), 2.0, 1.0);
    CHECK_THROWS_AS(log_sobolev_check(ball, 1, h1), CapabilityError);
}

TEST_CASE("test-function family has consistent analytic derivatives") {
    const auto fns = log_sobolev_family(6, 5);
    REQUIRE(fns.size() == 6);
    const double h = 1e-6;
    for (const auto& fn : fns) {
        CHECK(!fn.label.empty());
        for (double y : {-1.7, -0.3, 0.6, 2.1}) {
            const double fd1 = (fn.f(y + h) - fn.f(y - h)) / (2.0 * h);
            CHECK(std::abs(fn.df(y) - fd1) <= 1e-5 * std::max(1.0, std::abs(fd1)));
            const double fd2 = (fn.df(y + h) - fn.df(y - h)) / (2.0 * h);
            CHECK(std::abs(fn.d2f(y) - fd2) <= 1e-5 * std::max(1.0, std::abs(fd2)));
        }
    }
    CHECK_THROWS_AS(log_sobolev_family(0, 1), InvalidInputError);
}

TEST_CASE("family ratio caps are stable under enlargement") {
    const auto density = bimodal1d();
    for (int k : {1, 2}) {
        const auto small = log_sobolev_scan(density, k, log_sobolev_family(12, 23));
        const auto big = log_sobolev_scan(density, k, log_sobolev_family(24, 23));
        double cap_small = 0.0, cap_big = 0.0;
        for (const auto& r : small) {
            CHECK(std::isfinite(r.ratio));
            cap_small = std::max(cap_small, r.ratio);
        }
        for (const auto& r : big) cap_big = std::max(cap_big, r.ratio);
        CHECK(cap_small > 0.0);
        CHECK(std::abs(cap_big - cap_small) <= 0.10 * cap_small);
    }
}
