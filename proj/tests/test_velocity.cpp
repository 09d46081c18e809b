#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "heatflow/density.hpp"
#include "heatflow/errors.hpp"
#include "heatflow/moments.hpp"
#include "heatflow/rng.hpp"
#include "heatflow/velocity.hpp"

using namespace heatflow;

namespace {

Eigen::VectorXd vec1(double a) {
    Eigen::VectorXd v(1);
    v[0] = a;
    return v;
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

// d/dx of the affine conjugate velocity; x-independent.
double conjugate_grad_v(double sigma2, double t) {
    const double c = 1.0 - 1.0 / sigma2;
    return t * c / (1.0 - (1.0 - t * t) * c);
}

}  // namespace

TEST_CASE("zero perturbation has identically zero velocity and score") {
    const auto density =
        TargetDensity::gaussian_perturbation(PerturbationFamily::zero(2), 1.0, 1.0);
    const auto quad = QuadratureSpec::gauss_hermite(2, 24);
    Eigen::VectorXd x(2);
    x << 1.3, -0.4;
    for (double t : {0.0, 0.5, 0.999}) {
        CHECK(velocity(density, t, x, quad, VelocityMode::IbpForm).v.norm() == 0.0);
        CHECK(velocity(density, t, x, quad, VelocityMode::MomentForm).v.norm() <= 1e-10);
        CHECK(velocity_jacobian(density, t, x, quad).norm() <= 1e-10);
    }
    CHECK((score(density, 0.7, x, quad) + x).norm() <= 1e-12);
    CHECK(std::abs(score_jacobian_eigmax(density, 0.7, x, quad)) <= 1e-10);
}

TEST_CASE("conjugate closed-form velocity") {
    const auto density = conjugate1d(0.0, 4.0);
    const auto quad = QuadratureSpec::gauss_hermite(1, 64);
    const double expect = 6.0 / 7.0;  // t x (1-1/s2) / (1 + (1-t^2)(1/s2-1))
    for (auto mode : {VelocityMode::MomentForm, VelocityMode::IbpForm}) {
        const VelocityEval ev = velocity(density, 0.5, vec1(1.0), quad, mode);
        CHECK(ev.v[0] == doctest::Approx(expect).epsilon(1e-12));
        CHECK(ev.mode == mode);
    }

    const VelocityEval with_jac =
        velocity(density, 0.5, vec1(1.0), quad, VelocityMode::Default, true);
    REQUIRE(with_jac.jac.has_value());
    CHECK((*with_jac.jac)(0, 0) == doctest::Approx(conjugate_grad_v(4.0, 0.5)).epsilon(1e-10));
}

TEST_CASE("velocity at t=0 equals the target mean") {
    const auto quad = QuadratureSpec::gauss_hermite(1, 64);
    const auto conj = conjugate1d(0.9, 0.49);
    for (double x : {-3.0, 0.0, 3.0})
        for (auto mode : {VelocityMode::MomentForm, VelocityMode::IbpForm})
            CHECK(velocity(conj, 0.0, vec1(x), quad, mode).v[0] ==
                  doctest::Approx(0.9).epsilon(1e-9));

    const auto mix = bimodal1d();
    const double mix_mean = 0.35 * -1.3 + 0.65 * 1.1;
    CHECK(velocity(mix, 0.0, vec1(1.4), quad).v[0] == doctest::Approx(mix_mean).epsilon(1e-8));
}

TEST_CASE("moment and integrated-by-parts estimators agree on smooth targets") {
    const auto quad = QuadratureSpec::gauss_hermite(1, 48);
    for (const auto& density : {conjugate1d(1.0, 1.25), bimodal1d()}) {
        for (int i = 0; i < 100; ++i) {
            // 1 - t log-uniform down to 1e-6, x uniform in [-3, 3]
            const double t = 1.0 - std::pow(10.0, -6.0 * counter_u01(21, 1, i));
            const double x = -3.0 + 6.0 * counter_u01(21, 2, i);
            const Eigen::VectorXd vm =
                velocity(density, t, vec1(x), quad, VelocityMode::MomentForm).v;
            const Eigen::VectorXd vi =
                velocity(density, t, vec1(x), quad, VelocityMode::IbpForm).v;
            CHECK((vm - vi).norm() <= 1e-6 * std::max(1.0, vi.norm()));
        }
    }
}

TEST_CASE("integrated-by-parts velocity inherits the gradient bound") {
    const auto fam = PerturbationFamily::weierstrass_fourier(1, 0.4, 2.0, 0.5, 12, 7);
    const auto density = TargetDensity::gaussian_perturbation(fam, 1.0, 0.5);
    const double bound = fam.sup_grad_a();
    const auto quad = QuadratureSpec::gauss_hermite(1, 48);
    for (int i = 0; i < 40; ++i) {
        const double t = 1.0 - std::pow(10.0, -6.0 * counter_u01(33, 1, i));
        const double x = -3.0 + 6.0 * counter_u01(33, 2, i);
        const VelocityEval ev = velocity(density, t, vec1(x), quad, VelocityMode::IbpForm);
        CHECK(ev.v.norm() <= bound * (1.0 + 1e-12));
    }
}

TEST_CASE("velocity jacobian is a symmetric PSD-shifted matrix") {
    const auto density = mixture2d();
    const auto quad = QuadratureSpec::gauss_hermite(2, 48);
    for (int i = 0; i < 15; ++i) {
        const double t = 0.05 + 0.9 * counter_u01(55, 1, i);
        Eigen::VectorXd x(2);
        x << -3.0 + 6.0 * counter_u01(55, 2, i), -3.0 + 6.0 * counter_u01(55, 3, i);

        // raw (pre-symmetrization) matrix straight from the covariance identity
        const TiltedMoments m = tilted_moments(density, t, x, quad);
        const double om = (1.0 - t) * (1.0 + t);
        const Eigen::MatrixXd raw =
            (t / (om * om)) * m.cov - (t / om) * Eigen::MatrixXd::Identity(2, 2);
        CHECK((raw - raw.transpose()).norm() <= 1e-8);

        const Eigen::MatrixXd jac = velocity_jacobian(density, t, x, quad);
        CHECK((jac - jac.transpose()).norm() == 0.0);
        const Eigen::MatrixXd shifted = jac + (t / om) * Eigen::MatrixXd::Identity(2, 2);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(shifted, Eigen::EigenvaluesOnly);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    }
}

TEST_CASE("conjugate jacobian closed form is x-independent") {
    const auto quad = QuadratureSpec::gauss_hermite(1, 64);
    struct Case {
        double sigma2, t;
    };
    for (const Case c : {Case{4.0, 0.5}, Case{0.25, 0.7}}) {
        const auto density = conjugate1d(0.0, c.sigma2);
        const double expect = conjugate_grad_v(c.sigma2, c.t);
        const double j1 = velocity_jacobian(density, c.t, vec1(-1.7), quad)(0, 0);
        const double j2 = velocity_jacobian(density, c.t, vec1(2.3), quad)(0, 0);
        CHECK(j1 == doctest::Approx(expect).epsilon(1e-10));
        CHECK(j2 == doctest::Approx(expect).epsilon(1e-10));
    }
    CHECK(velocity_jacobian(conjugate1d(0.0, 4.0), 0.0, vec1(0.3), quad).norm() == 0.0);
}

TEST_CASE("rough-target jacobian matches finite differences of the velocity") {
    // The covariance identity is the x-derivative of the moment-form
    // estimator, so the FD oracle must differentiate that same form; products
    // of lacunary gradients double the top frequency 2 lambda^terms, which the
    // node count must resolve. Term count 3 at order 128 (1D) / 64 (2D) does.
    const double h = 1e-4;

    const auto d1 = TargetDensity::gaussian_perturbation(
        PerturbationFamily::weierstrass_fourier(1, 0.4, 2.0, 0.5, 3, 7), 1.0, 0.5);
    const auto quad1 = QuadratureSpec::gauss_hermite(1, 128);
    for (int i = 0; i < 20; ++i) {
        const double t = 0.05 + 0.9 * counter_u01(66, 1, i);
        const double x = -2.5 + 5.0 * counter_u01(66, 2, i);
        const double jac = velocity_jacobian(d1, t, vec1(x), quad1)(0, 0);
        const double vp = velocity(d1, t, vec1(x + h), quad1, VelocityMode::MomentForm).v[0];
        const double vm = velocity(d1, t, vec1(x - h), quad1, VelocityMode::MomentForm).v[0];
        const double fd = (vp - vm) / (2.0 * h);
        CHECK(std::abs(jac - fd) <= 1e-3 * std::max(1.0, std::abs(fd)));
    }

    const auto d2 = TargetDensity::gaussian_perturbation(
        PerturbationFamily::weierstrass_fourier(2, 0.4, 2.0, 0.5, 3, 7), 1.0, 0.5);
    const auto quad2 = QuadratureSpec::gauss_hermite(2, 64);
    for (int i = 0; i < 8; ++i) {
        const double t = 0.1 + 0.8 * counter_u01(67, 1, i);
        Eigen::VectorXd x(2);
        x << -2.0 + 4.0 * counter_u01(67, 2, i), -2.0 + 4.0 * counter_u01(67, 3, i);
        const Eigen::MatrixXd jac = velocity_jacobian(d2, t, x, quad2);
        Eigen::MatrixXd fd(2, 2);
        for (int j = 0; j < 2; ++j) {
            Eigen::VectorXd xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            fd.col(j) = (velocity(d2, t, xp, quad2, VelocityMode::MomentForm).v -
                         velocity(d2, t, xm, quad2, VelocityMode::MomentForm).v) /
                        (2.0 * h);
        }
        CHECK((jac - fd).norm() <= 1e-3 * std::max(1.0, fd.norm()));
    }
}

TEST_CASE("score closed form for conjugate targets") {
    // OU marginal of N(m, s2) after time tau is N(e^-tau m, e^-2tau s2 + 1 - e^-2tau).
    const auto quad = QuadratureSpec::gauss_hermite(1, 64);
    for (double sigma2 : {4.0, 0.25}) {
        const double m = sigma2 == 4.0 ? 1.0 : -0.6;
        const auto density = conjugate1d(m, sigma2);
        for (double tau : {0.25, 1.0}) {
            const double e = std::exp(-tau);
            const double var = e * e * sigma2 + 1.0 - e * e;
            for (double x : {-2.0, 0.5, 1.7}) {
                const double expect = -(x - e * m) / var;
                CHECK(score(density, tau, vec1(x), quad)[0] ==
                      doctest::Approx(expect).epsilon(1e-9));
            }
            const double eig = score_jacobian_eigmax(density, tau, vec1(0.4), quad);
            CHECK(eig == doctest::Approx((sigma2 - 1.0) * e * e / var).epsilon(1e-9));
        }
    }
}

TEST_CASE("score matches finite differences of the smoothed log-density") {
    // log f_{X_s}(x) = -x^2/2 + log Q_s r(x) + const with s = e^-tau; under a
    // shared node set the identity is exact for the gradient-form velocity, so
    // the check is limited by FD truncation. The discrete log-partition
    // carries wiggles at the raw top frequency s lambda^terms ~ 3e3, so the
    // step must sit well below their period.
    const auto density = TargetDensity::gaussian_perturbation(
        PerturbationFamily::weierstrass_fourier(1, 0.4, 2.0, 0.5, 12, 7), 1.0, 0.5);
    const auto quad = QuadratureSpec::gauss_hermite(1, 64);
    const double h = 1e-6;
    for (double tau : {0.25, 0.5, 1.0}) {
        const double s = std::exp(-tau);
        for (double x : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
            const auto lsd = [&](double z) {
                return -0.5 * z * z + tilted_moments(density, s, vec1(z), quad).log_Z;
            };
            const double fd = (lsd(x + h) - lsd(x - h)) / (2.0 * h);
            const double sc = score(density, tau, vec1(x), quad)[0];
            CHECK(std::abs(sc - fd) <= 1e-4 * std::max(1.0, std::abs(sc)));
        }
    }
}

TEST_CASE("mode capabilities and domain errors") {
    auto density = TargetDensity::gaussian_perturbation(
        PerturbationFamily::weierstrass_fourier(1, 0.4, 2.0, 0.5, 12, 7), 1.0, 0.5);
    const auto quad = QuadratureSpec::gauss_hermite(1, 32);

    density.family().set_smoothness_order(0);
    CHECK_THROWS_AS(velocity(density, 0.5, vec1(0.0), quad, VelocityMode::IbpForm),
                    CapabilityError);
    const VelocityEval ev = velocity(density, 0.5, vec1(0.0), quad);
    CHECK(ev.mode == VelocityMode::MomentForm);

    CHECK_THROWS_AS(velocity(density, 1.0, vec1(0.0), quad), DomainError);
    CHECK_THROWS_AS(velocity(density, -0.2, vec1(0.0), quad), DomainError);
    CHECK_THROWS_AS(score(density, -0.1, vec1(0.0), quad), DomainError);
    CHECK_THROWS_AS(score_jacobian_eigmax(density, 0.0, vec1(0.0), quad), DomainError);
}
