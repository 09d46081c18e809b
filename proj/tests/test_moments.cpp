#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Core>
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

Eigen::VectorXd vec2(double a, double b) {
    Eigen::VectorXd v(2);
    v << a, b;
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

// Conjugate-Gaussian tilted posterior: precisions add.
struct ConjugateTilt {
    double mean;
    double var;
};

ConjugateTilt conjugate_tilt(double m, double sigma2, double t, double x) {
    const double p = 1.0 / (1.0 - t * t) + 1.0 / sigma2 - 1.0;
    return {(t * x / (1.0 - t * t) + m / sigma2) / p, 1.0 / p};
}

}  // namespace

TEST_CASE("zero tilt has closed-form Gaussian moments") {
    const auto density =
        TargetDensity::gaussian_perturbation(PerturbationFamily::zero(2), 1.0, 1.0);
    const auto quad = QuadratureSpec::gauss_hermite(2, 32);
    const TiltedMoments m = tilted_moments(density, 0.7, vec2(1.0, -1.0), quad);
    CHECK((m.mean - vec2(0.7, -0.7)).norm() <= 1e-10);
    CHECK((m.cov - 0.51 * Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-10);
    CHECK(std::abs(m.log_Z) <= 1e-12);  // Q_t 1 = 1
    CHECK(m.ess_or_order == 32.0);
    CHECK(!m.accuracy_warning);
}

TEST_CASE("conjugate tilt follows precision addition") {
    const auto quad = QuadratureSpec::gauss_hermite(1, 64);
    for (double sigma2 : {0.5, 4.0}) {
        const double m0 = sigma2 == 0.5 ? -0.4 : 1.0;
        const auto density = conjugate1d(m0, sigma2);
        for (double t : {0.15, 0.6, 0.97}) {
            for (double x : {-1.8, 0.8}) {
                const ConjugateTilt ref = conjugate_tilt(m0, sigma2, t, x);
                const TiltedMoments m = tilted_moments(density, t, vec1(x), quad);
                CHECK(m.mean[0] == doctest::Approx(ref.mean).epsilon(1e-9));
                CHECK(m.cov(0, 0) == doctest::Approx(ref.var).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("t=0 recovers the target moments at any anchor") {
    const auto quad = QuadratureSpec::gauss_hermite(1, 64);
    const auto conj = conjugate1d(0.9, 0.49);
    for (double x : {-3.0, 2.0}) {
        const TiltedMoments m = tilted_moments(conj, 0.0, vec1(x), quad);
        CHECK(m.mean[0] == doctest::Approx(0.9).epsilon(1e-9));
        CHECK(m.cov(0, 0) == doctest::Approx(0.49).epsilon(1e-9));
    }

    const auto mix = bimodal1d();
    const double mix_mean = 0.35 * -1.3 + 0.65 * 1.1;
    const double mix_second = 0.35 * (0.36 + 1.3 * 1.3) + 0.65 * (0.64 + 1.1 * 1.1);
    const TiltedMoments m = tilted_moments(mix, 0.0, vec1(0.0), quad);
    CHECK(m.mean[0] == doctest::Approx(mix_mean).epsilon(1e-8));
    CHECK(m.cov(0, 0) == doctest::Approx(mix_second - mix_mean * mix_mean).epsilon(1e-8));
}

TEST_CASE("quadrature order convergence for mildly conjugate targets") {
    const auto density = conjugate1d(1.0, 1.25);
    const auto q16 = QuadratureSpec::gauss_hermite(1, 16);
    const auto q64 = QuadratureSpec::gauss_hermite(1, 64);
    for (double t : {0.0, 0.3, 0.7, 0.99, 1.0 - 1e-6}) {
        for (double x : {-2.0, 0.5, 3.0}) {
            const double m16 = tilted_moments(density, t, vec1(x), q16).mean[0];
            const double m64 = tilted_moments(density, t, vec1(x), q64).mean[0];
            CHECK(std::abs(m16 - m64) <= 1e-8);
        }
    }
}

TEST_CASE("covariance concentration under bounded perturbations") {
    // |a| <= K gives diag cov <= e^{2K} (1-t^2) and centered fourth moments
    // <= 3 e^{4K} (1-t^2)^2.
    const auto fam = PerturbationFamily::weierstrass_fourier(2, 0.4, 2.0, 0.5, 12, 7);
    const double K = 1.0;
    REQUIRE(fam.sup_abs_a() <= K);
    const auto density = TargetDensity::gaussian_perturbation(fam, K, 0.5);
    const auto quad = QuadratureSpec::gauss_hermite(2, 48);
    const double c2 = std::exp(2.0 * K);
    const double c4 = 3.0 * std::exp(4.0 * K);

    for (double t : {0.1, 0.6, 0.95, 1.0 - 1e-6}) {
        const double om = (1.0 - t) * (1.0 + t);
        for (double xv : {-2.0, 0.5, 2.0}) {
            const Eigen::VectorXd x = vec2(xv, -0.5 * xv);
            const TiltedMoments m = tilted_moments(density, t, x, quad);
            for (int i = 0; i < 2; ++i) CHECK(m.cov(i, i) <= c2 * om * (1.0 + 1e-9));

            const Eigen::VectorXd mean = m.mean;
            const Eigen::MatrixXd cov = m.cov;
            const auto f = [&](const Eigen::VectorXd& y) {
                const Eigen::VectorXd h = y - mean;
                Eigen::VectorXd out(4);
                int k = 0;
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j) {
                        const double dev = h[i] * h[j] - cov(i, j);
                        out[k++] = dev * dev;
                    }
                return out;
            };
            const Eigen::VectorXd fourth = tilted_expectation(density, t, x, quad, f, 4);
            for (int k = 0; k < 4; ++k) CHECK(fourth[k] <= c4 * om * om * (1.0 + 1e-9));
        }
    }
}

TEST_CASE("tilted expectation of the gradient equals the velocity") {
    // integration-by-parts identity: int grad a dp^{t,x} = V(t,x) for
    // Gaussian-perturbation targets (both sides through their own estimators).
    const auto quad = QuadratureSpec::gauss_hermite(1, 64);
    for (const auto& density : {conjugate1d(0.7, 1.25), bimodal1d()}) {
        for (double t : {0.2, 0.75}) {
            for (double x : {-1.2, 1.9}) {
                const auto f = [&](const Eigen::VectorXd& y) {
                    return density.family().grad_a(y);
                };
                const Eigen::VectorXd lhs = tilted_expectation(density, t, vec1(x), quad, f, 1);
                const Eigen::VectorXd rhs =
                    velocity(density, t, vec1(x), quad, VelocityMode::MomentForm).v;
                CHECK((lhs - rhs).norm() <= 1e-9);
            }
        }
    }
}

TEST_CASE("pairings against constant test functions vanish") {
    const auto density = bimodal1d();
    const auto quad = QuadratureSpec::gauss_hermite(1, 48);
    const auto one = [](const Eigen::VectorXd&) { return vec1(1.0); };
    const Eigen::MatrixXd g = grad_pairing(density, 0.6, vec1(0.4), quad, one, 1);
    CHECK(g.norm() <= 1e-12);
    const auto h = hess_pairing(density, 0.6, vec1(0.4), quad, one, 1);
    CHECK(h[0].norm() <= 1e-10);
}

TEST_CASE("pairing closed forms and the t=0 limit") {
    const auto quad = QuadratureSpec::gauss_hermite(1, 48);
    const auto idfn = [](const Eigen::VectorXd& y) { return y; };

    const auto zero = TargetDensity::gaussian_perturbation(PerturbationFamily::zero(1), 1.0, 1.0);
    for (double t : {0.25, 0.8}) {
        // (t/(1-t^2)) * Var = t for the pure Gaussian
        const Eigen::MatrixXd g = grad_pairing(zero, t, vec1(0.7), quad, idfn, 1);
        CHECK(g(0, 0) == doctest::Approx(t).epsilon(1e-10));
    }

    const auto conj = conjugate1d(1.0, 4.0);
    const double t = 0.55, x = -0.9;
    const ConjugateTilt ref = conjugate_tilt(1.0, 4.0, t, x);
    const Eigen::MatrixXd g = grad_pairing(conj, t, vec1(x), quad, idfn, 1);
    CHECK(g(0, 0) == doctest::Approx(t / (1.0 - t * t) * ref.var).epsilon(1e-9));

    CHECK(grad_pairing(conj, 0.0, vec1(x), quad, idfn, 1).norm() == 0.0);
    CHECK(hess_pairing(conj, 0.0, vec1(x), quad, idfn, 1)[0].norm() == 0.0);
}

TEST_CASE("hess pairing matches the finite-difference oracle") {
    const auto density = conjugate1d(0.5, 1.25);
    const auto quad = QuadratureSpec::gauss_hermite(1, 64);
    const double t = 0.45, x = 0.3, h = 1e-3;
    const auto f = [](const Eigen::VectorXd& y) { return vec1(y[0] * y[0]); };

    const auto g = [&](double anchor) {
        return tilted_expectation(density, t, vec1(anchor), quad, f, 1)[0];
    };
    const double fd = (g(x + h) - 2.0 * g(x) + g(x - h)) / (h * h);
    const double analytic = hess_pairing(density, t, vec1(x), quad, f, 1)[0](0, 0);
    CHECK(analytic == doctest::Approx(fd).epsilon(1e-4));
}

TEST_CASE("importance sampling agrees with Gauss-Hermite") {
    struct Case {
        TargetDensity density;
        Eigen::VectorXd x;
    };
    std::vector<Case> cases;
    cases.push_back({bimodal1d(), vec1(0.6)});
    cases.push_back({TargetDensity::gaussian_perturbation(
                         PerturbationFamily::conjugate_gaussian(vec2(0.5, -0.3), 0.8), 1.0, 1.0),
                     vec2(-0.7, 1.1)});
    {
        Eigen::VectorXd m3(3);
        m3 << 0.4, -0.2, 0.1;
        cases.push_back({TargetDensity::gaussian_perturbation(
                             PerturbationFamily::conjugate_gaussian(m3, 1.3), 1.0, 1.0),
                         m3 * 0.5});
    }

    for (const auto& c : cases) {
        const int d = c.density.dim();
        const auto gh = QuadratureSpec::gauss_hermite(d, 48);
        const auto is = QuadratureSpec::importance(d, 1000000, 3);
        const TiltedMoments ref = tilted_moments(c.density, 0.5, c.x, gh);
        const TiltedMoments est = tilted_moments(c.density, 0.5, c.x, is);
        REQUIRE(est.mean_se.size() == d);
        CHECK(est.ess_or_order > 50.0);
        CHECK(!est.accuracy_warning);
        for (int j = 0; j < d; ++j)
            CHECK(std::abs(est.mean[j] - ref.mean[j]) <= 5.0 * est.mean_se[j]);
    }
}

TEST_CASE("importance sampling flags a collapsed effective sample size") {
    const auto density = conjugate1d(4.0, 0.3);
    const auto is = QuadratureSpec::importance(1, 1000, 1);
    const TiltedMoments m = tilted_moments(density, 0.0, vec1(0.0), is);
    CHECK(m.accuracy_warning);
    CHECK(m.ess_or_order < 50.0);
}

TEST_CASE("ball anchors far outside the reachable set degenerate") {
    const auto ball = TargetDensity::ball_supported(PerturbationFamily::zero(1), 2.0, 1.0);
    const auto quad = QuadratureSpec::gauss_hermite(1, 16);
    CHECK_THROWS_AS(tilted_moments(ball, 0.99, vec1(5.0), quad), DegenerateMeasureError);
}

TEST_CASE("node reuse makes repeated calls bit-identical") {
    const auto density = bimodal1d();
    const auto quad = QuadratureSpec::gauss_hermite(1, 48);
    const TiltedMoments a = tilted_moments(density, 0.62, vec1(0.31), quad);
    const TiltedMoments b = tilted_moments(density, 0.62, vec1(0.31), quad);
    CHECK(a.mean[0] == b.mean[0]);
    CHECK(a.cov(0, 0) == b.cov(0, 0));
    CHECK(a.log_Z == b.log_Z);

    const auto is = QuadratureSpec::importance(1, 10000, 11);
    const TiltedMoments c = tilted_moments(density, 0.62, vec1(0.31), is);
    const TiltedMoments d = tilted_moments(density, 0.62, vec1(0.31), is);
    CHECK(c.mean[0] == d.mean[0]);
    CHECK(c.ess_or_order == d.ess_or_order);
}

TEST_CASE("argument validation") {
    const auto density = bimodal1d();
    const auto quad = QuadratureSpec::gauss_hermite(1, 32);
    CHECK_THROWS_AS(tilted_moments(density, -0.1, vec1(0.0), quad), DomainError);
    CHECK_THROWS_AS(tilted_moments(density, 1.0, vec1(0.0), quad), DomainError);
    CHECK_THROWS_AS(tilted_moments(density, 0.5, vec2(0.0, 1.0), quad), InvalidInputError);

    CHECK_THROWS_AS(QuadratureSpec::gauss_hermite(1, 4), InvalidInputError);
    CHECK_THROWS_AS(QuadratureSpec::gauss_hermite(1, 200), InvalidInputError);
    CHECK_THROWS_AS(QuadratureSpec::gauss_hermite(5, 32), InvalidInputError);
    CHECK_THROWS_AS(QuadratureSpec::importance(1, 100, 0), InvalidInputError);
    CHECK_THROWS_AS(QuadratureSpec::importance(1, 100000000, 0), InvalidInputError);

    const auto mismatched = QuadratureSpec::gauss_hermite(2, 32);
    CHECK_THROWS_AS(tilted_moments(density, 0.5, vec1(0.0), mismatched), InvalidInputError);
}
