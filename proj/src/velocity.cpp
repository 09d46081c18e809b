#include "heatflow/velocity.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "heatflow/errors.hpp"

namespace heatflow {

namespace {

Eigen::MatrixXd jacobian_from_cov(double t, const Eigen::MatrixXd& cov) {
    const int d = static_cast<int>(cov.rows());
    if (t == 0.0) return Eigen::MatrixXd::Zero(d, d);
    const double om = (1.0 - t) * (1.0 + t);
    Eigen::MatrixXd jac =
        (t / (om * om)) * cov - (t / om) * Eigen::MatrixXd::Identity(d, d);
    // cov comes out of quadrature symmetric by construction; the symmetrization
    // is the documented contract, not a numerical rescue.
    return 0.5 * (jac + jac.transpose());
}

}  // namespace

VelocityEval velocity(const TargetDensity& density, double t, const Eigen::VectorXd& x,
                      const QuadratureSpec& quad, VelocityMode mode, bool with_jacobian) {
    if (!(t >= 0.0 && t < 1.0)) throw DomainError("velocity: t must lie in [0, 1)");
    VelocityMode resolved = mode;
    if (resolved == VelocityMode::Default)
        resolved = density.smoothness_order() >= 1 ? VelocityMode::IbpForm
                                                   : VelocityMode::MomentForm;
    if (resolved == VelocityMode::IbpForm && density.smoothness_order() < 1)
        throw CapabilityError("velocity: integrated-by-parts form needs a gradient");

    const detail::NodeEval ev = detail::evaluate_tilted_nodes(density, t, x, quad);
    const Eigen::VectorXd mean = ev.ys.transpose() * ev.w;

    VelocityEval out;
    out.mode = resolved;
    out.t = t;
    out.x = x;
    if (resolved == VelocityMode::MomentForm) {
        out.v = (mean - t * x) / ((1.0 - t) * (1.0 + t));
    } else {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(density.dim());
        for (Eigen::Index k = 0; k < ev.ys.rows(); ++k) {
            if (ev.w[k] == 0.0) continue;
            acc.noalias() += ev.w[k] * eval_grad_log_r(density, ev.ys.row(k).transpose());
        }
        out.v = acc;
    }
    if (with_jacobian) {
        const int d = density.dim();
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
        for (Eigen::Index k = 0; k < ev.ys.rows(); ++k) {
            const Eigen::VectorXd h = ev.ys.row(k).transpose() - mean;
            cov.noalias() += ev.w[k] * (h * h.transpose());
        }
        out.jac = jacobian_from_cov(t, cov);
    }
    return out;
}

Eigen::MatrixXd velocity_jacobian(const TargetDensity& density, double t,
                                  const Eigen::VectorXd& x, const QuadratureSpec& quad) {
    if (!(t >= 0.0 && t < 1.0)) throw DomainError("velocity_jacobian: t must lie in [0, 1)");
    if (t == 0.0) {
        detail::evaluate_tilted_nodes(density, t, x, quad);  // argument validation
        return Eigen::MatrixXd::Zero(density.dim(), density.dim());
    }
    const TiltedMoments m = tilted_moments(density, t, x, quad);
    return jacobian_from_cov(t, m.cov);
}

Eigen::VectorXd score(const TargetDensity& density, double tau, const Eigen::VectorXd& x,
                      const QuadratureSpec& quad) {
    if (!(tau >= 0.0)) throw DomainError("score: tau must be non-negative");
    const double s = std::exp(-tau);
    return -x + s * velocity(density, s, x, quad).v;
}

double score_jacobian_eigmax(const TargetDensity& density, double tau, const Eigen::VectorXd& x,
                             const QuadratureSpec& quad) {
    if (!(tau > 0.0)) throw DomainError("score_jacobian_eigmax: tau must be positive");
    const double s = std::exp(-tau);
    const Eigen::MatrixXd m = s * velocity_jacobian(density, s, x, quad);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

}  // namespace heatflow
