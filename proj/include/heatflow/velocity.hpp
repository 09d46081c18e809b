#pragma once

#include <Eigen/Core>
#include <optional>

#include "heatflow/density.hpp"
#include "heatflow/moments.hpp"
#include "heatflow/quadrature.hpp"

namespace heatflow {

enum class VelocityMode {
    MomentForm,  // (mu^{t,x} - t x)/(1-t^2); analytic at t = 0
    IbpForm,     // int grad log r dp^{t,x}; bounded whenever grad log r is
    Default,     // IbpForm when a gradient exists, MomentForm otherwise
};

struct VelocityEval {
    Eigen::VectorXd v;
    std::optional<Eigen::MatrixXd> jac;  // symmetric d x d when requested
    VelocityMode mode = VelocityMode::MomentForm;
    double t = 0.0;
    Eigen::VectorXd x;
};

/// The transport velocity V(t,x) = (1/t) grad log Q_t r(x), evaluated through
/// tilted moments so the 1/t singularity never appears. One quadrature pass
/// also yields the Jacobian when with_jacobian is set.
VelocityEval velocity(const TargetDensity& density, double t, const Eigen::VectorXd& x,
                      const QuadratureSpec& quad, VelocityMode mode = VelocityMode::Default,
                      bool with_jacobian = false);

/// grad V(t,x) = (t/(1-t^2)^2) cov - (t/(1-t^2)) I from the covariance
/// identity, symmetrized. Zero matrix at t = 0 (limit).
Eigen::MatrixXd velocity_jacobian(const TargetDensity& density, double t,
                                  const Eigen::VectorXd& x, const QuadratureSpec& quad);

/// Diffusion score s(tau, x) = -x + e^{-tau} V(e^{-tau}, x) of the
/// Ornstein-Uhlenbeck marginal started at p.
Eigen::VectorXd score(const TargetDensity& density, double tau, const Eigen::VectorXd& x,
                      const QuadratureSpec& quad);

/// lambda_max(grad s(tau,x) + I) = lambda_max(e^{-tau} grad V(e^{-tau}, x)).
/// Requires tau > 0.
double score_jacobian_eigmax(const TargetDensity& density, double tau, const Eigen::VectorXd& x,
                             const QuadratureSpec& quad);

}  // namespace heatflow
