#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "heatflow/density.hpp"
#include "heatflow/quadrature.hpp"

namespace heatflow {

/// Moments of the tilted measure p^{t,x}(y) proportional to phi^{t,x}(y) r(y),
/// where phi^{t,x} = N(t x, (1-t^2) I). Every velocity/score/Jacobian formula
/// downstream is a functional of these.
struct TiltedMoments {
    double log_Z = 0.0;        // log Q_t r(x) up to the density's additive constant
    Eigen::VectorXd mean;      // mu^{t,x}
    Eigen::MatrixXd cov;       // int H H^T dp^{t,x}, H(y,x) = y - mu^{t,x}
    double ess_or_order = 0;   // effective sample size (IS) or GH order used
    double t = 0.0;
    Eigen::VectorXd x;
    bool accuracy_warning = false;  // IS effective sample size below 50
    Eigen::VectorXd mean_se;        // delta-method standard errors (IS only)
};

namespace detail {

/// One evaluated node set: transformed points y_k = t x + sqrt(1-t^2) z_k and
/// self-normalized weights. Shared by every operation so repeated calls with
/// identical arguments are bit-identical.
struct NodeEval {
    Eigen::MatrixXd ys;   // N x d
    Eigen::VectorXd w;    // normalized weights, sum 1
    double log_Z = 0.0;
    double ess_or_order = 0.0;
    bool accuracy_warning = false;
};

NodeEval evaluate_tilted_nodes(const TargetDensity& density, double t, const Eigen::VectorXd& x,
                               const QuadratureSpec& quad);

}  // namespace detail

TiltedMoments tilted_moments(const TargetDensity& density, double t, const Eigen::VectorXd& x,
                             const QuadratureSpec& quad);

/// int f dp^{t,x} for vector-valued f with m components, on the same node set
/// as tilted_moments.
Eigen::VectorXd tilted_expectation(
    const TargetDensity& density, double t, const Eigen::VectorXd& x, const QuadratureSpec& quad,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, int m);

/// int f(y) grad_x p^{t,x}(y) dy = (t/(1-t^2)) int f(y) H(y,x)^T dp^{t,x},
/// returned as an m x d matrix. Zero at t = 0 (limit value).
Eigen::MatrixXd grad_pairing(const TargetDensity& density, double t, const Eigen::VectorXd& x,
                             const QuadratureSpec& quad,
                             const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                             int m);

/// int f(y) hess_x p^{t,x}(y) dy = (t^2/(1-t^2)^2) int f (H H^T - Cov) dp^{t,x},
/// one d x d matrix per component of f. Zero at t = 0.
std::vector<Eigen::MatrixXd> hess_pairing(
    const TargetDensity& density, double t, const Eigen::VectorXd& x, const QuadratureSpec& quad,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, int m);

}  // namespace heatflow
