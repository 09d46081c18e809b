#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

#include "heatflow/density.hpp"
#include "heatflow/quadrature.hpp"

namespace heatflow {

struct FlowConfig {
    /// Integration endpoint; the field is singular in t at 1 for rough
    /// perturbations, so the last stretch is reported through tail_bound.
    double t_end = 1.0 - 1e-8;
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    /// Step ceiling h <= max_step_fraction * (1 - t).
    double max_step_fraction = 0.1;
    bool with_jacobian = false;
    /// LogSwitch integrates tau = -log t while t < 0.1 (truncated at tau = 14);
    /// the moment-form velocity is already regular at t = 0, so Direct is the
    /// default and LogSwitch exists as a cross-check.
    enum class TimeParam { Direct, LogSwitch };
    TimeParam time_param = TimeParam::Direct;

    void validate() const;
};

struct FlowResult {
    Eigen::VectorXd x0;
    Eigen::VectorXd x_final;
    std::vector<double> times;                // accepted steps, [0, ..., t_end]
    std::vector<Eigen::VectorXd> states;
    std::optional<Eigen::MatrixXd> jacobian;  // at t_end, when requested
    long steps_accepted = 0;
    long steps_rejected = 0;
    /// A posteriori bound on |X_1 - X_{t_end}|: the closed-form integral of
    /// |V(t_end, x_final)| ((1-t)/(1-t_end))^{-1/2} over [t_end, 1], i.e.
    /// 2 (1-t_end) |V(t_end, x_final)|.
    double tail_bound = 0.0;
    /// Trapezoidal accumulation of lambda_max(grad V(t, X_t)) dt along the
    /// trajectory; only filled when with_jacobian (Gronwall cross-check).
    double lambda_max_integral = 0.0;
};

/// Transport ODE dX/dt = V(t, X) from (0, x0) to cfg.t_end, with the
/// variational equation dJ/dt = grad V(t, X) J when cfg.with_jacobian.
FlowResult integrate_flow(const TargetDensity& density, const Eigen::VectorXd& x0,
                          const FlowConfig& cfg, const QuadratureSpec& quad);

/// Same integration stopped at min(t_stop, cfg.t_end); trajectory recording
/// optional so ensembles stay cheap.
FlowResult integrate_flow_to(const TargetDensity& density, const Eigen::VectorXd& x0,
                             double t_stop, const FlowConfig& cfg, const QuadratureSpec& quad,
                             bool record_trajectory = true);

/// Langevin reformulation: dL/dt = grad log Q_u r(L) with u = e^{-(s-t)},
/// integrated over t in [0, s - (1 - cfg.t_end)]. L_{s,s} converges to the
/// transport endpoint X_1 as s grows. s_horizon must lie in [1, 40].
FlowResult langevin_flow(const TargetDensity& density, const Eigen::VectorXd& x0,
                         double s_horizon, const FlowConfig& cfg, const QuadratureSpec& quad);

/// Backward integration from (cfg.t_end, y) to t = 0: the inverse transport
/// map. y must lie in the open support; the trajectory must stay inside
/// |Z| <= 50 (DivergenceError otherwise).
Eigen::VectorXd inverse_map(const TargetDensity& density, const Eigen::VectorXd& y,
                            const FlowConfig& cfg, const QuadratureSpec& quad);

/// n transported standard-Gaussian draws, deterministic per (seed, index) and
/// independent of worker count. Failed particles abort with their indices.
std::vector<Eigen::VectorXd> pushforward_samples(const TargetDensity& density, std::size_t n,
                                                 double t_stop, std::uint64_t seed,
                                                 const FlowConfig& cfg, const QuadratureSpec& quad,
                                                 int threads = 1);

/// Ensemble variant keeping per-particle diagnostics (no trajectories).
std::vector<FlowResult> transport_ensemble(const TargetDensity& density, std::size_t n,
                                           double t_stop, std::uint64_t seed,
                                           const FlowConfig& cfg, const QuadratureSpec& quad,
                                           int threads = 1);

/// Isotropic-to-anisotropic composition for diagonal covariances:
/// x -> Sigma_q^{1/2} T_q( T_p^{-1}( Sigma_p^{-1/2} x)). The diagonals are
/// variances; T_p, T_q are the transport maps of the two isotropic factors.
Eigen::VectorXd composed_affine_transport(const TargetDensity& p_target,
                                          const TargetDensity& q_target,
                                          const Eigen::VectorXd& sigma_p_diag,
                                          const Eigen::VectorXd& sigma_q_diag,
                                          const Eigen::VectorXd& x, const FlowConfig& cfg,
                                          const QuadratureSpec& quad_p,
                                          const QuadratureSpec& quad_q);

}  // namespace heatflow
