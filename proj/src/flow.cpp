#include "heatflow/flow.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "heatflow/errors.hpp"
#include "heatflow/parallel.hpp"
#include "heatflow/rng.hpp"
#include "heatflow/velocity.hpp"

namespace heatflow {

void FlowConfig::validate() const {
    if (!(t_end > 0.0 && t_end < 1.0)) throw InvalidInputError("flow: t_end must lie in (0, 1)");
    if (!(max_step_fraction > 0.0 && max_step_fraction <= 0.5))
        throw InvalidInputError("flow: max_step_fraction must lie in (0, 0.5]");
    if (!(rel_tol > 0.0 && abs_tol > 0.0))
        throw InvalidInputError("flow: tolerances must be positive");
}

namespace {

// Dormand-Prince 5(4) with the first-same-as-last property: stage 7 sits at
// (t+h, y5) and becomes stage 1 of the next step, so every accepted step ends
// with a fresh derivative evaluation at the new state for free.
constexpr double kC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA2[] = {1.0 / 5};
constexpr double kA3[] = {3.0 / 40, 9.0 / 40};
constexpr double kA4[] = {44.0 / 45, -56.0 / 15, 32.0 / 9};
constexpr double kA5[] = {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729};
constexpr double kA6[] = {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176,
                          -5103.0 / 18656};
constexpr double kB5[] = {35.0 / 384,     0.0, 500.0 / 1113, 125.0 / 192,
                          -2187.0 / 6784, 11.0 / 84};
constexpr double kErr[] = {71.0 / 57600,      0.0,        -71.0 / 16695, 71.0 / 1920,
                           -17253.0 / 339200, 22.0 / 525, -1.0 / 40};

struct StepperHooks {
    /// Maximum |h| allowed when the step starts at time t (0 disables).
    std::function<double(double)> max_abs_step;
    /// Called after each accepted step with the new time, state, and the
    /// derivative at the new state (the FSAL stage).
    std::function<void(double, const Eigen::VectorXd&, const Eigen::VectorXd&)> on_accept;
};

struct StepCounters {
    long accepted = 0;
    long rejected = 0;
};

using Rhs = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;

double error_norm(const Eigen::VectorXd& err, const Eigen::VectorXd& y0,
                  const Eigen::VectorXd& y1, double rel_tol, double abs_tol) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < err.size(); ++i) {
        const double scale = abs_tol + rel_tol * std::max(std::abs(y0[i]), std::abs(y1[i]));
        const double e = err[i] / scale;
        acc += e * e;
    }
    return std::sqrt(acc / static_cast<double>(err.size()));
}

/// Adaptive integration of dy/dt = rhs(t, y) from t0 to t1 (either direction).
void integrate_adaptive(const Rhs& rhs, double t0, double t1, Eigen::VectorXd& y,
                        double rel_tol, double abs_tol, StepCounters& counters,
                        const StepperHooks& hooks) {
    const double dir = t1 > t0 ? 1.0 : -1.0;
    const double span = std::abs(t1 - t0);
    if (span == 0.0) return;

    double t = t0;
    double h = 0.1 * span;
    if (hooks.max_abs_step) h = std::min(h, hooks.max_abs_step(t));
    h = std::max(h, 1e-13);

    Eigen::VectorXd k[7];
    k[0] = rhs(t, y);
    Eigen::VectorXd ytmp(y.size()), y5(y.size()), err(y.size());

    while (dir * (t1 - t) > 0.0) {
        double habs = std::min(h, std::abs(t1 - t));
        if (hooks.max_abs_step) habs = std::min(habs, hooks.max_abs_step(t));
        if (habs < 1e-14) {
            std::ostringstream os;
            os << "flow: step size underflow at t = " << t << " (|state| = " << y.norm() << ")";
            throw StiffnessError(os.str());
        }
        const double hs = dir * habs;

        ytmp = y + hs * (kA2[0] * k[0]);
        k[1] = rhs(t + kC[1] * hs, ytmp);
        ytmp = y + hs * (kA3[0] * k[0] + kA3[1] * k[1]);
        k[2] = rhs(t + kC[2] * hs, ytmp);
        ytmp = y + hs * (kA4[0] * k[0] + kA4[1] * k[1] + kA4[2] * k[2]);
        k[3] = rhs(t + kC[3] * hs, ytmp);
        ytmp = y + hs * (kA5[0] * k[0] + kA5[1] * k[1] + kA5[2] * k[2] + kA5[3] * k[3]);
        k[4] = rhs(t + kC[4] * hs, ytmp);
        ytmp = y + hs * (kA6[0] * k[0] + kA6[1] * k[1] + kA6[2] * k[2] + kA6[3] * k[3] +
                         kA6[4] * k[4]);
        k[5] = rhs(t + kC[5] * hs, ytmp);
        y5 = y + hs * (kB5[0] * k[0] + kB5[2] * k[2] + kB5[3] * k[3] + kB5[4] * k[4] +
                       kB5[5] * k[5]);
        k[6] = rhs(t + hs, y5);
        err = hs * (kErr[0] * k[0] + kErr[2] * k[2] + kErr[3] * k[3] + kErr[4] * k[4] +
                    kErr[5] * k[5] + kErr[6] * k[6]);

        if (!y5.allFinite() || !err.allFinite()) {
            ++counters.rejected;
            h = habs * 0.2;
            if (h < 1e-14)
                throw DivergenceError("flow: state became non-finite and step control collapsed");
            continue;
        }

        const double en = error_norm(err, y, y5, rel_tol, abs_tol);
        if (en <= 1.0) {
            t += hs;
            // Snap onto the endpoint when the remainder is pure roundoff, so
            // recorded times stay strictly increasing up to exactly t1.
            if (std::abs(t1 - t) <= 1e-14 * span) t = t1;
            y.swap(y5);
            k[0] = k[6];
            ++counters.accepted;
            if (hooks.on_accept) hooks.on_accept(t, y, k[0]);
        } else {
            ++counters.rejected;
        }
        const double factor =
            en > 0.0 ? std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0) : 5.0;
        h = habs * factor;
    }
}

/// Right-hand side of the transport system. When with_jacobian, the state is
/// [x; vec(J)] and the derivative [V; grad V * J]. The last grad V evaluation
/// is cached with its time so accepted-step hooks can reuse it (the FSAL stage
/// is always the most recent call).
struct TransportRhs {
    const TargetDensity* density;
    const QuadratureSpec* quad;
    bool with_jacobian;
    int d;
    mutable double cached_t = -1.0;
    mutable Eigen::MatrixXd cached_grad_v;

    Eigen::VectorXd operator()(double t, const Eigen::VectorXd& state) const {
        const Eigen::VectorXd x = state.head(d);
        const VelocityEval ev =
            velocity(*density, t, x, *quad, VelocityMode::Default, with_jacobian);
        if (!with_jacobian) return ev.v;
        Eigen::VectorXd deriv(d + d * d);
        deriv.head(d) = ev.v;
        const Eigen::MatrixXd jac_state =
            Eigen::Map<const Eigen::MatrixXd>(state.data() + d, d, d);
        Eigen::Map<Eigen::MatrixXd>(deriv.data() + d, d, d) = (*ev.jac) * jac_state;
        cached_t = t;
        cached_grad_v = *ev.jac;
        return deriv;
    }
};

double lambda_max_sym(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

}  // namespace

FlowResult integrate_flow_to(const TargetDensity& density, const Eigen::VectorXd& x0,
                             double t_stop, const FlowConfig& cfg, const QuadratureSpec& quad,
                             bool record_trajectory) {
    cfg.validate();
    if (x0.size() != density.dim()) throw InvalidInputError("flow: anchor dim mismatch");
    if (!x0.allFinite()) throw InvalidInputError("flow: non-finite anchor");
    const double target_t = std::min(t_stop, cfg.t_end);
    if (!(target_t > 0.0)) throw InvalidInputError("flow: t_stop must be positive");

    const int d = density.dim();
    TransportRhs rhs{&density, &quad, cfg.with_jacobian, d, -1.0, {}};
    // Reference wrapper: std::function must not copy the rhs, the accepted-step
    // hook reads its gradient cache.
    const Rhs rhs_fn = [&rhs](double t, const Eigen::VectorXd& y) { return rhs(t, y); };

    FlowResult res;
    res.x0 = x0;
    res.times.push_back(0.0);
    if (record_trajectory) res.states.push_back(x0);

    Eigen::VectorXd state;
    if (cfg.with_jacobian) {
        state.resize(d + d * d);
        state.head(d) = x0;
        Eigen::Map<Eigen::MatrixXd>(state.data() + d, d, d) =
            Eigen::MatrixXd::Identity(d, d);
    } else {
        state = x0;
    }

    double lambda_prev = 0.0;
    double t_prev = 0.0;
    bool have_lambda = false;
    StepperHooks hooks;
    hooks.max_abs_step = [&cfg](double t) { return cfg.max_step_fraction * (1.0 - t); };
    hooks.on_accept = [&](double t, const Eigen::VectorXd& y, const Eigen::VectorXd&) {
        res.times.push_back(t);
        if (record_trajectory) res.states.push_back(y.head(d));
        if (cfg.with_jacobian && rhs.cached_t == t) {
            const double lam = lambda_max_sym(rhs.cached_grad_v);
            if (have_lambda) res.lambda_max_integral += 0.5 * (lambda_prev + lam) * (t - t_prev);
            lambda_prev = lam;
            t_prev = t;
            have_lambda = true;
        }
    };

    StepCounters counters;
    if (cfg.time_param == FlowConfig::TimeParam::LogSwitch) {
        // tau = -log t while t < 0.1, truncated at tau = 14. The start value
        // at t0 = e^{-14} is the first-order flow from t = 0, which is exact
        // to O(t0^2) because V is smooth in t at 0.
        const double t_switch = std::min(0.1, target_t);
        const double tau_max = 14.0;
        const double t0 = std::exp(-tau_max);
        if (target_t <= t0) {
            const Eigen::VectorXd v0 = velocity(density, 0.0, x0, quad).v;
            res.x_final = x0 + target_t * v0;
            res.times.push_back(target_t);
            if (record_trajectory) res.states.push_back(res.x_final);
            if (cfg.with_jacobian) res.jacobian = Eigen::MatrixXd::Identity(d, d);
            res.tail_bound =
                2.0 * (1.0 - target_t) * velocity(density, target_t, res.x_final, quad).v.norm();
            return res;
        }
        { // Seed the truncated start point.
            const VelocityEval ev0 =
                velocity(density, 0.0, x0, quad, VelocityMode::Default, cfg.with_jacobian);
            state.head(d) += t0 * ev0.v;
            if (cfg.with_jacobian)
                Eigen::Map<Eigen::MatrixXd>(state.data() + d, d, d) +=
                    t0 * (*ev0.jac);
        }
        StepperHooks tau_hooks;
        tau_hooks.max_abs_step = {};
        tau_hooks.on_accept = [&](double tau, const Eigen::VectorXd& y, const Eigen::VectorXd&) {
            res.times.push_back(std::exp(-tau));
            if (record_trajectory) res.states.push_back(y.head(d));
        };
        const Rhs tau_rhs = [&rhs](double tau, const Eigen::VectorXd& y) -> Eigen::VectorXd {
            const double t = std::exp(-tau);
            return -t * rhs(t, y);
        };
        integrate_adaptive(tau_rhs, tau_max, -std::log(t_switch), state, cfg.rel_tol,
                           cfg.abs_tol, counters, tau_hooks);
        if (target_t > t_switch)
            integrate_adaptive(rhs_fn, t_switch, target_t, state, cfg.rel_tol, cfg.abs_tol,
                               counters, hooks);
    } else {
        integrate_adaptive(rhs_fn, 0.0, target_t, state, cfg.rel_tol, cfg.abs_tol, counters,
                           hooks);
    }

    res.steps_accepted = counters.accepted;
    res.steps_rejected = counters.rejected;
    res.x_final = state.head(d);
    if (cfg.with_jacobian)
        res.jacobian = Eigen::Map<const Eigen::MatrixXd>(state.data() + d, d, d);
    if (res.times.back() != target_t) {
        res.times.push_back(target_t);
        if (record_trajectory) res.states.push_back(res.x_final);
    }
    res.tail_bound =
        2.0 * (1.0 - target_t) * velocity(density, target_t, res.x_final, quad).v.norm();
    return res;
}

FlowResult integrate_flow(const TargetDensity& density, const Eigen::VectorXd& x0,
                          const FlowConfig& cfg, const QuadratureSpec& quad) {
    return integrate_flow_to(density, x0, cfg.t_end, cfg, quad);
}

FlowResult langevin_flow(const TargetDensity& density, const Eigen::VectorXd& x0,
                         double s_horizon, const FlowConfig& cfg, const QuadratureSpec& quad) {
    cfg.validate();
    if (!(s_horizon >= 1.0 && s_horizon <= 40.0))
        throw DomainError("langevin: horizon must lie in [1, 40]");
    if (x0.size() != density.dim()) throw InvalidInputError("langevin: anchor dim mismatch");
    if (!x0.allFinite()) throw InvalidInputError("langevin: non-finite anchor");

    const int d = density.dim();
    const double gap = 1.0 - cfg.t_end;
    const double t_stop = s_horizon - gap;

    // grad log Q_u r(L) = u V(u, L) with u = e^{-(s-t)}; near t = s the field
    // inherits the same endpoint singularity class as the transport flow.
    TransportRhs base{&density, &quad, cfg.with_jacobian, d, -1.0, {}};
    const Rhs rhs = [&base, s_horizon](double t, const Eigen::VectorXd& y) -> Eigen::VectorXd {
        const double u = std::exp(-(s_horizon - t));
        return u * base(u, y);
    };

    FlowResult res;
    res.x0 = x0;
    res.times.push_back(0.0);
    res.states.push_back(x0);

    Eigen::VectorXd state;
    if (cfg.with_jacobian) {
        state.resize(d + d * d);
        state.head(d) = x0;
        Eigen::Map<Eigen::MatrixXd>(state.data() + d, d, d) = Eigen::MatrixXd::Identity(d, d);
    } else {
        state = x0;
    }

    StepperHooks hooks;
    hooks.max_abs_step = [&cfg, s_horizon](double t) {
        return std::min(1.0, cfg.max_step_fraction * (s_horizon - t));
    };
    hooks.on_accept = [&](double t, const Eigen::VectorXd& y, const Eigen::VectorXd&) {
        res.times.push_back(t);
        res.states.push_back(y.head(d));
    };

    StepCounters counters;
    integrate_adaptive(rhs, 0.0, t_stop, state, cfg.rel_tol, cfg.abs_tol, counters, hooks);
    res.steps_accepted = counters.accepted;
    res.steps_rejected = counters.rejected;
    res.x_final = state.head(d);
    if (cfg.with_jacobian)
        res.jacobian = Eigen::Map<const Eigen::MatrixXd>(state.data() + d, d, d);
    res.tail_bound = 2.0 * gap * rhs(t_stop, state).head(d).norm();
    return res;
}

Eigen::VectorXd inverse_map(const TargetDensity& density, const Eigen::VectorXd& y,
                            const FlowConfig& cfg, const QuadratureSpec& quad) {
    cfg.validate();
    if (y.size() != density.dim()) throw InvalidInputError("inverse: dim mismatch");
    if (!y.allFinite()) throw InvalidInputError("inverse: non-finite input");
    if (density.kind() == TargetDensity::Kind::BallSupported && y.norm() >= 1.0)
        throw DomainError("inverse: point outside the open support ball");

    const int d = density.dim();
    TransportRhs rhs{&density, &quad, false, d, -1.0, {}};
    const Rhs rhs_fn = [&rhs](double t, const Eigen::VectorXd& z) { return rhs(t, z); };
    Eigen::VectorXd state = y;
    StepperHooks hooks;
    hooks.max_abs_step = [&cfg](double t) { return cfg.max_step_fraction * (1.0 - t); };
    hooks.on_accept = [](double, const Eigen::VectorXd& z, const Eigen::VectorXd&) {
        if (z.norm() > 50.0)
            throw DivergenceError("inverse: backward trajectory left the bounding box |Z| <= 50");
    };
    StepCounters counters;
    integrate_adaptive(rhs_fn, cfg.t_end, 0.0, state, cfg.rel_tol, cfg.abs_tol, counters, hooks);
    return state;
}

std::vector<FlowResult> transport_ensemble(const TargetDensity& density, std::size_t n,
                                           double t_stop, std::uint64_t seed,
                                           const FlowConfig& cfg, const QuadratureSpec& quad,
                                           int threads) {
    cfg.validate();
    if (n < 1) throw InvalidInputError("transport: n must be positive");
    if (!(t_stop > 0.0 && t_stop <= 1.0))
        throw InvalidInputError("transport: t_stop must lie in (0, 1]");
    const int d = density.dim();
    std::vector<FlowResult> out(n);
    std::vector<std::string> failures(n);
    parallel_for(n, threads, [&](std::size_t i) {
        const Eigen::VectorXd x0 = counter_normal_vec(
            seed, 0, static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(d), d);
        try {
            out[i] = integrate_flow_to(density, x0, t_stop, cfg, quad,
                                       /*record_trajectory=*/false);
        } catch (const Error& e) {
            failures[i] = e.what();
        }
    });
    std::ostringstream failed;
    int n_failed = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (failures[i].empty()) continue;
        if (n_failed < 5) failed << (n_failed ? ", " : "") << i << " (" << failures[i] << ")";
        ++n_failed;
    }
    if (n_failed > 0) {
        std::ostringstream os;
        os << "transport: " << n_failed << " particle(s) failed at indices " << failed.str();
        throw DivergenceError(os.str());
    }
    return out;
}

std::vector<Eigen::VectorXd> pushforward_samples(const TargetDensity& density, std::size_t n,
                                                 double t_stop, std::uint64_t seed,
                                                 const FlowConfig& cfg,
                                                 const QuadratureSpec& quad, int threads) {
    const std::vector<FlowResult> ens =
        transport_ensemble(density, n, t_stop, seed, cfg, quad, threads);
    std::vector<Eigen::VectorXd> pts(n);
    for (std::size_t i = 0; i < n; ++i) pts[i] = ens[i].x_final;
    return pts;
}

Eigen::VectorXd composed_affine_transport(const TargetDensity& p_target,
                                          const TargetDensity& q_target,
                                          const Eigen::VectorXd& sigma_p_diag,
                                          const Eigen::VectorXd& sigma_q_diag,
                                          const Eigen::VectorXd& x, const FlowConfig& cfg,
                                          const QuadratureSpec& quad_p,
                                          const QuadratureSpec& quad_q) {
    const int d = p_target.dim();
    if (q_target.dim() != d || sigma_p_diag.size() != d || sigma_q_diag.size() != d ||
        x.size() != d)
        throw InvalidInputError("affine composition: dimension mismatch");
    if ((sigma_p_diag.array() <= 0.0).any() || (sigma_q_diag.array() <= 0.0).any())
        throw InvalidInputError("affine composition: variances must be positive");
    const Eigen::VectorXd z = x.array() / sigma_p_diag.array().sqrt();
    const Eigen::VectorXd w = inverse_map(p_target, z, cfg, quad_p);
    const Eigen::VectorXd y = integrate_flow(q_target, w, cfg, quad_q).x_final;
    return (y.array() * sigma_q_diag.array().sqrt()).matrix();
}

}  // namespace heatflow
