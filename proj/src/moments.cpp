#include "heatflow/moments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "heatflow/errors.hpp"
#include "heatflow/rng.hpp"

namespace heatflow {

namespace detail {

namespace {

void check_arguments(const TargetDensity& density, double t, const Eigen::VectorXd& x,
                     const QuadratureSpec& quad) {
    quad.validate();
    if (quad.dim != density.dim()) throw InvalidInputError("moments: quadrature dim mismatch");
    if (x.size() != density.dim()) throw InvalidInputError("moments: anchor dim mismatch");
    if (!x.allFinite()) throw InvalidInputError("moments: non-finite anchor");
    if (!(t >= 0.0 && t < 1.0)) throw DomainError("moments: t must lie in [0, 1)");
}

/// Tensor Gauss-Hermite pass at a fixed per-axis order. Returns the node
/// matrix and raw log-integrand values log(w_k) + log r(y_k).
struct RawPass {
    Eigen::MatrixXd ys;
    std::vector<double> lw;
    std::size_t finite_count = 0;
};

RawPass gh_pass(const TargetDensity& density, double t, const Eigen::VectorXd& x, int order) {
    const int d = density.dim();
    const auto& nodes = gh_nodes(order);
    const auto& weights = gh_weights(order);
    const double c = std::sqrt((1.0 - t) * (1.0 + t));

    std::size_t total = 1;
    for (int j = 0; j < d; ++j) total *= static_cast<std::size_t>(order);

    RawPass pass;
    pass.ys.resize(static_cast<Eigen::Index>(total), d);
    pass.lw.resize(total);

    std::vector<int> idx(d, 0);
    Eigen::VectorXd y(d);
    for (std::size_t k = 0; k < total; ++k) {
        double logw = 0.0;
        for (int j = 0; j < d; ++j) {
            y[j] = t * x[j] + c * nodes[idx[j]];
            logw += std::log(weights[idx[j]]);
        }
        pass.ys.row(k) = y;
        const double lr = eval_log_r(density, y);
        pass.lw[k] = logw + lr;
        if (std::isfinite(lr)) ++pass.finite_count;
        for (int j = 0; j < d; ++j) {
            if (++idx[j] < order) break;
            idx[j] = 0;
        }
    }
    return pass;
}

}  // namespace

NodeEval evaluate_tilted_nodes(const TargetDensity& density, double t, const Eigen::VectorXd& x,
                               const QuadratureSpec& quad) {
    check_arguments(density, t, x, quad);
    const int d = density.dim();
    const double c = std::sqrt((1.0 - t) * (1.0 + t));

    NodeEval ev;
    double log_norm = 0.0;  // log of (sum of reference weights), 0 for GH, log S for IS

    if (quad.method == QuadratureSpec::Method::GaussHermiteTensor) {
        RawPass pass = gh_pass(density, t, x, quad.order);
        double order_used = quad.order;
        // Near-boundary ball anchors can leave almost every node outside the
        // support; one doubling recovers the regime Prop-A.3-localized flows
        // actually visit, anything beyond that is misuse.
        if (density.kind() == TargetDensity::Kind::BallSupported &&
            static_cast<double>(pass.finite_count) <
                1e-3 * static_cast<double>(pass.lw.size())) {
            const int doubled = std::min(2 * quad.order, 128);
            if (doubled > quad.order) {
                pass = gh_pass(density, t, x, doubled);
                order_used = doubled;
            }
            if (static_cast<double>(pass.finite_count) <
                1e-3 * static_cast<double>(pass.lw.size()))
                throw DegenerateMeasureError(
                    "moments: almost all quadrature nodes fall outside the support ball");
        }
        ev.ys = std::move(pass.ys);
        ev.w = Eigen::Map<const Eigen::VectorXd>(pass.lw.data(),
                                                 static_cast<Eigen::Index>(pass.lw.size()));
        ev.ess_or_order = order_used;
    } else {
        const std::int64_t S = quad.samples;
        ev.ys.resize(S, d);
        ev.w.resize(S);
        Eigen::VectorXd z(d);
        for (std::int64_t k = 0; k < S; ++k) {
            if (quad.antithetic && (k % 2 == 1)) {
                z = -ev.ys.row(k - 1).transpose();  // reuse below: rows hold z temporarily
            } else {
                z = counter_normal_vec(quad.seed, 0,
                                       static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(d),
                                       d);
            }
            ev.ys.row(k) = z;
        }
        // Two passes keep the antithetic reflection exact: transform after drawing.
        for (std::int64_t k = 0; k < S; ++k) {
            const Eigen::VectorXd y = t * x + c * ev.ys.row(k).transpose();
            ev.ys.row(k) = y;
            ev.w[k] = eval_log_r(density, y);
        }
        ev.ess_or_order = 0;  // filled after normalization
        log_norm = std::log(static_cast<double>(S));
    }

    // Self-normalization with max subtraction; log_Z carries the subtracted max.
    const double lw_max = ev.w.maxCoeff();
    if (!std::isfinite(lw_max))
        throw DegenerateMeasureError("moments: every node weight vanished");
    double sum = 0.0;
    for (Eigen::Index k = 0; k < ev.w.size(); ++k) {
        const double wk = std::exp(ev.w[k] - lw_max);
        ev.w[k] = wk;
        sum += wk;
    }
    ev.log_Z = lw_max + std::log(sum) - log_norm;
    double sum_sq = 0.0;
    for (Eigen::Index k = 0; k < ev.w.size(); ++k) {
        ev.w[k] /= sum;
        sum_sq += ev.w[k] * ev.w[k];
    }
    if (quad.method == QuadratureSpec::Method::SelfNormalizedIS) {
        const double ess = 1.0 / sum_sq;
        ev.ess_or_order = ess;
        ev.accuracy_warning = ess < 50.0;
    }
    return ev;
}

}  // namespace detail

namespace {

Eigen::VectorXd weighted_mean(const detail::NodeEval& ev) {
    return ev.ys.transpose() * ev.w;
}

Eigen::MatrixXd weighted_cov(const detail::NodeEval& ev, const Eigen::VectorXd& mean) {
    const int d = static_cast<int>(ev.ys.cols());
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index k = 0; k < ev.ys.rows(); ++k) {
        const Eigen::VectorXd h = ev.ys.row(k).transpose() - mean;
        cov.noalias() += ev.w[k] * (h * h.transpose());
    }
    return cov;
}

}  // namespace

TiltedMoments tilted_moments(const TargetDensity& density, double t, const Eigen::VectorXd& x,
                             const QuadratureSpec& quad) {
    const detail::NodeEval ev = detail::evaluate_tilted_nodes(density, t, x, quad);
    TiltedMoments m;
    m.t = t;
    m.x = x;
    m.log_Z = ev.log_Z;
    m.ess_or_order = ev.ess_or_order;
    m.accuracy_warning = ev.accuracy_warning;
    m.mean = weighted_mean(ev);
    m.cov = weighted_cov(ev, m.mean);
    if (quad.method == QuadratureSpec::Method::SelfNormalizedIS) {
        const int d = density.dim();
        m.mean_se.resize(d);
        for (int j = 0; j < d; ++j) {
            double s = 0.0;
            for (Eigen::Index k = 0; k < ev.ys.rows(); ++k) {
                const double dev = ev.ys(k, j) - m.mean[j];
                s += ev.w[k] * ev.w[k] * dev * dev;
            }
            m.mean_se[j] = std::sqrt(s);
        }
    }
    return m;
}

Eigen::VectorXd tilted_expectation(
    const TargetDensity& density, double t, const Eigen::VectorXd& x, const QuadratureSpec& quad,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, int m) {
    const detail::NodeEval ev = detail::evaluate_tilted_nodes(density, t, x, quad);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(m);
    for (Eigen::Index k = 0; k < ev.ys.rows(); ++k) {
        if (ev.w[k] == 0.0) continue;  // outside-support nodes must not reach f
        acc.noalias() += ev.w[k] * f(ev.ys.row(k).transpose());
    }
    return acc;
}

Eigen::MatrixXd grad_pairing(const TargetDensity& density, double t, const Eigen::VectorXd& x,
                             const QuadratureSpec& quad,
                             const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                             int m) {
    const int d = density.dim();
    if (t == 0.0) {
        detail::evaluate_tilted_nodes(density, t, x, quad);  // argument validation
        return Eigen::MatrixXd::Zero(m, d);
    }
    const detail::NodeEval ev = detail::evaluate_tilted_nodes(density, t, x, quad);
    const Eigen::VectorXd mean = weighted_mean(ev);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(m, d);
    for (Eigen::Index k = 0; k < ev.ys.rows(); ++k) {
        if (ev.w[k] == 0.0) continue;
        const Eigen::VectorXd h = ev.ys.row(k).transpose() - mean;
        acc.noalias() += ev.w[k] * (f(ev.ys.row(k).transpose()) * h.transpose());
    }
    return (t / ((1.0 - t) * (1.0 + t))) * acc;
}

std::vector<Eigen::MatrixXd> hess_pairing(
    const TargetDensity& density, double t, const Eigen::VectorXd& x, const QuadratureSpec& quad,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, int m) {
    const int d = density.dim();
    if (t == 0.0) {
        detail::evaluate_tilted_nodes(density, t, x, quad);
        return std::vector<Eigen::MatrixXd>(m, Eigen::MatrixXd::Zero(d, d));
    }
    const detail::NodeEval ev = detail::evaluate_tilted_nodes(density, t, x, quad);
    const Eigen::VectorXd mean = weighted_mean(ev);
    const Eigen::MatrixXd cov = weighted_cov(ev, mean);
    std::vector<Eigen::MatrixXd> acc(m, Eigen::MatrixXd::Zero(d, d));
    for (Eigen::Index k = 0; k < ev.ys.rows(); ++k) {
        if (ev.w[k] == 0.0) continue;
        const Eigen::VectorXd h = ev.ys.row(k).transpose() - mean;
        const Eigen::MatrixXd outer = h * h.transpose() - cov;
        const Eigen::VectorXd fv = f(ev.ys.row(k).transpose());
        for (int i = 0; i < m; ++i) acc[i].noalias() += (ev.w[k] * fv[i]) * outer;
    }
    const double pref = t / ((1.0 - t) * (1.0 + t));
    for (auto& a : acc) a *= pref * pref;
    return acc;
}

}  // namespace heatflow
