#include "heatflow/regularity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "heatflow/errors.hpp"
#include "heatflow/parallel.hpp"
#include "heatflow/rng.hpp"

namespace heatflow {

namespace {

Eigen::VectorXd map_at(const TargetDensity& density, const Eigen::VectorXd& x,
                       const FlowConfig& cfg, const QuadratureSpec& quad) {
    FlowConfig c = cfg;
    c.with_jacobian = false;
    return integrate_flow_to(density, x, c.t_end, c, quad, /*record_trajectory=*/false).x_final;
}

Eigen::MatrixXd fd_jacobian(const TargetDensity& density, const Eigen::VectorXd& x, double h,
                            const FlowConfig& cfg, const QuadratureSpec& quad) {
    const int d = density.dim();
    Eigen::MatrixXd jac(d, d);
    for (int j = 0; j < d; ++j) {
        Eigen::VectorXd xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        jac.col(j) = (map_at(density, xp, cfg, quad) - map_at(density, xm, cfg, quad)) / (2.0 * h);
    }
    return jac;
}

Eigen::MatrixXd propagated_jacobian(const TargetDensity& density, const Eigen::VectorXd& x,
                                    const FlowConfig& cfg, const QuadratureSpec& quad) {
    FlowConfig c = cfg;
    c.with_jacobian = true;
    return *integrate_flow_to(density, x, c.t_end, c, quad, /*record_trajectory=*/false).jacobian;
}

}  // namespace

std::vector<Eigen::MatrixXd> derivative_probe(const TargetDensity& density, int k,
                                              const Eigen::VectorXd& x, double h,
                                              const FlowConfig& cfg, const QuadratureSpec& quad,
                                              bool use_propagated_jacobian) {
    if (k < 1 || k > 3) throw InvalidInputError("derivative_probe: order k must be 1, 2 or 3");
    if (!(h >= 1e-5 && h <= 1e-1))
        throw InvalidInputError("derivative_probe: step must lie in [1e-5, 1e-1]");
    const int d = density.dim();

    if (k == 1) {
        if (use_propagated_jacobian) return {propagated_jacobian(density, x, cfg, quad)};
        return {fd_jacobian(density, x, h, cfg, quad)};
    }

    // Nested central differences of the (propagated or FD) Jacobian. The
    // propagated Jacobian costs one flow per point and carries no extra FD
    // noise, so it is the default inner evaluation for k >= 2.
    auto inner = [&](const Eigen::VectorXd& p) {
        return use_propagated_jacobian ? propagated_jacobian(density, p, cfg, quad)
                                       : fd_jacobian(density, p, h, cfg, quad);
    };
    if (k == 2) {
        std::vector<Eigen::MatrixXd> out;
        out.reserve(d);
        for (int j = 0; j < d; ++j) {
            Eigen::VectorXd xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            out.push_back((inner(xp) - inner(xm)) / (2.0 * h));
        }
        return out;
    }
    std::vector<Eigen::MatrixXd> out;
    out.reserve(d * d);
    for (int j = 0; j < d; ++j) {
        Eigen::VectorXd xjp = x, xjm = x;
        xjp[j] += h;
        xjm[j] -= h;
        for (int l = 0; l < d; ++l) {
            Eigen::VectorXd xpp = xjp, xpm = xjp, xmp = xjm, xmm = xjm;
            xpp[l] += h;
            xpm[l] -= h;
            xmp[l] += h;
            xmm[l] -= h;
            out.push_back((inner(xpp) - inner(xpm) - inner(xmp) + inner(xmm)) / (4.0 * h * h));
        }
    }
    return out;
}

RegularityReport holder_scan(const TargetDensity& density, int k, int pair_count,
                             const std::vector<double>& scales, double region_lo,
                             double region_hi, std::uint64_t seed, const FlowConfig& cfg,
                             const QuadratureSpec& quad, int threads) {
    if (k < 1 || k > 3) throw InvalidInputError("holder_scan: order k must be 1, 2 or 3");
    if (pair_count < 1) throw InvalidInputError("holder_scan: pair_count must be positive");
    for (std::size_t i = 1; i < scales.size(); ++i)
        if (!(scales[i] < scales[i - 1]))
            throw InvalidInputError("holder_scan: scales must be strictly descending");
    if (scales.size() < 3) throw InsufficientDataError("holder_scan: fewer than 3 scales");

    const int d = density.dim();
    const double beta_frac = density.beta() - std::floor(density.beta());
    const Eigen::MatrixXd anchors = halton_box(pair_count, d, region_lo, region_hi);

    RegularityReport report;
    double lipschitz = 0.0;

    for (std::size_t si = 0; si < scales.size(); ++si) {
        const double h = scales[si];
        // k-th derivative via nested differences with the pair scale as the FD
        // step, so the recorded noise floor tol/h matches what was computed.
        const double fd_step = std::clamp(h, 1e-5, 1e-1);

        std::vector<double> diff(pair_count), lip(pair_count);
        parallel_for(static_cast<std::size_t>(pair_count), threads, [&](std::size_t i) {
            const Eigen::VectorXd x = anchors.row(static_cast<Eigen::Index>(i));
            const Eigen::VectorXd w = counter_unit_vec(
                seed, si + 1, static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(d), d);
            const Eigen::VectorXd y = x + h * w;
            const auto dx = derivative_probe(density, k, x, fd_step, cfg, quad,
                                             /*use_propagated_jacobian=*/true);
            const auto dy = derivative_probe(density, k, y, fd_step, cfg, quad,
                                             /*use_propagated_jacobian=*/true);
            double nrm = 0.0;
            for (std::size_t b = 0; b < dx.size(); ++b)
                nrm += (dx[b] - dy[b]).squaredNorm();
            diff[i] = std::sqrt(nrm);
            lip[i] = (map_at(density, x, cfg, quad) - map_at(density, y, cfg, quad)).norm() / h;
        });

        RegularityReport::Quotient q;
        q.k = k;
        q.scale = h;
        q.max_difference = *std::max_element(diff.begin(), diff.end());
        q.value = q.max_difference / std::pow(h, beta_frac);
        q.noise_floor = cfg.rel_tol / h;
        q.usable = q.value > 10.0 * q.noise_floor;
        report.holder_quotients.push_back(q);
        lipschitz = std::max(lipschitz, *std::max_element(lip.begin(), lip.end()));
    }

    report.lipschitz_est = lipschitz;

    std::vector<std::pair<double, double>> usable;
    for (const auto& q : report.holder_quotients)
        if (q.usable && q.max_difference > 0.0) usable.emplace_back(q.scale, q.max_difference);
    if (usable.size() < 3)
        throw InsufficientDataError("holder_scan: fewer than 3 scales above the noise floor");
    const ScalingFit fit = fit_scaling_exponent(usable);
    report.fitted_exponent = fit.slope;
    report.fitted_half_width = fit.half_width;

    std::ostringstream os;
    os << "k=" << k << " pairs=" << pair_count << " scales=[" << scales.front() << ".."
       << scales.back() << "] region=[" << region_lo << "," << region_hi << "]^" << d
       << " seed=" << seed << " fd=propagated-jacobian noise_floor=rel_tol/scale";
    report.probe_spec = os.str();
    return report;
}

ScalingFit fit_scaling_exponent(const std::vector<std::pair<double, double>>& samples) {
    if (samples.size() < 4)
        throw InsufficientDataError("fit_scaling_exponent: needs at least 4 samples");
    const std::size_t n = samples.size();
    double sx = 0.0, sy = 0.0;
    std::vector<double> lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(samples[i].first > 0.0 && samples[i].second > 0.0))
            throw DomainError("fit_scaling_exponent: scales and values must be positive");
        lx[i] = std::log(samples[i].first);
        ly[i] = std::log(samples[i].second);
        sx += lx[i];
        sy += ly[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (sxx == 0.0) throw DomainError("fit_scaling_exponent: degenerate scale set");
    ScalingFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
        rss += r * r;
    }
    if (n > 2) fit.half_width = 2.0 * std::sqrt(rss / (n - 2) / sxx);
    return fit;
}

}  // namespace heatflow
