#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "heatflow/density.hpp"
#include "heatflow/flow.hpp"
#include "heatflow/quadrature.hpp"

namespace heatflow {

struct ScalingFit {
    double slope = 0.0;
    double intercept = 0.0;
    double half_width = 0.0;  // 2 x standard error of the slope
};

struct RegularityReport {
    double lipschitz_est = 0.0;  // max over probe pairs of |T(x)-T(y)|/|x-y|
    struct Quotient {
        int k = 1;
        double scale = 0.0;
        double value = 0.0;        // max Hoelder quotient at this scale
        double max_difference = 0.0;  // max |grad^k T(x) - grad^k T(y)| at this scale
        double noise_floor = 0.0;  // tol / scale, relative finite-difference noise
        bool usable = false;       // value > 10 x noise_floor
    };
    std::vector<Quotient> holder_quotients;
    double fitted_exponent = 0.0;
    double fitted_half_width = 0.0;
    std::string probe_spec;
};

/// Central finite-difference derivative tensor of the transport map at x.
/// k = 1 returns {J} (optionally the propagated Jacobian); k = 2 returns d
/// matrices d/dx_j J; k = 3 returns d^2 matrices d^2/(dx_j dx_l) J, row-major
/// in (j, l). Step h must lie in [1e-5, 1e-1].
std::vector<Eigen::MatrixXd> derivative_probe(const TargetDensity& density, int k,
                                              const Eigen::VectorXd& x, double h,
                                              const FlowConfig& cfg, const QuadratureSpec& quad,
                                              bool use_propagated_jacobian = false);

/// Hoelder scan of the k-th map derivative: pairs (x, x + h w) at each scale,
/// quotients |grad^k T(x) - grad^k T(y)| / h^{beta - floor(beta)}, fitted
/// exponent from log max-difference vs log scale.
RegularityReport holder_scan(const TargetDensity& density, int k, int pair_count,
                             const std::vector<double>& scales, double region_lo,
                             double region_hi, std::uint64_t seed, const FlowConfig& cfg,
                             const QuadratureSpec& quad, int threads = 1);

/// OLS on (log scale, log value). Requires >= 4 samples and positive values.
ScalingFit fit_scaling_exponent(const std::vector<std::pair<double, double>>& samples);

}  // namespace heatflow
