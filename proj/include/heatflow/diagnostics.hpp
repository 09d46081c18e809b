#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "heatflow/density.hpp"
#include "heatflow/flow.hpp"
#include "heatflow/quadrature.hpp"

namespace heatflow {

/// Adaptive Gauss-Kronrod 7/15 integration with panel bisection until the
/// local error estimate drops below tol. Independent of every quadrature used
/// by the transport code, so it can serve as an oracle against it.
double adaptive_quadrature(const std::function<double(double)>& f, double a, double b,
                           double tol);

/// Exact 1D transport oracle: the monotone rearrangement F_p^{-1}(Phi(x)).
/// The CDF table comes from adaptive panels over [-10, 10] (or the support
/// ball) with local error below tol.
class QuantileOracle1D {
  public:
    explicit QuantileOracle1D(const TargetDensity& density, double tol = 1e-12);

    /// F_p^{-1}(Phi(x)); Phi(x) outside the covered mass range -> DomainError.
    double quantile_map(double x) const;

    double cdf(double y) const;
    /// Normalized target density.
    double pdf(double y) const;
    double normalizer() const { return z_; }

  private:
    double quantile(double q) const;

    const TargetDensity density_;
    double tol_;
    double lo_, hi_;
    std::vector<double> edges_;   // sorted panel edges
    std::vector<double> cum_;     // unnormalized mass up to each edge
    double z_ = 0.0;
};

struct KsResult {
    double statistic = 0.0;
    double critical_1pct = 0.0;
};

/// Two-sample Kolmogorov-Smirnov statistic with the asymptotic 1% critical
/// value 1.628 sqrt((n+m)/(n m)). Requires at least 100 points per sample.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

/// Average over n_proj random unit directions of the exact 1D W1 distance
/// between the projected empirical measures.
double sliced_wasserstein(const std::vector<Eigen::VectorXd>& a,
                          const std::vector<Eigen::VectorXd>& b, int n_proj,
                          std::uint64_t seed);

struct MarginalCheckResult {
    std::vector<KsResult> per_coordinate;
    KsResult projection;  // random-projection KS, only meaningful for d > 1
    bool pass = false;
};

/// Compares the transported cloud at time t against the interpolation law
/// t X + sqrt(1-t^2) Y, X ~ p (rejection sampler), Y ~ gamma_d.
MarginalCheckResult marginal_law_check(const TargetDensity& density, double t, std::size_t n,
                                       std::uint64_t seed, const FlowConfig& cfg,
                                       const QuadratureSpec& quad, int threads = 1);

/// Test function with analytic first and second derivatives.
struct TestFn {
    std::function<double(double)> f;
    std::function<double(double)> df;
    std::function<double(double)> d2f;
    std::string label;
};

/// Random combinations of the first 6 Hermite functions plus tanh bumps whose
/// width ladder repeats every 5 functions, so any contiguous block of the
/// family covers the full sharpness range (stability under enlargement).
std::vector<TestFn> log_sobolev_family(int count, std::uint64_t seed);

struct LogSobolevResult {
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
    bool degenerate = false;  // f vanished in L^2(mu); ratio forced to 0
};

/// Both sides of the k-th order log-Sobolev-type inequality
/// int |f|^2 |log|f||^k dmu <= C sum_{j<=k} ||f^{(j)}||^2_{L^2(mu)} for the
/// normalized f, mu the (1D, Gaussian-perturbation) target law.
LogSobolevResult log_sobolev_check(const TargetDensity& density, int k, const TestFn& fn);

/// Max ratio over a family.
std::vector<LogSobolevResult> log_sobolev_scan(const TargetDensity& density, int k,
                                               const std::vector<TestFn>& fns);

}  // namespace heatflow
