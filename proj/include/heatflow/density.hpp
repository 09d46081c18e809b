#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace heatflow {

/// One isotropic Gaussian component of a mixture target.
struct MixtureComponent {
    double weight;
    Eigen::VectorXd mean;
    double variance;
};

/// Closed family of perturbations a(x); the density of a Gaussian-perturbation
/// target is p(x) = exp(-|x|^2/2 + a(x)) up to normalization.
class PerturbationFamily {
  public:
    enum class Variant { Zero, ConjugateGaussian, LogMixtureRatio, WeierstrassFourier };

    static PerturbationFamily zero(int dim);
    /// a(x) = |x|^2/2 - |x-m|^2/(2 sigma2); the target is N(m, sigma2 I).
    static PerturbationFamily conjugate_gaussian(Eigen::VectorXd m, double sigma2);
    /// a(x) = |x|^2/2 + log sum_i w_i N(x; m_i, v_i I); the target is the mixture.
    static PerturbationFamily log_mixture_ratio(std::vector<MixtureComponent> components);
    /// a(x) = eps sum_{j=1..terms} lambda^{-beta j} cos(lambda^j <w_j, x> + phi_j),
    /// |w_j| = 1. Lacunary construction with Hoelder exponent beta above the
    /// truncation scale lambda^{-terms}.
    static PerturbationFamily weierstrass_fourier(int dim, double eps, double lambda,
                                                  double beta, int terms, std::uint64_t seed);

    Variant variant() const { return variant_; }
    int dim() const { return dim_; }
    int smoothness_order() const { return smoothness_order_; }
    /// Tests may withdraw the gradient capability.
    void set_smoothness_order(int k) { smoothness_order_ = k; }

    double a(const Eigen::VectorXd& x) const;
    Eigen::VectorXd grad_a(const Eigen::VectorXd& x) const;

    /// Analytic bound on sup|a| (Zero, WeierstrassFourier) or +inf when the
    /// perturbation grows quadratically (conjugate/mixture).
    double sup_abs_a() const;
    /// Analytic bound on sup|grad a| where available, +inf otherwise.
    double sup_grad_a() const;

    // Parameter accessors used by closed-form test oracles.
    const Eigen::VectorXd& conjugate_mean() const { return m_; }
    double conjugate_sigma2() const { return sigma2_; }
    const std::vector<MixtureComponent>& components() const { return components_; }
    double weier_eps() const { return eps_; }
    double weier_lambda() const { return lambda_; }
    double weier_beta() const { return beta_; }
    int weier_terms() const { return terms_; }

  private:
    friend class TargetDensity;
    PerturbationFamily() = default;

    Variant variant_ = Variant::Zero;
    int dim_ = 1;
    int smoothness_order_ = 3;
    // ConjugateGaussian
    Eigen::VectorXd m_;
    double sigma2_ = 1.0;
    // LogMixtureRatio
    std::vector<MixtureComponent> components_;
    // WeierstrassFourier
    double eps_ = 0.0;
    double lambda_ = 2.0;
    double beta_ = 0.5;
    int terms_ = 12;
    std::vector<Eigen::VectorXd> omegas_;
    std::vector<double> phases_;
};

/// Target density p on R^d. Two shapes:
///  - GaussianPerturbation: log r(y) = a(y), r = p/gamma_d.
///  - BallSupported: log r(y) = -u(|y|^2) + |y|^2/2 + a(y) inside the open unit
///    ball, r = 0 outside, with boundary profile u(s) = (1-s)^(-1/K).
class TargetDensity {
  public:
    enum class Kind { GaussianPerturbation, BallSupported };

    static TargetDensity gaussian_perturbation(PerturbationFamily family, double K, double beta);
    /// Requires K >= 1; smaller K makes u violate its admissibility bounds.
    static TargetDensity ball_supported(PerturbationFamily family, double K, double beta);

    Kind kind() const { return kind_; }
    int dim() const { return family_.dim(); }
    double K() const { return K_; }
    double beta() const { return beta_; }
    const PerturbationFamily& family() const { return family_; }
    PerturbationFamily& family() { return family_; }
    int smoothness_order() const { return family_.smoothness_order(); }

    /// Boundary profile and its derivative, s in [0, 1).
    double u(double s) const;
    double u_prime(double s) const;

  private:
    TargetDensity() = default;
    Kind kind_ = Kind::GaussianPerturbation;
    PerturbationFamily family_;
    double K_ = 1.0;
    double beta_ = 1.0;
};

/// log r(y) up to the density's fixed additive constant; -inf outside the ball
/// for BallSupported targets. Non-finite y -> InvalidInputError.
double eval_log_r(const TargetDensity& density, const Eigen::VectorXd& y);

/// grad log r(y). Requires smoothness_order >= 1 (CapabilityError otherwise);
/// BallSupported with |y| >= 1 -> DomainError.
Eigen::VectorXd eval_grad_log_r(const TargetDensity& density, const Eigen::VectorXd& y);

struct SampleResult {
    std::vector<Eigen::VectorXd> samples;
    double acceptance_rate = 0.0;
    /// Envelope constant: sup log r over the probe grid plus safety margin.
    double log_envelope = 0.0;
};

/// n i.i.d. samples from normalized p by rejection from gamma_d. The envelope
/// exponent is estimated on a coarse grid; growth of log r toward the grid
/// boundary or a collapsed acceptance rate raises EnvelopeFailureError.
SampleResult sample_target(const TargetDensity& density, std::size_t n, std::uint64_t seed);

}  // namespace heatflow
