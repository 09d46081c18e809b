#include "heatflow/quadrature.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <mutex>
#include <utility>

#include "heatflow/errors.hpp"

namespace heatflow {

QuadratureSpec QuadratureSpec::gauss_hermite(int dim, int order) {
    QuadratureSpec q;
    q.method = Method::GaussHermiteTensor;
    q.dim = dim;
    q.order = order;
    q.validate();
    return q;
}

QuadratureSpec QuadratureSpec::importance(int dim, std::int64_t samples, std::uint64_t seed,
                                          bool antithetic) {
    QuadratureSpec q;
    q.method = Method::SelfNormalizedIS;
    q.dim = dim;
    q.samples = samples;
    q.seed = seed;
    q.antithetic = antithetic;
    q.validate();
    return q;
}

void QuadratureSpec::validate() const {
    if (dim < 1) throw InvalidInputError("quadrature: dim must be positive");
    if (method == Method::GaussHermiteTensor) {
        if (dim > 4) throw InvalidInputError("quadrature: tensor Gauss-Hermite allows dim <= 4");
        if (order < 8 || order > 128)
            throw InvalidInputError("quadrature: Gauss-Hermite order must lie in [8, 128]");
    } else {
        if (samples < 1000 || samples > 10000000)
            throw InvalidInputError("quadrature: IS sample count must lie in [1e3, 1e7]");
    }
}

namespace {

struct GhRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Nodes from the Jacobi matrix of the probabilists' Hermite recurrence (zero
// diagonal, off-diagonal sqrt(k)); weights from the closed form
// w_k = 1 / (n * he_{n-1}(z_k)^2) with he_j = He_j / sqrt(j!) the normalized
// polynomials. Eigenvector-based weights bottom out at the eigensolver's
// noise floor (~1e-32) while the true extreme weights reach ~1e-100; that
// noise gets amplified by integrands with quadratic log-growth. The closed
// form stays accurate down to the underflow boundary.
GhRule build_rule(int order) {
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(order, order);
    for (int k = 1; k < order; ++k) {
        const double b = std::sqrt(static_cast<double>(k));
        jac(k, k - 1) = b;
        jac(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac, Eigen::EigenvaluesOnly);
    GhRule rule;
    rule.nodes.resize(order);
    rule.weights.resize(order);
    for (int i = 0; i < order; ++i) rule.nodes[i] = es.eigenvalues()[i];
    // The spectrum is symmetric; pair opposite eigenvalues so antithetic node
    // structure is exact.
    for (int i = 0; i < order / 2; ++i) {
        const double z = 0.5 * (rule.nodes[order - 1 - i] - rule.nodes[i]);
        rule.nodes[i] = -z;
        rule.nodes[order - 1 - i] = z;
    }
    if (order % 2 == 1) rule.nodes[order / 2] = 0.0;

    double total = 0.0;
    for (int i = 0; i < order; ++i) {
        const double z = rule.nodes[i];
        double hm = 0.0, h = 1.0;  // he_{j-1}, he_j
        for (int j = 0; j < order - 1; ++j) {
            const double next = (z * h - std::sqrt(static_cast<double>(j)) * hm) /
                                std::sqrt(static_cast<double>(j + 1));
            hm = h;
            h = next;
        }
        rule.weights[i] = 1.0 / (order * h * h);
        total += rule.weights[i];
    }
    for (double& w : rule.weights) w /= total;
    return rule;
}

const GhRule& cached_rule(int order) {
    if (order < 1) throw InvalidInputError("gauss-hermite: order must be positive");
    static std::mutex mu;
    static std::map<int, GhRule> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(order);
    if (it == cache.end()) it = cache.emplace(order, build_rule(order)).first;
    return it->second;
}

}  // namespace

const std::vector<double>& gh_nodes(int order) { return cached_rule(order).nodes; }

const std::vector<double>& gh_weights(int order) { return cached_rule(order).weights; }

}  // namespace heatflow
