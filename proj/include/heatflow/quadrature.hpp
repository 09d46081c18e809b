#pragma once

#include <cstdint>
#include <vector>

namespace heatflow {

/// Discretization of Gaussian integrals: deterministic tensor Gauss-Hermite
/// for dim <= 4, self-normalized importance sampling otherwise.
struct QuadratureSpec {
    enum class Method { GaussHermiteTensor, SelfNormalizedIS };

    Method method = Method::GaussHermiteTensor;
    int dim = 1;
    int order = 48;              // per-axis GH order, in [8, 128]
    std::int64_t samples = 0;    // IS sample count, in [1e3, 1e7]
    bool antithetic = true;      // IS variance reduction, on by default
    std::uint64_t seed = 0;      // ignored for GaussHermiteTensor

    static QuadratureSpec gauss_hermite(int dim, int order);
    static QuadratureSpec importance(int dim, std::int64_t samples, std::uint64_t seed,
                                     bool antithetic = true);
    void validate() const;
};

/// Nodes and weights of the order-n Gauss-Hermite rule for the standard
/// Gaussian weight (probabilists' normalization: weights sum to 1).
/// Computed once per order by Golub-Welsch and cached; thread-safe.
const std::vector<double>& gh_nodes(int order);
const std::vector<double>& gh_weights(int order);

}  // namespace heatflow
