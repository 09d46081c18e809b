#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace heatflow {

// Counter-based random numbers: every value is a pure function of
// (seed, stream, counter), so parallel drivers can hand out disjoint
// (stream, counter) ranges and the output never depends on worker count
// or scheduling. The mixer is the SplitMix64 finalizer applied to the
// combined key.

/// One 64-bit word for (seed, stream, counter).
std::uint64_t counter_word(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter);

/// Uniform double in (0, 1); never returns 0 or 1 exactly.
double counter_u01(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter);

/// Standard normal via Box-Muller on two sub-draws of `counter`.
double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter);

/// d independent standard normals; component j consumes counter base+j.
Eigen::VectorXd counter_normal_vec(std::uint64_t seed, std::uint64_t stream,
                                   std::uint64_t counter_base, int dim);

/// Uniform point on the unit sphere in R^d (normalized Gaussian vector).
Eigen::VectorXd counter_unit_vec(std::uint64_t seed, std::uint64_t stream,
                                 std::uint64_t counter_base, int dim);

/// Low-discrepancy point set: n points of the d-dimensional Halton sequence
/// scaled to the box [lo, hi]^d. Deterministic, no seed.
Eigen::MatrixXd halton_box(int n, int dim, double lo, double hi);

}  // namespace heatflow
