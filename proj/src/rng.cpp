#include "heatflow/rng.hpp"

#include <cmath>

namespace heatflow {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t counter_word(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    // Three finalizer rounds decorrelate the key components; a single round
    // leaves visible structure between adjacent (stream, counter) pairs.
    return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ counter);
}

double counter_u01(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    const std::uint64_t w = counter_word(seed, stream, counter);
    // Top 53 bits -> (0,1): offset by half an ulp so 0 is unreachable.
    return (static_cast<double>(w >> 11) + 0.5) * 0x1.0p-53;
}

double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    const double u1 = counter_u01(seed, stream, 2 * counter);
    const double u2 = counter_u01(seed, stream, 2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Eigen::VectorXd counter_normal_vec(std::uint64_t seed, std::uint64_t stream,
                                   std::uint64_t counter_base, int dim) {
    Eigen::VectorXd v(dim);
    for (int j = 0; j < dim; ++j) v[j] = counter_normal(seed, stream, counter_base + j);
    return v;
}

Eigen::VectorXd counter_unit_vec(std::uint64_t seed, std::uint64_t stream,
                                 std::uint64_t counter_base, int dim) {
    Eigen::VectorXd v = counter_normal_vec(seed, stream, counter_base, dim);
    double n = v.norm();
    while (n < 1e-12) {
        counter_base += dim;
        v = counter_normal_vec(seed, stream, counter_base, dim);
        n = v.norm();
    }
    return v / n;
}

Eigen::MatrixXd halton_box(int n, int dim, double lo, double hi) {
    static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19};
    Eigen::MatrixXd pts(n, dim);
    for (int j = 0; j < dim; ++j) {
        const int base = primes[j % 8];
        for (int i = 0; i < n; ++i) {
            double f = 1.0, u = 0.0;
            // Skip index 0 (it maps to the box corner for every coordinate).
            int k = i + 1;
            while (k > 0) {
                f /= base;
                u += f * (k % base);
                k /= base;
            }
            pts(i, j) = lo + (hi - lo) * u;
        }
    }
    return pts;
}

}  // namespace heatflow
