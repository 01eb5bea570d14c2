#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "csskit/error.hpp"
#include "csskit/linear_map.hpp"

// Measurement-count scalings, recovery-guarantee constants and restricted
// isometry estimates for the block sampling schemes.

namespace csskit {

enum class BoundScheme { dense_bpdn, dense_ss, uniform_ss, decorrelating_ss, decorrelating_ss_decoupled };

inline std::string to_string(BoundScheme s)
{
    switch (s) {
    case BoundScheme::dense_bpdn: return "dense-bpdn";
    case BoundScheme::dense_ss: return "dense-ss";
    case BoundScheme::uniform_ss: return "uniform-ss";
    case BoundScheme::decorrelating_ss: return "decorrelating-ss";
    case BoundScheme::decorrelating_ss_decoupled: return "decorrelating-ss-decoupled";
    }
    return "?";
}

inline BoundScheme parse_bound_scheme(const std::string& s)
{
    for (auto b : {BoundScheme::dense_bpdn, BoundScheme::dense_ss, BoundScheme::uniform_ss,
                   BoundScheme::decorrelating_ss, BoundScheme::decorrelating_ss_decoupled})
        if (to_string(b) == s) return b;
    throw InvalidArgument("unknown bound scheme: " + s);
}

struct BoundQuery {
    BoundScheme scheme = BoundScheme::decorrelating_ss;
    double k = 1;
    double n1 = 1;
    double n2 = 1;
    double rho = 1;
    double xi = 1;
    double c = 1; ///< leading constant; the scalings are only known up to it
};

struct BoundValue {
    double m = 0.0;
    std::string formula;
};

/// 1 + 2 xi^2.
inline double gamma_prime(double xi)
{
    detail::require(xi >= 1.0, "gamma_prime: xi must be >= 1");
    return 1.0 + 2.0 * xi * xi;
}

/// Scaling of the number of measurements per scheme (natural logarithms):
///   dense-bpdn                  c n2 k ln(n1/k)
///   dense-ss                    c g k ln(rho n1 / (g k)),  g = 1 + 2 xi^2
///   uniform-ss                  c n2 k ln(n1/k)
///   decorrelating-ss            c rho k ln(n1/k)
///   decorrelating-ss-decoupled  c k ln(rho n1 / k)
inline BoundValue measurement_bound(const BoundQuery& q)
{
    detail::require(q.k >= 1.0, "measurement_bound: k must be >= 1");
    detail::require(q.n1 > 0 && q.n2 > 0 && q.rho > 0, "measurement_bound: dims must be positive");
    detail::require(q.xi >= 1.0, "measurement_bound: xi must be >= 1");
    detail::require(q.c > 0.0, "measurement_bound: c must be > 0");
    double factor = 0.0, arg = 0.0;
    std::string formula;
    switch (q.scheme) {
    case BoundScheme::dense_bpdn:
        factor = q.n2 * q.k;
        arg = q.n1 / q.k;
        formula = "c*n2*k*ln(n1/k)";
        break;
    case BoundScheme::dense_ss: {
        const double g = gamma_prime(q.xi);
        factor = g * q.k;
        arg = q.rho * q.n1 / (g * q.k);
        formula = "c*g*k*ln(rho*n1/(g*k)), g=1+2*xi^2";
        break;
    }
    case BoundScheme::uniform_ss:
        factor = q.n2 * q.k;
        arg = q.n1 / q.k;
        formula = "c*n2*k*ln(n1/k)";
        break;
    case BoundScheme::decorrelating_ss:
        factor = q.rho * q.k;
        arg = q.n1 / q.k;
        formula = "c*rho*k*ln(n1/k)";
        break;
    case BoundScheme::decorrelating_ss_decoupled:
        factor = q.k;
        arg = q.rho * q.n1 / q.k;
        formula = "c*k*ln(rho*n1/k)";
        break;
    }
    if (!(arg > 1.0))
        throw InvalidRegime("measurement_bound: log argument <= 1 for " + to_string(q.scheme) +
                            " (sparsity too large for the dimension)");
    return {q.c * factor * std::log(arg), formula};
}

struct GuaranteeConstants {
    double alpha = 0.0;
    double beta = 0.0;
    double c0p = 0.0;
    double c1p = 0.0;
    double tau = 0.0;
    double xi = 0.0; ///< U / L
    bool valid = false;
    bool constants_set = false;
};

/// Error-bound constants of the A-RIP recovery guarantee:
///   d = xi^-1 sqrt(tau (1 - delta) / (1 + delta)) - 1,  xi = U / L
///   alpha = 2 / d,  beta = 2 U sqrt(tau (1 + delta)) / d
///   c0' = alpha + (2 + alpha) / sqrt(tau),  c1' = beta (1 + 1 / sqrt(tau))
/// valid requires delta < 1/3, tau >= 2 xi^2 and d > 0. Constants stay unset
/// when d <= 0.
inline GuaranteeConstants guarantee_constants(double delta_star, double lower, double upper, double tau)
{
    detail::require(delta_star >= 0.0 && delta_star < 1.0, "guarantee_constants: delta must be in [0, 1)");
    detail::require(lower > 0.0 && upper >= lower && tau > 0.0, "guarantee_constants: need 0 < L <= U, tau > 0");
    GuaranteeConstants g;
    g.tau = tau;
    g.xi = upper / lower;
    const double denom = std::sqrt(tau * (1.0 - delta_star) / (1.0 + delta_star)) / g.xi - 1.0;
    if (denom > 0.0) {
        g.alpha = 2.0 / denom;
        g.beta = 2.0 * upper * std::sqrt(tau * (1.0 + delta_star)) / denom;
        g.c0p = g.alpha + (2.0 + g.alpha) / std::sqrt(tau);
        g.c1p = g.beta * (1.0 + 1.0 / std::sqrt(tau));
        g.constants_set = true;
    }
    g.valid = g.constants_set && delta_star < 1.0 / 3.0 && tau >= 2.0 * g.xi * g.xi;
    return g;
}

/// prod(1 + delta_i) - 1, the RIP constant bound of a Kronecker product.
inline double kron_rip_bound(const std::vector<double>& deltas)
{
    // (1 + s)(1 + d) - 1 accumulated as s + d + s d, exact for a single factor
    double s = 0.0;
    for (double d : deltas) {
        detail::require(d >= 0.0, "kron_rip_bound: deltas must be >= 0");
        s = s + d + s * d;
    }
    return s;
}

struct RipEstimate {
    double lower = 0.0; ///< min ||M x|| over the probes
    double upper = 0.0; ///< max ||M x||
    double delta = 0.0; ///< max(1 - lower^2, upper^2 - 1); a lower bound on the true constant
};

/// Monte-Carlo restricted isometry estimate of M = op (or op o dictionary)
/// over `trials` random unit-norm k-sparse vectors with gaussian entries.
inline RipEstimate empirical_rip(const LinearMap& op, const std::optional<LinearMap>& dictionary, Index k, int trials,
                                 std::uint64_t seed)
{
    const LinearMap m = dictionary ? compose(op, *dictionary) : op;
    const Index n = m.in_dim();
    detail::require(k >= 1 && k <= n, "empirical_rip: need 1 <= k <= input dim");
    detail::require(trials >= 1, "empirical_rip: trials must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Index> idx(static_cast<std::size_t>(n));
    RipEstimate est;
    est.lower = std::numeric_limits<double>::infinity();
    est.upper = 0.0;
    for (int t = 0; t < trials; ++t) {
        std::iota(idx.begin(), idx.end(), Index{0});
        // partial Fisher-Yates for the support
        for (Index i = 0; i < k; ++i) {
            std::uniform_int_distribution<Index> pick(i, n - 1);
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
        }
        Vec x = Vec::Zero(n);
        for (Index i = 0; i < k; ++i) x[idx[static_cast<std::size_t>(i)]] = normal(rng);
        const double nx = x.norm();
        if (nx == 0.0) continue;
        x /= nx;
        const double v = m.apply(x).norm();
        est.lower = std::min(est.lower, v);
        est.upper = std::max(est.upper, v);
    }
    est.delta = std::max(1.0 - est.lower * est.lower, est.upper * est.upper - 1.0);
    return est;
}

} // namespace csskit
