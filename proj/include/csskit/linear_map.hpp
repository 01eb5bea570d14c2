#pragma once

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <utility>

#include <Eigen/Dense>

#include "csskit/error.hpp"

namespace csskit {

using Index = Eigen::Index;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Matrix-free real linear map R^in -> R^out with its adjoint.
///
/// Vectors are flattened column-major matrices throughout the library, so a
/// map acting on an n1 x rho source matrix has in_dim() == n1 * rho and expects
/// the pixel index to vary fastest.
class LinearMap {
public:
    using Apply = std::function<Vec(const Vec&)>;

    LinearMap() = default;

    LinearMap(Index in_dim, Index out_dim, Apply forward, Apply adjoint,
              std::optional<double> tight_frame_nu = std::nullopt, bool unitary = false)
        : in_dim_(in_dim), out_dim_(out_dim), forward_(std::move(forward)),
          adjoint_(std::move(adjoint)), nu_(tight_frame_nu), unitary_(unitary)
    {
    }

    Index in_dim() const { return in_dim_; }
    Index out_dim() const { return out_dim_; }

    Vec apply(const Vec& x) const
    {
        detail::require_dims(x.size() == in_dim_, "LinearMap::apply: input length mismatch");
        return forward_(x);
    }

    Vec apply_adjoint(const Vec& y) const
    {
        detail::require_dims(y.size() == out_dim_, "LinearMap::apply_adjoint: input length mismatch");
        return adjoint_(y);
    }

    /// nu such that L L* = nu Id, when known by construction.
    std::optional<double> tight_frame_nu() const { return nu_; }

    /// L* L = L L* = Id.
    bool unitary() const { return unitary_; }

private:
    Index in_dim_ = 0;
    Index out_dim_ = 0;
    Apply forward_;
    Apply adjoint_;
    std::optional<double> nu_;
    bool unitary_ = false;
};

/// outer o inner. A tight frame composed with a unitary map stays a tight frame.
inline LinearMap compose(const LinearMap& outer, const LinearMap& inner)
{
    detail::require_dims(outer.in_dim() == inner.out_dim(), "compose: inner output != outer input");
    std::optional<double> nu;
    if (outer.tight_frame_nu() && inner.unitary()) nu = outer.tight_frame_nu();
    return LinearMap(
        inner.in_dim(), outer.out_dim(),
        [outer, inner](const Vec& x) { return outer.apply(inner.apply(x)); },
        [outer, inner](const Vec& y) { return inner.apply_adjoint(outer.apply_adjoint(y)); },
        nu, outer.unitary() && inner.unitary());
}

inline LinearMap identity_map(Index n)
{
    return LinearMap(
        n, n, [](const Vec& x) { return x; }, [](const Vec& y) { return y; }, 1.0, true);
}

inline LinearMap dense_map(Mat a)
{
    const Index rows = a.rows();
    const Index cols = a.cols();
    auto shared = std::make_shared<const Mat>(std::move(a));
    return LinearMap(
        cols, rows, [shared](const Vec& x) -> Vec { return (*shared) * x; },
        [shared](const Vec& y) -> Vec { return shared->transpose() * y; });
}

/// Operator norm estimate ||L||_2 from power iterations on L* L.
inline double estimate_operator_norm(const LinearMap& op, int iterations = 50, std::uint64_t seed = 0x5eed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec x(op.in_dim());
    for (Index i = 0; i < x.size(); ++i) x[i] = normal(rng);
    double lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
        const double nx = x.norm();
        if (nx == 0.0) return 0.0;
        x /= nx;
        Vec next = op.apply_adjoint(op.apply(x));
        lambda = x.dot(next);
        x = std::move(next);
    }
    return std::sqrt(std::max(lambda, 0.0));
}

/// |<Lx, y> - <x, L*y>| / (||x|| ||y||) on random probes.
inline double adjoint_mismatch(const LinearMap& op, std::uint64_t seed = 7)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec x(op.in_dim());
    Vec y(op.out_dim());
    for (Index i = 0; i < x.size(); ++i) x[i] = normal(rng);
    for (Index i = 0; i < y.size(); ++i) y[i] = normal(rng);
    const double lhs = op.apply(x).dot(y);
    const double rhs = x.dot(op.apply_adjoint(y));
    return std::abs(lhs - rhs) / (x.norm() * y.norm());
}

/// splitmix64 finalizer; derives independent stream seeds from a base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream)
{
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace csskit
