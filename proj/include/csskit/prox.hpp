#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "csskit/error.hpp"
#include "csskit/linear_map.hpp"

// Proximity and projection operators used by the solvers.

namespace csskit {

/// sign(v) (|v| - alpha)_+, the prox of alpha ||.||_1.
inline Vec soft_threshold(const Vec& v, double alpha)
{
    detail::require(alpha >= 0.0, "soft_threshold: alpha must be >= 0");
    Vec out(v.size());
    for (Index i = 0; i < v.size(); ++i) {
        const double a = std::abs(v[i]) - alpha;
        out[i] = a > 0.0 ? std::copysign(a, v[i]) : 0.0;
    }
    return out;
}

inline Mat soft_threshold(const Mat& v, double alpha)
{
    Vec flat = soft_threshold(Vec(Eigen::Map<const Vec>(v.data(), v.size())), alpha);
    return Eigen::Map<const Mat>(flat.data(), v.rows(), v.cols());
}

/// Keeps the k largest-magnitude entries; ties go to the lowest index.
inline Vec hard_threshold_topk(const Vec& v, Index k)
{
    detail::require(k >= 0 && k <= v.size(), "hard_threshold_topk: need 0 <= k <= len");
    if (k == v.size()) return v;
    std::vector<Index> order(static_cast<std::size_t>(v.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&v](Index a, Index b) { return std::abs(v[a]) > std::abs(v[b]); });
    Vec out = Vec::Zero(v.size());
    for (Index i = 0; i < k; ++i) out[order[static_cast<std::size_t>(i)]] = v[order[static_cast<std::size_t>(i)]];
    return out;
}

// Images are row-major rows x cols vectors. Gradients use forward differences
// with a zero difference across the last row and column (replicate boundary).

namespace detail {

inline void gradient(const Vec& u, Index rows, Index cols, Vec& gx, Vec& gy)
{
    gx.resize(u.size());
    gy.resize(u.size());
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
            const Index p = i * cols + j;
            gx[p] = j + 1 < cols ? u[p + 1] - u[p] : 0.0;
            gy[p] = i + 1 < rows ? u[p + cols] - u[p] : 0.0;
        }
    }
}

/// Negative adjoint of gradient().
inline void divergence(const Vec& px, const Vec& py, Index rows, Index cols, Vec& div)
{
    div.resize(px.size());
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
            const Index p = i * cols + j;
            double d = 0.0;
            if (j + 1 < cols) d += px[p];
            if (j > 0) d -= px[p - 1];
            if (i + 1 < rows) d += py[p];
            if (i > 0) d -= py[p - cols];
            div[p] = d;
        }
    }
}

} // namespace detail

/// Isotropic total variation sum_p sqrt(dx^2 + dy^2).
inline double tv_norm(const Vec& image, Index rows, Index cols)
{
    detail::require_dims(image.size() == rows * cols, "tv_norm: image size != rows*cols");
    Vec gx, gy;
    detail::gradient(image, rows, cols, gx, gy);
    return (gx.array().square() + gy.array().square()).sqrt().sum();
}

struct TvProxOptions {
    int max_iters = 100;
    double tol = 1e-5;
    double step = 0.249;
};

/// argmin_u lambda TV(u) + 1/2 ||u - image||^2 by Chambolle's dual projection.
/// Stops when the relative change of the dual field drops below tol.
inline Vec tv_prox(const Vec& image, Index rows, Index cols, double lambda, const TvProxOptions& opt = {},
                   int* iterations_used = nullptr)
{
    detail::require_dims(image.size() == rows * cols, "tv_prox: image size != rows*cols");
    detail::require(lambda >= 0.0, "tv_prox: lambda must be >= 0");
    if (iterations_used) *iterations_used = 0;
    if (lambda == 0.0) return image;
    const Index n = image.size();
    const double tau = opt.step;
    Vec px = Vec::Zero(n), py = Vec::Zero(n), div = Vec::Zero(n), gx, gy;
    const Vec scaled = image / lambda;
    int it = 0;
    for (; it < opt.max_iters; ++it) {
        detail::divergence(px, py, rows, cols, div);
        detail::gradient(div - scaled, rows, cols, gx, gy);
        double change = 0.0, norm = 0.0;
        for (Index p = 0; p < n; ++p) {
            const double denom = 1.0 + tau * std::hypot(gx[p], gy[p]);
            const double nx = (px[p] + tau * gx[p]) / denom;
            const double ny = (py[p] + tau * gy[p]) / denom;
            change += (nx - px[p]) * (nx - px[p]) + (ny - py[p]) * (ny - py[p]);
            norm += nx * nx + ny * ny;
            px[p] = nx;
            py[p] = ny;
        }
        if (norm == 0.0 || std::sqrt(change / norm) < opt.tol) {
            ++it;
            break;
        }
    }
    if (iterations_used) *iterations_used = it;
    detail::divergence(px, py, rows, cols, div);
    return image - lambda * div;
}

/// Each row replaced by its Euclidean projection onto {w >= 0, sum w = 1}
/// (sort-and-threshold).
inline Mat simplex_project_rows(const Mat& s)
{
    Mat out(s.rows(), s.cols());
    const Index rho = s.cols();
    std::vector<double> sorted(static_cast<std::size_t>(rho));
    for (Index i = 0; i < s.rows(); ++i) {
        for (Index j = 0; j < rho; ++j) sorted[static_cast<std::size_t>(j)] = s(i, j);
        std::sort(sorted.begin(), sorted.end(), std::greater<>());
        double cumsum = 0.0, theta = 0.0;
        for (Index j = 0; j < rho; ++j) {
            cumsum += sorted[static_cast<std::size_t>(j)];
            const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
            if (sorted[static_cast<std::size_t>(j)] - t > 0.0) theta = t;
        }
        for (Index j = 0; j < rho; ++j) out(i, j) = std::max(s(i, j) - theta, 0.0);
    }
    return out;
}

/// Largest deviation of any row from the simplex (row-sum error or negativity).
inline double simplex_deviation(const Mat& s)
{
    double worst = 0.0;
    for (Index i = 0; i < s.rows(); ++i) {
        worst = std::max(worst, std::abs(s.row(i).sum() - 1.0));
        worst = std::max(worst, -s.row(i).minCoeff());
    }
    return worst;
}

/// Closed-form projection onto {x : ||y - L x|| <= epsilon} when L L* = nu Id:
/// x + (1/nu) L* r (1 - epsilon/||r||)_+, r = y - L x.
inline Vec l2ball_project_tightframe(const Vec& x, const Vec& y, const LinearMap& op, double epsilon,
                                     std::optional<double> nu = std::nullopt)
{
    detail::require(epsilon >= 0.0, "l2ball_project_tightframe: epsilon must be >= 0");
    if (!nu) nu = op.tight_frame_nu();
    if (!nu || !(*nu > 0.0)) throw NotTightFrame("l2ball_project_tightframe: operator is not a known tight frame");
    const Vec r = y - op.apply(x);
    const double rn = r.norm();
    if (rn <= epsilon) return x;
    return x + (1.0 / *nu) * (1.0 - epsilon / rn) * op.apply_adjoint(r);
}

struct BallProjection {
    Vec x;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

struct FbOptions {
    int max_iters = 200;
    double tol = 1e-6;
    std::optional<double> op_norm; ///< ||L||; estimated with 50 power iterations when absent
};

/// Projection onto {x : ||y - L x|| <= epsilon} for a general L by
/// forward-backward iterations on the dual:
///   x_t = z - L* u_t,  u_{t+1} = mu (I - P_C)(u_t / mu + L x_t),  mu = 1/||L||^2,
/// with C the ball of radius epsilon around y. `dual` (length m) is used as
/// the starting point when non-null and overwritten with the final dual.
inline BallProjection l2ball_project_fb(const Vec& z, const Vec& y, const LinearMap& op, double epsilon,
                                        const FbOptions& opt = {}, Vec* dual = nullptr)
{
    detail::require(epsilon >= 0.0, "l2ball_project_fb: epsilon must be >= 0");
    BallProjection out;
    const double slack = epsilon * (1.0 + 1e-3) + opt.tol * std::max(y.norm(), 1.0);
    const double r0 = (y - op.apply(z)).norm();
    if (r0 <= epsilon) {
        out.x = z;
        out.residual = r0;
        out.converged = true;
        if (dual) dual->setZero(op.out_dim());
        return out;
    }
    const double norm = opt.op_norm ? *opt.op_norm : estimate_operator_norm(op, 50);
    detail::require(norm > 0.0, "l2ball_project_fb: zero operator");
    const double mu = 1.0 / (norm * norm);
    Vec u = (dual && dual->size() == op.out_dim()) ? *dual : Vec::Zero(op.out_dim());
    Vec x = z - op.apply_adjoint(u);
    Vec lx = op.apply(x);
    for (int t = 0; t < opt.max_iters; ++t) {
        Vec v = u / mu + lx;
        Vec d = v - y;
        const double dn = d.norm();
        // v - P_C(v)
        Vec excess = dn > epsilon ? Vec(d * (1.0 - epsilon / dn)) : Vec(Vec::Zero(d.size()));
        u = mu * excess;
        Vec x_next = z - op.apply_adjoint(u);
        const double change = (x_next - x).norm() / std::max(x_next.norm(), 1e-300);
        x = std::move(x_next);
        lx = op.apply(x);
        out.iterations = t + 1;
        out.residual = (y - lx).norm();
        if (out.residual <= slack && change < opt.tol) {
            out.converged = true;
            break;
        }
    }
    if (out.iterations == 0) out.residual = (y - lx).norm();
    out.converged = out.converged || out.residual <= slack;
    out.x = std::move(x);
    if (dual) *dual = std::move(u);
    return out;
}

} // namespace csskit
