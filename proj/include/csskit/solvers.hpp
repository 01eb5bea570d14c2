#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "csskit/error.hpp"
#include "csskit/linear_map.hpp"
#include "csskit/model.hpp"
#include "csskit/prox.hpp"
#include "csskit/sampling.hpp"
#include "csskit/wavelet.hpp"

// PPXA (parallel proximal algorithm), constrained IHT and the BPDN / TVDN
// baselines. All solvers work on n x c matrices flattened column-major.

namespace csskit {

enum class Prior { l1_wavelet, tv };

inline std::string to_string(Prior p) { return p == Prior::tv ? "tv" : "l1-wavelet"; }

struct SolverConfig {
    double beta = 1.0;
    int max_iters = 500;
    double rel_tol = 1e-5;
    Index iht_k = 0;
    std::optional<double> gamma_step; ///< IHT step; 1/||L Psi||^2 when absent
    int tv_max_iters = 100;
    double tv_tol = 1e-5;
    int ball_max_iters = 50;  ///< forward-backward iterations per PPXA step
    double ball_tol = 1e-6;
    int certify_max_iters = 1000;  ///< forward-backward budget per certification projection
    int certify_rounds = 200;      ///< max ball/simplex alternations when certifying
    bool ball_warm_start = false;

    void validate() const
    {
        detail::require(beta > 0.0 && std::isfinite(beta), "SolverConfig: beta must be > 0");
        detail::require(max_iters > 0, "SolverConfig: max_iters must be > 0");
        detail::require(rel_tol > 0.0 && rel_tol < 1.0, "SolverConfig: rel_tol must be in (0, 1)");
        detail::require(iht_k >= 0, "SolverConfig: iht_k must be >= 0");
        detail::require(!gamma_step || *gamma_step > 0.0, "SolverConfig: gamma_step must be > 0");
        detail::require(tv_max_iters > 0 && tv_tol > 0.0, "SolverConfig: TV inner controls must be > 0");
        detail::require(ball_max_iters > 0 && ball_tol > 0.0 && certify_max_iters > 0 && certify_rounds >= 0,
                        "SolverConfig: ball inner controls must be > 0");
    }
};

/// Source-space recovery problem: find S (n1 x rho) with ||y - op(S_vec)|| <= epsilon.
struct RecoveryProblem {
    Vec y;
    double epsilon = 0.0;
    LinearMap op; ///< S_vec -> y
    Prior prior = Prior::tv;
    bool simplex = true;
    Wavelet2D wavelet;
    Index rho = 1;

    void validate() const
    {
        detail::require(epsilon >= 0.0 && std::isfinite(epsilon), "RecoveryProblem: epsilon must be finite and >= 0");
        detail::require(rho >= 1, "RecoveryProblem: rho must be >= 1");
        detail::require_dims(op.in_dim() == wavelet.size() * rho, "RecoveryProblem: operator input != n1 * rho");
        detail::require_dims(op.out_dim() == y.size(), "RecoveryProblem: operator output != len(y)");
        detail::require(y.allFinite(), "RecoveryProblem: non-finite measurements");
    }
};

/// Builds the source problem for any scheme: decorrelating operators act on S
/// directly, the others through Phi = H kron Id.
inline RecoveryProblem make_source_problem(const MeasurementSet& ms, const SamplingOperator& sampling,
                                           const MixingMatrix& h, Prior prior, const Wavelet2D& wavelet,
                                           bool simplex = true)
{
    detail::require_dims(ms.y.size() == sampling.output_dim(), "make_source_problem: len(y) != operator rows");
    detail::require_dims(wavelet.size() == sampling.n1(), "make_source_problem: wavelet size != n1");
    return RecoveryProblem{ms.y, ms.epsilon, sampling.source_map(h), prior, simplex, wavelet, h.rho()};
}

struct IterationRecord {
    double residual = 0.0; ///< ||y - op(S_n)||
    double change = 0.0;   ///< ||S_{n+1} - S_n||_F / max(||S_n||_F, 1)
};

/// Per-iteration contract measurements of the hard-thresholding solver.
struct IhtStepRecord {
    Index nnz_after_threshold = 0;
    double gram_offdiag_ratio = 0.0; ///< max |(Theta^T Theta)_ij|, i != j, over ||Theta||_F^2 after step 3
    double column_norm_error = 0.0;  ///< max | ||Theta_i|| - Omega_ii | after step 3
    double simplex_deviation = 0.0;  ///< of Psi Theta after step 4
};

struct SolveResult {
    Mat S_hat;   ///< certified estimate (sources, or the cube for the baselines)
    Mat S_raw;   ///< last iterate before certification
    std::optional<Mat> Theta_hat;
    int iterations = 0;
    double residual = 0.0;     ///< ||y - op(S_hat)||
    double raw_residual = 0.0; ///< ||y - op(S_raw)||
    double simplex_deviation = 0.0;
    bool stopped = false;   ///< the rel_tol criterion was met
    bool converged = false; ///< stopped, and S_hat is certified feasible
    bool diverged = false;  ///< a non-finite iterate appeared
    std::vector<IterationRecord> trace;
    std::vector<IhtStepRecord> iht_steps;
    std::vector<Index> zeroed_columns; ///< IHT: columns whose Omega_ii was set to 0
};

namespace detail {

inline Vec flat(const Mat& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }

inline Mat shaped(const Vec& v, Index rows, Index cols) { return Eigen::Map<const Mat>(v.data(), rows, cols); }

/// Projection onto {x : ||y - L x|| <= eps}: closed form for tight frames,
/// warm-started dual forward-backward otherwise.
class BallProjector {
public:
    BallProjector(LinearMap op, Vec y, double epsilon, const SolverConfig& cfg)
        : op_(std::move(op)), y_(std::move(y)), epsilon_(epsilon), cfg_(cfg)
    {
        if (!op_.tight_frame_nu()) op_norm_ = estimate_operator_norm(op_, 50);
    }

    bool closed_form() const { return op_.tight_frame_nu().has_value(); }

    Vec project(const Vec& x)
    {
        if (closed_form()) return l2ball_project_tightframe(x, y_, op_, epsilon_);
        FbOptions opt{cfg_.ball_max_iters, cfg_.ball_tol, op_norm_};
        return l2ball_project_fb(x, y_, op_, epsilon_, opt, cfg_.ball_warm_start ? &dual_ : nullptr).x;
    }

    /// A tighter projection used once, for the returned estimate.
    Vec certify(const Vec& x)
    {
        if (closed_form()) return l2ball_project_tightframe(x, y_, op_, epsilon_);
        FbOptions opt{cfg_.certify_max_iters, 1e-9, op_norm_};
        Vec warm = dual_;
        return l2ball_project_fb(x, y_, op_, epsilon_, opt, &warm).x;
    }

    double residual(const Vec& x) const { return (y_ - op_.apply(x)).norm(); }

private:
    LinearMap op_;
    Vec y_;
    double epsilon_;
    SolverConfig cfg_;
    std::optional<double> op_norm_;
    Vec dual_;
};

using ProxFn = std::function<Mat(const Mat&, double)>;

struct PpxaRun {
    Mat average;
    int iterations = 0;
    bool stopped = false;
    bool diverged = false;
    std::vector<IterationRecord> trace;
};

/// Parallel proximal algorithm with N functions:
///   P_i = prox_{N beta f_i}(Gamma_i), S_{n+1} = mean(P_i),
///   Gamma_i += 2 S_{n+1} - S_n - P_i, from S_0 = Gamma_i = 0.
/// Stops once both the change of S and the spread max ||P_i - S_{n+1}|| fall
/// below rel_tol (relative to max(||S_n||, 1)); S alone can stall while the
/// Gamma_i still move.
inline PpxaRun run_ppxa(const std::vector<ProxFn>& proxes, Index rows, Index cols, const SolverConfig& cfg,
                        const std::function<double(const Mat&)>& residual)
{
    const auto n = proxes.size();
    const double weight = static_cast<double>(n) * cfg.beta;
    std::vector<Mat> gamma(n, Mat::Zero(rows, cols));
    std::vector<Mat> p(n);
    PpxaRun run;
    Mat s = Mat::Zero(rows, cols);
    for (int it = 0; it < cfg.max_iters; ++it) {
        for (std::size_t i = 0; i < n; ++i) p[i] = proxes[i](gamma[i], weight);
        Mat next = p[0];
        for (std::size_t i = 1; i < n; ++i) next += p[i];
        next /= static_cast<double>(n);
        run.iterations = it + 1;
        if (!next.allFinite()) {
            run.diverged = true;
            break;
        }
        const double scale = std::max(s.norm(), 1.0);
        const double change = (next - s).norm() / scale;
        double spread = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            spread = std::max(spread, (p[i] - next).norm() / scale);
            gamma[i] += 2.0 * next - s - p[i];
        }
        s = std::move(next);
        run.trace.push_back({residual(s), change});
        if (change < cfg.rel_tol && spread < cfg.rel_tol) {
            run.stopped = true;
            break;
        }
    }
    run.average = std::move(s);
    return run;
}

inline ProxFn prior_prox(Prior prior, const Wavelet2D& wavelet, const SolverConfig& cfg)
{
    if (prior == Prior::tv) {
        TvProxOptions opt{cfg.tv_max_iters, cfg.tv_tol};
        return [wavelet, opt](const Mat& g, double w) {
            Mat out(g.rows(), g.cols());
            for (Index c = 0; c < g.cols(); ++c)
                out.col(c) = tv_prox(g.col(c), wavelet.rows(), wavelet.cols(), w, opt);
            return out;
        };
    }
    // Psi is orthonormal, so prox of ||Psi* .||_1 is Psi soft(Psi* .).
    return [wavelet](const Mat& g, double w) {
        return wavelet.inverse_columns(soft_threshold(wavelet.forward_columns(g), w));
    };
}

/// Shared analysis-form solver: min g(U) s.t. ||y - op(U)|| <= eps [, U rows on simplex].
inline SolveResult solve_analysis(const Vec& y, double epsilon, const LinearMap& op, Prior prior,
                                  const Wavelet2D& wavelet, Index cols, bool simplex, const SolverConfig& cfg)
{
    cfg.validate();
    const Index rows = wavelet.size();
    require_dims(op.in_dim() == rows * cols && op.out_dim() == y.size(), "solver: operator dims inconsistent");
    require(epsilon >= 0.0, "solver: epsilon must be >= 0");

    auto ball = std::make_shared<BallProjector>(op, y, epsilon, cfg);
    std::vector<ProxFn> proxes;
    proxes.push_back(prior_prox(prior, wavelet, cfg));
    proxes.push_back([ball, rows, cols](const Mat& g, double) { return shaped(ball->project(flat(g)), rows, cols); });
    if (simplex) proxes.push_back([](const Mat& g, double) { return simplex_project_rows(g); });

    PpxaRun run = run_ppxa(proxes, rows, cols, cfg, [&](const Mat& s) { return ball->residual(flat(s)); });

    SolveResult res;
    res.iterations = run.iterations;
    res.trace = std::move(run.trace);
    res.stopped = run.stopped;
    res.diverged = run.diverged;
    res.S_raw = std::move(run.average);
    if (res.diverged) {
        res.S_hat = res.S_raw;
        res.residual = res.raw_residual = std::numeric_limits<double>::infinity();
        return res;
    }
    res.raw_residual = ball->residual(flat(res.S_raw));
    const double fidelity = epsilon + 1e-6 * y.norm() + 1e-12;
    if (simplex) {
        // Alternate the two projections, finishing on the simplex, until the
        // simplex point also satisfies the fidelity constraint.
        res.S_hat = simplex_project_rows(res.S_raw);
        res.residual = ball->residual(flat(res.S_hat));
        for (int round = 0; round < cfg.certify_rounds && res.residual > fidelity; ++round) {
            res.S_hat = simplex_project_rows(shaped(ball->certify(flat(res.S_hat)), rows, cols));
            res.residual = ball->residual(flat(res.S_hat));
        }
        res.simplex_deviation = simplex_deviation(res.S_hat);
    } else {
        res.S_hat = shaped(ball->certify(flat(res.S_raw)), rows, cols);
        res.residual = ball->residual(flat(res.S_hat));
    }
    res.converged = res.stopped && res.residual <= fidelity && res.simplex_deviation <= 1e-9;
    return res;
}

} // namespace detail

/// Parallel proximal solve of the source problem: prior + fidelity ball [+ simplex].
/// The ball projection is closed-form when the operator is a known tight
/// frame and forward-backward otherwise. S_hat is the last average after
/// alternating ball and simplex projections, ending on the simplex.
inline SolveResult ppxa_solve(const RecoveryProblem& problem, const SolverConfig& cfg = {})
{
    problem.validate();
    return detail::solve_analysis(problem.y, problem.epsilon, problem.op, problem.prior, problem.wavelet,
                                  problem.rho, problem.simplex, cfg);
}

/// argmin ||Psi* X_vec||_1 s.t. ||y - A X_vec|| <= epsilon, channelwise wavelets.
/// Returns the cube estimate (n1 x n2) in S_hat.
inline SolveResult bpdn_solve(const Vec& y, const LinearMap& cube_op, const Wavelet2D& wavelet, double epsilon,
                              const SolverConfig& cfg = {})
{
    detail::require_dims(cube_op.in_dim() % wavelet.size() == 0, "bpdn_solve: operator input not a multiple of n1");
    const Index n2 = cube_op.in_dim() / wavelet.size();
    return detail::solve_analysis(y, epsilon, cube_op, Prior::l1_wavelet, wavelet, n2, false, cfg);
}

inline SolveResult bpdn_solve(const Vec& y, const SamplingOperator& sampling, const Wavelet2D& wavelet,
                              double epsilon, const SolverConfig& cfg = {})
{
    return bpdn_solve(y, sampling.cube_map(), wavelet, epsilon, cfg);
}

/// argmin sum_j TV(X_j) s.t. ||y - A X_vec|| <= epsilon.
inline SolveResult tvdn_solve(const Vec& y, const LinearMap& cube_op, const Wavelet2D& grid, double epsilon,
                              const SolverConfig& cfg = {})
{
    detail::require_dims(cube_op.in_dim() % grid.size() == 0, "tvdn_solve: operator input not a multiple of n1");
    const Index n2 = cube_op.in_dim() / grid.size();
    return detail::solve_analysis(y, epsilon, cube_op, Prior::tv, grid, n2, false, cfg);
}

inline SolveResult tvdn_solve(const Vec& y, const SamplingOperator& sampling, const Wavelet2D& grid, double epsilon,
                              const SolverConfig& cfg = {})
{
    return tvdn_solve(y, sampling.cube_map(), grid, epsilon, cfg);
}

namespace detail {

/// Two-function PPXA on wavelet coefficients: ||Theta||_1 + ball on op o Psi.
inline SolveResult solve_synthesis(const Vec& y, double epsilon, const LinearMap& op, const Wavelet2D& wavelet,
                                   Index cols, const SolverConfig& cfg)
{
    cfg.validate();
    const Index rows = wavelet.size();
    const LinearMap l = compose(op, wavelet.synthesis_map(cols));
    auto ball = std::make_shared<BallProjector>(l, y, epsilon, cfg);
    std::vector<ProxFn> proxes{
        [](const Mat& g, double w) { return soft_threshold(g, w); },
        [ball, rows, cols](const Mat& g, double) { return shaped(ball->project(flat(g)), rows, cols); }};
    PpxaRun run = run_ppxa(proxes, rows, cols, cfg, [&](const Mat& t) { return ball->residual(flat(t)); });

    SolveResult res;
    res.iterations = run.iterations;
    res.trace = std::move(run.trace);
    res.stopped = run.stopped;
    res.diverged = run.diverged;
    if (res.diverged) {
        res.Theta_hat = run.average;
        res.S_hat = res.S_raw = run.average;
        res.residual = res.raw_residual = std::numeric_limits<double>::infinity();
        return res;
    }
    res.raw_residual = ball->residual(flat(run.average));
    res.S_raw = wavelet.inverse_columns(run.average);
    Mat theta = shaped(ball->certify(flat(run.average)), rows, cols);
    res.residual = ball->residual(flat(theta));
    res.S_hat = wavelet.inverse_columns(theta);
    res.Theta_hat = std::move(theta);
    res.converged = res.stopped && res.residual <= epsilon + 1e-6 * y.norm() + 1e-12;
    return res;
}

} // namespace detail

/// argmin ||Theta_vec||_1 s.t. ||y - op(Psi Theta)|| <= epsilon with no simplex
/// constraint. Decorrelating measurements with epsilon = 0 separate into rho
/// independent problems, which are solved one source at a time.
inline SolveResult l1_ss_synthesis_solve(const Vec& y, const SamplingOperator& sampling, const MixingMatrix& h,
                                         const Wavelet2D& wavelet, double epsilon, const SolverConfig& cfg = {},
                                         bool decouple = true)
{
    detail::require_dims(y.size() == sampling.output_dim(), "l1_ss_synthesis_solve: len(y) != operator rows");
    detail::require_dims(wavelet.size() == sampling.n1(), "l1_ss_synthesis_solve: wavelet size != n1");
    const Index rho = h.rho();
    if (!(decouple && sampling.scheme() == Scheme::decorrelating && epsilon == 0.0))
        return detail::solve_synthesis(y, epsilon, sampling.source_map(h), wavelet, rho, cfg);

    const Index m_hat = sampling.core().m_hat();
    const LinearMap core = sampling.core().as_map();
    SolveResult res;
    res.S_hat.resize(wavelet.size(), rho);
    res.S_raw.resize(wavelet.size(), rho);
    Mat theta(wavelet.size(), rho);
    res.stopped = res.converged = true;
    double res2 = 0.0, raw2 = 0.0;
    for (Index i = 0; i < rho; ++i) {
        SolveResult part = detail::solve_synthesis(y.segment(i * m_hat, m_hat), 0.0, core, wavelet, 1, cfg);
        res.S_hat.col(i) = part.S_hat.col(0);
        res.S_raw.col(i) = part.S_raw.col(0);
        theta.col(i) = part.Theta_hat->col(0);
        res.iterations = std::max(res.iterations, part.iterations);
        res.stopped = res.stopped && part.stopped;
        res.converged = res.converged && part.converged;
        res.diverged = res.diverged || part.diverged;
        res2 += part.residual * part.residual;
        raw2 += part.raw_residual * part.raw_residual;
        if (res.trace.size() < part.trace.size()) res.trace.resize(part.trace.size());
        for (std::size_t t = 0; t < part.trace.size(); ++t) {
            res.trace[t].residual = std::hypot(res.trace[t].residual, part.trace[t].residual);
            res.trace[t].change = std::max(res.trace[t].change, part.trace[t].change);
        }
    }
    res.trace.resize(static_cast<std::size_t>(res.iterations));
    res.residual = std::sqrt(res2);
    res.raw_residual = std::sqrt(raw2);
    res.Theta_hat = std::move(theta);
    return res;
}

/// Iterative hard thresholding: per iteration
///   (1) Theta += gamma (L Psi)* (y - L Psi Theta)
///   (2) keep the k largest coefficients of Theta_vec
///   (3) Omega_ii = sqrt(n1) ||Theta_i|| / ||Theta||_F, U S V^T = Theta Omega, Theta = U V^T Omega
///   (4) Theta = Psi* simplex(Psi Theta)
/// A column zeroed by (2) gets Omega_ii = 0 and is reported in zeroed_columns.
inline SolveResult iht_ss_solve(const RecoveryProblem& problem, const SolverConfig& cfg = {})
{
    problem.validate();
    cfg.validate();
    const Index n1 = problem.wavelet.size();
    const Index rho = problem.rho;
    detail::require(cfg.iht_k >= rho && cfg.iht_k <= n1 * rho, "iht_ss_solve: need rho <= iht_k <= n1 * rho");
    const Wavelet2D& psi = problem.wavelet;
    const LinearMap l = compose(problem.op, psi.synthesis_map(rho));
    double gamma = 0.0;
    if (cfg.gamma_step) {
        gamma = *cfg.gamma_step;
    } else {
        const double norm = estimate_operator_norm(l, 50);
        detail::require(norm > 0.0, "iht_ss_solve: zero operator");
        gamma = 1.0 / (norm * norm);
    }

    SolveResult res;
    Mat theta = Mat::Zero(n1, rho);
    const double sqrt_n1 = std::sqrt(static_cast<double>(n1));
    std::vector<bool> flagged(static_cast<std::size_t>(rho), false);
    for (int it = 0; it < cfg.max_iters; ++it) {
        const Mat previous = theta;
        IhtStepRecord rec;

        // (1) gradient step
        const Vec r = problem.y - l.apply(detail::flat(theta));
        theta += gamma * detail::shaped(l.apply_adjoint(r), n1, rho);

        // (2) hard thresholding
        theta = detail::shaped(hard_threshold_topk(detail::flat(theta), cfg.iht_k), n1, rho);
        rec.nnz_after_threshold = (theta.array() != 0.0).count();

        // (3) orthogonality step
        const double fro = theta.norm();
        Eigen::VectorXd omega = Eigen::VectorXd::Zero(rho);
        if (fro > 0.0) {
            for (Index i = 0; i < rho; ++i) {
                omega[i] = sqrt_n1 * theta.col(i).norm() / fro;
                if (omega[i] == 0.0) flagged[static_cast<std::size_t>(i)] = true;
            }
            Eigen::JacobiSVD<Mat> svd(theta * omega.asDiagonal(), Eigen::ComputeThinU | Eigen::ComputeThinV);
            theta = svd.matrixU() * svd.matrixV().transpose() * omega.asDiagonal();
            const Mat gram = theta.transpose() * theta;
            const double scale = std::max(theta.squaredNorm(), 1e-300);
            for (Index i = 0; i < rho; ++i) {
                rec.column_norm_error = std::max(rec.column_norm_error, std::abs(theta.col(i).norm() - omega[i]));
                for (Index j = 0; j < rho; ++j)
                    if (i != j) rec.gram_offdiag_ratio = std::max(rec.gram_offdiag_ratio, std::abs(gram(i, j)) / scale);
            }
        }

        // (4) simplex constraint in the image domain
        theta = psi.forward_columns(simplex_project_rows(psi.inverse_columns(theta)));
        rec.simplex_deviation = simplex_deviation(psi.inverse_columns(theta));

        res.iterations = it + 1;
        if (!theta.allFinite()) {
            res.diverged = true;
            res.iht_steps.push_back(rec);
            break;
        }
        const double change = (theta - previous).norm() / std::max(previous.norm(), 1.0);
        res.trace.push_back({(problem.y - l.apply(detail::flat(theta))).norm(), change});
        res.iht_steps.push_back(rec);
        if (change < cfg.rel_tol) {
            res.stopped = true;
            break;
        }
    }
    for (Index i = 0; i < rho; ++i)
        if (flagged[static_cast<std::size_t>(i)]) res.zeroed_columns.push_back(i);
    res.S_hat = psi.inverse_columns(theta);
    res.S_raw = res.S_hat;
    res.Theta_hat = theta;
    res.residual = res.raw_residual = res.diverged ? std::numeric_limits<double>::infinity()
                                                   : (problem.y - l.apply(detail::flat(theta))).norm();
    res.simplex_deviation = res.diverged ? std::numeric_limits<double>::infinity() : simplex_deviation(res.S_hat);
    // IHT does not enforce the fidelity ball; convergence means the iteration settled.
    res.converged = res.stopped && !res.diverged;
    return res;
}

/// One-hot rows at the per-row argmax (lowest index on ties).
inline Mat harden_sources(const Mat& s_hat)
{
    Mat out = Mat::Zero(s_hat.rows(), s_hat.cols());
    for (Index i = 0; i < s_hat.rows(); ++i) {
        Index best = 0;
        for (Index j = 1; j < s_hat.cols(); ++j)
            if (s_hat(i, j) > s_hat(i, best)) best = j;
        out(i, best) = 1.0;
    }
    return out;
}

inline SourceMatrix harden_sources(const Mat& s_hat, Index rows, Index cols)
{
    return SourceMatrix(rows, cols, harden_sources(s_hat), true);
}

/// X_hat = S_hat H^T.
inline Mat reconstruct_cube(const Mat& s_hat, const MixingMatrix& h) { return mix(s_hat, h.data()); }

inline HsiCube reconstruct_cube(const Mat& s_hat, const MixingMatrix& h, Index rows, Index cols)
{
    return HsiCube(rows, cols, mix(s_hat, h.data()));
}

struct ReconstructionBound {
    double error = 0.0; ///< ||X - X_hat||_F
    double bound = 0.0; ///< sigma_max(H) ||S - S_hat||_F
    bool holds = false;
};

/// Checks ||X - X_hat||_F <= sigma_max(H) ||S - S_hat||_F for X = S H^T, X_hat = S_hat H^T.
inline ReconstructionBound reconstruction_bound(const Mat& s, const Mat& s_hat, const MixingMatrix& h,
                                                double slack = 1e-10)
{
    detail::require_dims(s.rows() == s_hat.rows() && s.cols() == s_hat.cols(), "reconstruction_bound: S shapes differ");
    ReconstructionBound b;
    b.error = (mix(s, h.data()) - mix(s_hat, h.data())).norm();
    b.bound = mixing_diagnostics(h.data()).sigma_max * (s - s_hat).norm();
    b.holds = b.error <= b.bound + slack;
    return b;
}

} // namespace csskit
