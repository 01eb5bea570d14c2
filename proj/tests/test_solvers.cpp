#include <gtest/gtest.h>

#include <random>

#include "csskit/experiment.hpp"
#include "csskit/solvers.hpp"
#include "oracles.hpp"

using namespace csskit;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

MeasurementSet measure(const SamplingOperator& op, const Mat& x, double snr_db = kInf, std::uint64_t seed = 1)
{
    MeasurementSet ms = add_noise(op.forward_cube(x), snr_db, seed);
    ms.descriptor = op.descriptor();
    return ms;
}

Scene small_scene(std::uint64_t seed, Index rows = 16, Index cols = 16, Index rho = 2)
{
    SceneSpec spec;
    spec.rows = rows;
    spec.cols = cols;
    spec.rho = rho;
    spec.seed = seed;
    return generate_scene(spec);
}

/// Image with `k` nonzero wavelet coefficients per column.
Mat wavelet_sparse(const Wavelet2D& w, Index cols, Index k, std::mt19937_64& rng)
{
    Mat theta = Mat::Zero(w.size(), cols);
    std::uniform_int_distribution<Index> pick(0, w.size() - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index c = 0; c < cols; ++c)
        for (Index placed = 0; placed < k;) {
            const Index i = pick(rng);
            if (theta(i, c) != 0.0) continue;
            theta(i, c) = (normal(rng) > 0 ? 1.0 : -1.0) * (1.0 + std::abs(normal(rng)));
            ++placed;
        }
    return w.inverse_columns(theta);
}

double l1_analysis(const Wavelet2D& w, const Mat& x) { return w.forward_columns(x).cwiseAbs().sum(); }

double tv_total(const Mat& x, Index rows, Index cols)
{
    double t = 0.0;
    for (Index j = 0; j < x.cols(); ++j) t += tv_norm(x.col(j), rows, cols);
    return t;
}

SolverConfig tight_config()
{
    SolverConfig cfg;
    cfg.beta = 0.1;
    cfg.max_iters = 20000;
    cfg.rel_tol = 1e-8;
    cfg.ball_tol = 1e-11;
    cfg.ball_max_iters = 500;
    cfg.tv_tol = 1e-9;
    cfg.tv_max_iters = 2000;
    return cfg;
}

} // namespace

TEST(Ppxa, DeterminedSingleSourceReturnsObservation)
{
    std::mt19937_64 rng(50);
    const Wavelet2D w(8, 8);
    const MixingMatrix h(Mat::Ones(1, 1));
    const auto op = SamplingOperator::decorrelating(CoreOperator(CoreKind::identity, 64, 64, 0), h);
    const Mat s = oracle::random_matrix(64, 1, rng).cwiseAbs();
    auto problem = make_source_problem(measure(op, s), op, h, Prior::tv, w, false);
    const auto res = ppxa_solve(problem);
    EXPECT_LT((res.S_hat - s).cwiseAbs().maxCoeff(), 1e-6);

    // with the simplex constraint the only abundance for one source is 1
    const Mat ones = Mat::Ones(64, 1);
    problem = make_source_problem(measure(op, ones), op, h, Prior::tv, w, true);
    const auto res1 = ppxa_solve(problem);
    EXPECT_LT((res1.S_hat - ones).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_TRUE(res1.converged);
}

TEST(Ppxa, DeskScaleExactRecovery)
{
    ExperimentConfig cfg;
    cfg.solver.beta = 0.03;
    cfg.scene.seed = 3;
    for (int trial = 0; trial < 3; ++trial) {
        const auto out = run_trial(cfg, 0.25, kInf, trial);
        ASSERT_TRUE(out.row.error.empty()) << out.row.error;
        EXPECT_EQ(out.row.accuracy.value_or(0.0), 1.0);
        EXPECT_GE(out.row.reconstruction_snr_db, 60.0);
        EXPECT_TRUE(out.row.converged);
    }
}

TEST(Ppxa, InfeasibleConstraintsReportNotConverged)
{
    const Wavelet2D w(8, 8);
    const MixingMatrix h(Mat::Identity(2, 2));
    const auto op = SamplingOperator::decorrelating(CoreOperator(CoreKind::identity, 64, 64, 0), h);
    // every pixel claims 2 units of each source: no simplex point fits
    const Mat s = Mat::Constant(64, 2, 2.0);
    auto problem = make_source_problem(measure(op, s), op, h, Prior::tv, w);
    problem.epsilon = 1e-6;
    SolverConfig cfg;
    cfg.max_iters = 200;
    const auto res = ppxa_solve(problem, cfg);
    EXPECT_FALSE(res.converged);
    EXPECT_FALSE(res.diverged);
    EXPECT_TRUE(std::isfinite(res.residual));
    EXPECT_LE(res.residual, problem.y.norm());
    EXPECT_GT(res.residual, problem.epsilon);
}

TEST(Ppxa, CertifiedOutputIsFeasibleAndTraceConsistent)
{
    const Scene scene = small_scene(4);
    const Wavelet2D w(16, 16);
    const auto op = SamplingOperator::decorrelating(CoreOperator(CoreKind::random_convolution, 64, 256, 5),
                                                    scene.mixing);
    for (double snr : {kInf, 30.0, 15.0}) {
        const auto ms = measure(op, scene.cube.data(), snr, 6);
        SolverConfig cfg;
        cfg.beta = 0.03;
        cfg.max_iters = 5000;
        for (Prior prior : {Prior::tv, Prior::l1_wavelet}) {
            const auto res = ppxa_solve(make_source_problem(ms, op, scene.mixing, prior, w), cfg);
            ASSERT_EQ(res.trace.size(), static_cast<std::size_t>(res.iterations));
            for (const auto& r : res.trace) {
                EXPECT_TRUE(std::isfinite(r.residual));
                EXPECT_TRUE(std::isfinite(r.change));
            }
            EXPECT_TRUE(res.stopped);
            EXPECT_TRUE(res.converged) << "snr " << snr;
            EXPECT_LE(simplex_deviation(res.S_hat), 1e-9);
            EXPECT_TRUE(validate_sources(res.S_hat, false).ok());
            EXPECT_LE(res.residual, ms.epsilon + 1e-6 * ms.y.norm());
            const Vec r = ms.y - op.forward_sources(res.S_hat);
            EXPECT_NEAR(r.norm(), res.residual, 1e-12 * ms.y.norm());
        }
    }
}

TEST(Ppxa, GeneralOperatorUsesForwardBackward)
{
    const Scene scene = small_scene(7, 8, 8);
    const Wavelet2D w(8, 8);
    const auto op = SamplingOperator::uniform(CoreOperator(CoreKind::gaussian, 32, 64, 8), scene.mixing.channels());
    const auto ms = measure(op, scene.cube.data());
    SolverConfig cfg;
    cfg.beta = 0.03;
    const auto res = ppxa_solve(make_source_problem(ms, op, scene.mixing, Prior::tv, w), cfg);
    EXPECT_FALSE(res.diverged);
    EXPECT_LE(simplex_deviation(res.S_hat), 1e-9);
    EXPECT_GE(accuracy(scene.labels, res.S_hat), 0.95);
}

TEST(Ppxa, SchemeEquivalenceAcquisitionVsPostProcessing)
{
    const Scene scene = small_scene(9);
    const Wavelet2D w(16, 16);
    const CoreOperator core(CoreKind::random_convolution, 64, 256, 10);
    const auto dec = SamplingOperator::decorrelating(core, scene.mixing);
    const auto uni = SamplingOperator::uniform(core, scene.mixing.channels());
    const auto direct = measure(dec, scene.cube.data());
    const auto post = decorrelate(measure(uni, scene.cube.data()), scene.mixing, 64);
    SolverConfig cfg;
    cfg.beta = 0.03;
    const auto a = ppxa_solve(make_source_problem(direct, dec, scene.mixing, Prior::tv, w), cfg);
    const auto b = ppxa_solve(make_source_problem(post, dec, scene.mixing, Prior::tv, w), cfg);
    EXPECT_LT((a.S_hat - b.S_hat).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Ppxa, NonFiniteIterateFlagsDivergence)
{
    const Wavelet2D w(4, 4);
    const Index n = 16;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const LinearMap broken(
        n, n, [nan](const Vec& x) { return Vec(x * nan); }, [](const Vec& y) { return y; }, 1.0);
    RecoveryProblem p{Vec::Ones(n), 0.0, broken, Prior::tv, false, w, 1};
    const auto res = ppxa_solve(p);
    EXPECT_TRUE(res.diverged);
    EXPECT_FALSE(res.converged);
}

TEST(Ppxa, ConfigValidation)
{
    SolverConfig cfg;
    cfg.beta = 0.0;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
    cfg = {};
    cfg.rel_tol = 1.0;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
    cfg = {};
    cfg.max_iters = 0;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
    const Wavelet2D w(4, 4);
    RecoveryProblem p{Vec::Ones(3), 0.0, identity_map(16), Prior::tv, false, w, 1};
    EXPECT_THROW(ppxa_solve(p), DimensionMismatch);
}

TEST(Baselines, DeterminedOrthogonalSamplingIsExact)
{
    const Scene scene = small_scene(11, 8, 8);
    const Wavelet2D w(8, 8);
    const Index n2 = scene.mixing.channels();
    const auto dense = SamplingOperator::dense(CoreKind::random_convolution, 64 * n2, 64, n2, 12);
    const auto ms = measure(dense, scene.cube.data());
    const auto bp = bpdn_solve(ms.y, dense, w, 0.0);
    const auto tv = tvdn_solve(ms.y, dense, w, 0.0);
    EXPECT_LT((bp.S_hat - scene.cube.data()).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((tv.S_hat - scene.cube.data()).cwiseAbs().maxCoeff(), 1e-6);

    const CoreOperator full(CoreKind::random_convolution, 64, 64, 13);
    const auto dec = SamplingOperator::decorrelating(full, scene.mixing);
    const auto msd = measure(dec, scene.cube.data());
    const Mat& s = scene.sources.data();
    for (Prior prior : {Prior::tv, Prior::l1_wavelet})
        EXPECT_LT((ppxa_solve(make_source_problem(msd, dec, scene.mixing, prior, w)).S_hat - s).cwiseAbs().maxCoeff(),
                  1e-6);
    EXPECT_LT((l1_ss_synthesis_solve(msd.y, dec, scene.mixing, w, 0.0).S_hat - s).cwiseAbs().maxCoeff(), 1e-6);
    SolverConfig cfg;
    cfg.iht_k = (w.forward_columns(s).array().abs() > 1e-9).count();
    const auto iht = iht_ss_solve(make_source_problem(msd, dec, scene.mixing, Prior::l1_wavelet, w), cfg);
    EXPECT_LT((iht.S_hat - s).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Baselines, BpdnRecoversOneSparseChannels)
{
    std::mt19937_64 rng(14);
    const Wavelet2D w(4, 8);
    const Mat x = wavelet_sparse(w, 2, 1, rng);
    const auto op = SamplingOperator::dense(CoreKind::gaussian, 32, 32, 2, 15);
    const auto res = bpdn_solve(measure(op, x).y, op, w, 0.0, tight_config());
    const Mat theta = w.forward_columns(x), theta_hat = w.forward_columns(res.S_hat);
    const double thresh = 1e-3 * theta.cwiseAbs().maxCoeff();
    EXPECT_TRUE(((theta.array().abs() > thresh) == (theta_hat.array().abs() > thresh)).all());
    EXPECT_LT((res.S_hat - x).norm(), 1e-4 * x.norm());
}

TEST(Baselines, BpdnObjectiveNoWorseThanTruth)
{
    std::mt19937_64 rng(16);
    const Wavelet2D w(8, 8);
    for (int t = 0; t < 3; ++t) {
        const Mat x = wavelet_sparse(w, 2, 6, rng);
        const auto op = SamplingOperator::dense(CoreKind::gaussian, 48, 64, 2, 17 + t);
        const auto res = bpdn_solve(measure(op, x).y, op, w, 0.0, tight_config());
        EXPECT_LE(l1_analysis(w, res.S_hat), l1_analysis(w, x) + 1e-4);
        EXPECT_LE(res.residual, 1e-6 * op.forward_cube(x).norm());
    }
}

TEST(Baselines, TvdnRecoversPiecewiseConstantChannels)
{
    const Scene scene = small_scene(18, 8, 8);
    const Mat x = scene.cube.data().leftCols(2);
    const Wavelet2D grid(8, 8);
    const auto op = SamplingOperator::dense(CoreKind::random_convolution, 64, 64, 2, 19);
    SolverConfig cfg = tight_config();
    cfg.beta = 0.03;
    cfg.rel_tol = 1e-7;
    cfg.tv_tol = 1e-7;
    cfg.tv_max_iters = 500;
    const auto res = tvdn_solve(measure(op, x).y, op, grid, 0.0, cfg);
    EXPECT_GE(reconstruction_snr(x, res.S_hat), 40.0);
    EXPECT_LE(tv_total(res.S_hat, 8, 8), tv_total(x, 8, 8) + 1e-4);
}

TEST(SynthesisL1, DecoupledEqualsJointSolve)
{
    std::mt19937_64 rng(20);
    const Wavelet2D w(16, 16);
    const MixingMatrix h(oracle::random_matrix(8, 2, rng));
    const auto op = SamplingOperator::decorrelating(CoreOperator(CoreKind::random_convolution, 128, 256, 21), h);
    const Mat s = wavelet_sparse(w, 2, 8, rng);
    const Vec y = op.forward_sources(s);
    const SolverConfig cfg = tight_config();
    const auto joint = l1_ss_synthesis_solve(y, op, h, w, 0.0, cfg, false);
    const auto split = l1_ss_synthesis_solve(y, op, h, w, 0.0, cfg, true);
    EXPECT_LT((joint.S_hat - split.S_hat).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SynthesisL1, IdentityMixingReducesToBpdn)
{
    std::mt19937_64 rng(22);
    const Wavelet2D w(8, 8);
    const MixingMatrix h(Mat::Identity(2, 2));
    const auto op = SamplingOperator::uniform(CoreOperator(CoreKind::random_convolution, 32, 64, 23), 2);
    const Mat x = wavelet_sparse(w, 2, 4, rng);
    const Vec y = op.forward_cube(x);
    const SolverConfig cfg = tight_config();
    const auto ss = l1_ss_synthesis_solve(y, op, h, w, 0.0, cfg);
    const auto bp = bpdn_solve(y, op, w, 0.0, cfg);
    EXPECT_LT((ss.S_hat - bp.S_hat).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SynthesisL1, ExactRecoveryOfSparseSources)
{
    std::mt19937_64 rng(24);
    const Wavelet2D w(16, 16);
    const MixingMatrix h(oracle::random_matrix(6, 2, rng));
    const auto op = SamplingOperator::decorrelating(CoreOperator(CoreKind::random_convolution, 128, 256, 25), h);
    const Mat s = wavelet_sparse(w, 2, 2, rng);
    const auto res = l1_ss_synthesis_solve(op.forward_cube(mix(s, h.data())), op, h, w, 0.0, tight_config());
    EXPECT_LT((res.S_hat - s).norm(), 1e-4 * s.norm());
    ASSERT_TRUE(res.Theta_hat.has_value());
    EXPECT_LT((w.inverse_columns(*res.Theta_hat) - res.S_hat).norm(), 1e-12 * s.norm());
}

TEST(Iht, StepContractsHoldEveryIteration)
{
    const Scene scene = small_scene(26);
    const Wavelet2D w(16, 16);
    const auto op = SamplingOperator::decorrelating(CoreOperator(CoreKind::random_convolution, 64, 256, 27),
                                                    scene.mixing);
    const auto ms = measure(op, scene.cube.data(), 25.0, 28);
    SolverConfig cfg;
    cfg.iht_k = 60;
    cfg.max_iters = 50;
    const auto res = iht_ss_solve(make_source_problem(ms, op, scene.mixing, Prior::l1_wavelet, w), cfg);
    ASSERT_EQ(res.iht_steps.size(), static_cast<std::size_t>(res.iterations));
    ASSERT_EQ(res.trace.size(), static_cast<std::size_t>(res.iterations));
    for (const auto& s : res.iht_steps) {
        EXPECT_LE(s.nnz_after_threshold, cfg.iht_k);
        EXPECT_LE(s.gram_offdiag_ratio, 1e-9);
        EXPECT_LE(s.column_norm_error, 1e-9);
        EXPECT_LE(s.simplex_deviation, 1e-9);
    }
}

TEST(Iht, OrthogonalityStepOnRandomCoefficients)
{
    // the step-3 map in isolation: Theta Omega -> U V^T Omega has Gram Omega^2
    std::mt19937_64 rng(29);
    const Mat theta = oracle::random_matrix(64, 3, rng);
    Vec omega(3);
    for (Index i = 0; i < 3; ++i) omega[i] = 8.0 * theta.col(i).norm() / theta.norm();
    Eigen::JacobiSVD<Mat> svd(theta * omega.asDiagonal(), Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Mat out = svd.matrixU() * svd.matrixV().transpose() * omega.asDiagonal();
    const Mat gram = out.transpose() * out;
    EXPECT_LT((gram - Mat(omega.array().square().matrix().asDiagonal())).cwiseAbs().maxCoeff(), 1e-9 * theta.squaredNorm());
}

TEST(Iht, DeskScaleAccuracy)
{
    ExperimentConfig cfg;
    cfg.method = Method::iht;
    cfg.scene.seed = 11;
    cfg.seed = 5;
    double total = 0.0;
    const int trials = 10;
    for (int trial = 0; trial < trials; ++trial) {
        const auto out = run_trial(cfg, 0.25, kInf, trial);
        ASSERT_TRUE(out.row.error.empty()) << out.row.error;
        total += out.row.accuracy.value_or(0.0);
    }
    EXPECT_GE(total / trials, 0.9);
}

TEST(Iht, ZeroedColumnFlagged)
{
    const Wavelet2D w(8, 8);
    const MixingMatrix h(Mat::Identity(2, 2));
    const auto op = SamplingOperator::decorrelating(CoreOperator(CoreKind::identity, 64, 64, 0), h);
    Mat s = Mat::Zero(64, 2);
    s.col(0).setOnes();
    SolverConfig cfg;
    cfg.iht_k = 2;
    cfg.max_iters = 5;
    const auto res = iht_ss_solve(make_source_problem(measure(op, s), op, h, Prior::l1_wavelet, w), cfg);
    ASSERT_EQ(res.zeroed_columns.size(), 1u);
    EXPECT_EQ(res.zeroed_columns[0], 1);
    EXPECT_TRUE(res.S_hat.allFinite());
    EXPECT_FALSE(res.diverged);
}

TEST(Iht, RejectsBadBudget)
{
    const Wavelet2D w(4, 4);
    RecoveryProblem p{Vec::Zero(32), 0.0, identity_map(32), Prior::l1_wavelet, true, w, 2};
    SolverConfig cfg;
    cfg.iht_k = 1;
    EXPECT_THROW(iht_ss_solve(p, cfg), InvalidArgument);
}

TEST(Harden, Examples)
{
    Mat s(3, 2);
    s << 0.2, 0.8, 0.5, 0.5, 0.9, 0.1;
    const Mat h = harden_sources(s);
    Mat want(3, 2);
    want << 0, 1, 1, 0, 1, 0;
    EXPECT_EQ(h, want);
    std::mt19937_64 rng(31);
    const Mat r = oracle::random_matrix(64, 3, rng);
    EXPECT_TRUE(validate_sources(harden_sources(r), true).ok());
    EXPECT_NO_THROW(harden_sources(r, 8, 8));
}

TEST(Reconstruct, ExactSourcesGiveExactCube)
{
    const Scene scene = small_scene(32, 8, 8);
    EXPECT_EQ(reconstruct_cube(scene.sources.data(), scene.mixing), scene.cube.data());
}

TEST(Reconstruct, ErrorBoundedBySigmaMax)
{
    std::mt19937_64 rng(33);
    for (int t = 0; t < 20; ++t) {
        const MixingMatrix h(oracle::random_matrix(6, 3, rng));
        const Mat s = oracle::random_matrix(32, 3, rng);
        const Mat s_hat = s + 0.1 * oracle::random_matrix(32, 3, rng);
        const auto b = reconstruction_bound(s, s_hat, h);
        EXPECT_TRUE(b.holds);
        Eigen::JacobiSVD<Mat> svd(h.data());
        EXPECT_LE((mix(s, h.data()) - mix(s_hat, h.data())).norm(),
                  svd.singularValues()(0) * (s - s_hat).norm() + 1e-10);
    }
}

TEST(Reconstruct, SingleSourceIsExactScaling)
{
    std::mt19937_64 rng(34);
    const Mat hv = oracle::random_matrix(5, 1, rng);
    const Mat s = oracle::random_matrix(16, 1, rng);
    const Mat s_hat = s + oracle::random_matrix(16, 1, rng);
    const MixingMatrix h(hv);
    const double err = (reconstruct_cube(s, h) - reconstruct_cube(s_hat, h)).norm();
    EXPECT_NEAR(err, hv.norm() * (s - s_hat).norm(), 1e-12 * err);
}
