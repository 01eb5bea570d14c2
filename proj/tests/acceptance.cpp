// Acceptance checks: one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "csskit/experiment.hpp"
#include "csskit/theory.hpp"
#include "oracles.hpp"

using namespace csskit;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

ExperimentConfig base_config()
{
    ExperimentConfig cfg;
    cfg.scene.rows = 16;
    cfg.scene.cols = 16;
    cfg.scene.rho = 2;
    cfg.scene.channels = 16;
    cfg.scene.partition = Partition::rectangles;
    cfg.scene.disjoint = true;
    cfg.scene.seed = 11;
    cfg.scheme = Scheme::decorrelating;
    cfg.decorrelation = Decorrelation::post_processing;
    cfg.core = CoreKind::random_convolution;
    cfg.rates = {0.25};
    cfg.method = Method::ppxa_tv;
    // abundances live in [0, 1], so the prior weight is set on that scale
    cfg.solver.beta = 0.03;
    cfg.trials = 10;
    cfg.seed = 5;
    return cfg;
}

double mean_accuracy(const std::vector<ResultRow>& rows)
{
    double s = 0.0;
    for (const auto& r : rows) s += r.accuracy.value_or(0.0);
    return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

Outcome decorrelation_identity()
{
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> pick_rho(2, 4), pick_extra(0, 12);
    std::uniform_real_distribution<double> log_xi(0.0, std::log(100.0));
    const Index n1 = 64;
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        const Index rho = pick_rho(rng);
        const Index n2 = rho + pick_extra(rng);
        const double xi = t == 0 ? 1.0 : (t == 1 ? 100.0 : std::exp(log_xi(rng)));
        const MixingMatrix h(oracle::conditioned_matrix(n2, rho, xi, rng));
        const Mat s = oracle::random_matrix(n1, rho, rng).cwiseAbs();
        const CoreOperator core(CoreKind::random_convolution, 16, n1, derive_seed(7, t));
        const auto op = SamplingOperator::decorrelating(core, h);
        const Vec lhs = op.forward_cube(mix(s, h.data()));
        const Mat a = core.materialize();
        Vec rhs(16 * rho);
        for (Index r = 0; r < rho; ++r) rhs.segment(16 * r, 16) = a * s.col(r);
        worst = std::max(worst, (lhs - rhs).norm() / rhs.norm());
    }
    const double dt = seconds_since(t0);
    return {worst <= 1e-9 && dt < 10.0, "max rel diff " + fmt("%.2e", worst) + ", " + fmt("%.2f", dt) + " s"};
}

Outcome tight_frame()
{
    const std::vector<std::pair<Index, Index>> pairs{{1, 8},   {4, 16},  {8, 16},   {16, 16},  {5, 32},
                                                     {16, 64}, {31, 64}, {64, 256}, {77, 256}, {128, 1024}};
    double worst_frame = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto [m_hat, n1] = pairs[i];
        const CoreOperator core(CoreKind::random_convolution, m_hat, n1, 900 + i);
        const Mat a = core.materialize();
        const double nu = static_cast<double>(n1) / static_cast<double>(m_hat);
        const double dev = (a * a.transpose() - nu * Mat::Identity(m_hat, m_hat)).cwiseAbs().maxCoeff() / nu;
        worst_frame = std::max(worst_frame, dev);
        const double nu_lib = verify_tight_frame(core, 1e-8);
        worst_frame = std::max(worst_frame, std::abs(nu_lib - nu) / nu);
    }
    std::mt19937_64 rng(202);
    double worst_proj = 0.0;
    int instance = 0;
    for (Index n1 : {8, 16})
        for (Index m_hat : {Index{2}, n1 / 2, n1})
            for (Index rho : {1, 2})
                for (double eps_frac : {0.0, 0.1, 0.5}) {
                    const CoreOperator core(CoreKind::random_convolution, m_hat, n1, 300 + instance++);
                    const MixingMatrix h(oracle::random_matrix(3, rho, rng));
                    const LinearMap op = SamplingOperator::decorrelating(core, h).source_map(h);
                    const Mat a = oracle::materialize(op);
                    const Vec y = oracle::random_vector(a.rows(), rng);
                    const Vec z = oracle::random_vector(a.cols(), rng);
                    const double eps = eps_frac * (y - a * z).norm();
                    const Vec got = l2ball_project_tightframe(z, y, op, eps);
                    const Vec want = oracle::ball_projection_kkt(a, y, z, eps);
                    worst_proj = std::max(worst_proj, (got - want).norm() / std::max(want.norm(), 1.0));
                }
    return {worst_frame <= 1e-8 && worst_proj <= 1e-8,
            "frame dev " + fmt("%.2e", worst_frame) + ", projection vs KKT " + fmt("%.2e", worst_proj)};
}

Outcome exact_recovery()
{
    const ExperimentConfig cfg = base_config();
    const auto rows = run_experiment(cfg);
    int good = 0;
    double slowest = 0.0, worst_snr = std::numeric_limits<double>::infinity();
    for (const auto& r : rows) {
        if (r.accuracy.value_or(0.0) == 1.0 && r.reconstruction_snr_db >= 60.0) ++good;
        slowest = std::max(slowest, r.wall_time_s);
        worst_snr = std::min(worst_snr, r.reconstruction_snr_db);
    }
    return {good >= 9 && slowest < 60.0, std::to_string(good) + "/" + std::to_string(rows.size()) +
                                             " trials exact, min SNR " + fmt("%.1f", worst_snr) + " dB, slowest " +
                                             fmt("%.2f", slowest) + " s"};
}

Outcome channel_independence()
{
    const auto t0 = Clock::now();
    std::vector<double> acc;
    std::vector<Index> samples;
    std::string detail;
    for (Index n2 : {8, 16, 32, 64}) {
        ExperimentConfig cfg = base_config();
        cfg.scene.channels = n2;
        // decorrelation at acquisition time: only rho * m_hat samples are taken
        cfg.decorrelation = Decorrelation::acquisition;
        const auto rows = run_experiment(cfg);
        acc.push_back(mean_accuracy(rows));
        for (const auto& r : rows) samples.push_back(r.m);
        detail += "n2=" + std::to_string(n2) + ":" + fmt("%.3f", acc.back()) + " ";
    }
    const double spread = *std::max_element(acc.begin(), acc.end()) - *std::min_element(acc.begin(), acc.end());
    const bool constant_budget = std::all_of(samples.begin(), samples.end(), [&](Index m) { return m == samples[0]; });
    const double dt = seconds_since(t0);
    detail += "samples " + std::to_string(samples[0]) + (constant_budget ? " (constant)" : " (varies)") + ", " +
              fmt("%.1f", dt) + " s";
    return {spread <= 0.05 && constant_budget && dt < 300.0, detail};
}

Outcome conditioning()
{
    std::vector<double> dec, uni;
    std::string detail = "decorrelating";
    for (double xi : {1.5, 10.0, 50.0}) {
        ExperimentConfig cfg = base_config();
        cfg.scene.target_xi = xi;
        dec.push_back(mean_accuracy(run_experiment(cfg)));
        detail += " " + fmt("%.3f", dec.back());
    }
    detail += "; uniform";
    for (double xi : {1.5, 50.0}) {
        ExperimentConfig cfg = base_config();
        cfg.scene.target_xi = xi;
        cfg.scheme = Scheme::uniform;
        cfg.trials = 5;
        uni.push_back(mean_accuracy(run_experiment(cfg)));
        detail += " " + fmt("%.3f", uni.back());
    }
    const double spread = *std::max_element(dec.begin(), dec.end()) - *std::min_element(dec.begin(), dec.end());
    const double drop = uni[0] - uni[1];
    detail += " (drop " + fmt("%.3f", drop) + ")";
    return {spread <= 0.05 && drop >= 0.1, detail};
}

Outcome noise_robustness()
{
    ExperimentConfig cfg = base_config();
    cfg.snr_db = {30.0};
    const auto rows = run_experiment(cfg);
    int good = 0;
    double min_snr = std::numeric_limits<double>::infinity(), min_acc = 1.0;
    for (const auto& r : rows) {
        const double acc = r.accuracy.value_or(0.0);
        if (r.reconstruction_snr_db >= 25.0 && acc >= 0.95) ++good;
        min_snr = std::min(min_snr, r.reconstruction_snr_db);
        min_acc = std::min(min_acc, acc);
    }
    return {good == static_cast<int>(rows.size()),
            std::to_string(good) + "/" + std::to_string(rows.size()) + " trials, min SNR " + fmt("%.1f", min_snr) +
                " dB, min accuracy " + fmt("%.3f", min_acc)};
}

Outcome iht_contracts()
{
    SceneSpec spec;
    spec.seed = 21;
    const Scene scene = generate_scene(spec);
    const Index n1 = spec.rows * spec.cols;
    const CoreOperator core(CoreKind::random_convolution, n1 / 4, n1, 77);
    const auto op = SamplingOperator::decorrelating(core, scene.mixing);
    MeasurementSet ms = add_noise(op.forward_cube(scene.cube.data()), 30.0, 78);
    const Wavelet2D psi(spec.rows, spec.cols);
    const Index k = (psi.forward_columns(scene.sources.data()).array().abs() > 1e-9).count();
    SolverConfig cfg;
    cfg.iht_k = k;
    cfg.max_iters = 200;
    cfg.rel_tol = 1e-300;
    const auto res = iht_ss_solve(make_source_problem(ms, op, scene.mixing, Prior::l1_wavelet, psi), cfg);
    Index worst_nnz = 0;
    double worst_gram = 0.0, worst_simplex = 0.0;
    for (const auto& s : res.iht_steps) {
        worst_nnz = std::max(worst_nnz, s.nnz_after_threshold);
        worst_gram = std::max(worst_gram, s.gram_offdiag_ratio);
        worst_simplex = std::max(worst_simplex, s.simplex_deviation);
    }
    const bool full_run = res.iterations == 200 && res.iht_steps.size() == 200;
    return {full_run && worst_nnz <= k && worst_gram <= 1e-9 && worst_simplex <= 1e-9,
            std::to_string(res.iht_steps.size()) + " iterations, max nnz " + std::to_string(worst_nnz) + "/" +
                std::to_string(k) + ", gram " + fmt("%.1e", worst_gram) + ", simplex " + fmt("%.1e", worst_simplex)};
}

Outcome theory_constants()
{
    const auto g = guarantee_constants(0.0, 1.0, 1.0, 2.0);
    const double alpha = 2.0 / (std::sqrt(2.0) - 1.0);
    const double beta = 2.0 * std::sqrt(2.0) / (std::sqrt(2.0) - 1.0);
    const bool values = g.valid && std::abs(g.alpha - alpha) <= 1e-6 && std::abs(g.beta - beta) <= 1e-6;
    double lo = 0.0, hi = 0.9;
    while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        if (guarantee_constants(mid, 1.0, 1.0, 2.0).valid) lo = mid;
        else hi = mid;
    }
    const double boundary = 0.5 * (lo + hi);
    const bool flips = !guarantee_constants(1.0 / 3.0, 1.0, 1.0, 2.0).valid && std::abs(boundary - 1.0 / 3.0) <= 1e-9;
    return {values && flips, "alpha " + fmt("%.6f", g.alpha) + ", beta " + fmt("%.6f", g.beta) + ", boundary " +
                                 fmt("%.10f", boundary)};
}

Outcome rip_oracle()
{
    std::mt19937_64 rng(404);
    std::uniform_int_distribution<int> rows(4, 12);
    int ok = 0;
    for (int t = 0; t < 100; ++t) {
        const Index m = rows(rng);
        const Mat a = oracle::random_matrix(m, 12, rng) / std::sqrt(static_cast<double>(m));
        const double exact = oracle::exhaustive_rip(a, 2);
        const auto est = empirical_rip(dense_map(a), std::nullopt, 2, 500, derive_seed(405, t));
        if (est.delta <= exact + 1e-12) ++ok;
    }
    Mat h(2, 2);
    h << 1.5, 0.0, 0.0, 0.5;
    const auto [hn, diag] = normalize_mixing(MixingMatrix(h));
    const Index n1 = 4;
    const auto est = empirical_rip(identity_map(n1 * 2), mixing_map(hn.data(), n1), 2, 2000, 406);
    const bool converges = std::abs(est.delta - diag.eta) <= 0.05;
    return {ok == 100 && converges, std::to_string(ok) + "/100 below exhaustive delta; diagonal H delta " +
                                        fmt("%.4f", est.delta) + " vs eta " + fmt("%.4f", diag.eta)};
}

Outcome baseline_dominance()
{
    ExperimentConfig cfg = base_config();
    cfg.scene.rows = 32;
    cfg.scene.cols = 32;
    cfg.scene.rho = 3;
    cfg.scene.seed = 31;
    cfg.rates = {0.125};
    cfg.trials = 1;
    auto run = [&](Scheme scheme, Method method) {
        ExperimentConfig c = cfg;
        c.scheme = scheme;
        c.method = method;
        return run_experiment(c).front();
    };
    const ResultRow dec = run(Scheme::decorrelating, Method::ppxa_tv);
    const ResultRow tvdn = run(Scheme::dense, Method::tvdn);
    const ResultRow bpdn = run(Scheme::dense, Method::bpdn);
    const ResultRow dense = run(Scheme::dense, Method::ppxa_tv);
    const double margin = dec.reconstruction_snr_db - std::max(tvdn.reconstruction_snr_db, bpdn.reconstruction_snr_db);
    const double speedup = dense.wall_time_s / dec.wall_time_s;
    return {margin >= 6.0 && speedup >= 5.0,
            "SNR decorrelating " + fmt("%.1f", dec.reconstruction_snr_db) + " / tvdn " +
                fmt("%.1f", tvdn.reconstruction_snr_db) + " / bpdn " + fmt("%.1f", bpdn.reconstruction_snr_db) +
                " dB; time " + fmt("%.2f", dec.wall_time_s) + " s vs dense " + fmt("%.2f", dense.wall_time_s) +
                " s (" + fmt("%.1f", speedup) + "x)"};
}

} // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"decorrelation identity", decorrelation_identity},
        {"tight frame and closed-form projection", tight_frame},
        {"exact recovery, decorrelating + TV", exact_recovery},
        {"channel-count independence", channel_independence},
        {"conditioning robustness", conditioning},
        {"noise robustness at 30 dB", noise_robustness},
        {"hard-thresholding step contracts", iht_contracts},
        {"guarantee constants", theory_constants},
        {"empirical RIP vs exhaustive oracle", rip_oracle},
        {"baseline dominance and speedup", baseline_dominance},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::printf("criterion %2zu %s: %s (%s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return failures;
}
