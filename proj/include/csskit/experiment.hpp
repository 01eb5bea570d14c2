#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "csskit/io.hpp"
#include "csskit/metrics.hpp"
#include "csskit/model.hpp"
#include "csskit/sampling.hpp"
#include "csskit/scene.hpp"
#include "csskit/solvers.hpp"
#include "csskit/wavelet.hpp"

// Experiment harness: scene -> operator -> measurements -> solver -> metrics,
// over a grid of sampling rates, noise levels and trials.

namespace csskit {

enum class Method { ppxa_tv, ppxa_l1, iht, bpdn, tvdn, l1_ss };

inline std::string to_string(Method m)
{
    switch (m) {
    case Method::ppxa_tv: return "ppxa-tv";
    case Method::ppxa_l1: return "ppxa-l1";
    case Method::iht: return "iht";
    case Method::bpdn: return "bpdn";
    case Method::tvdn: return "tvdn";
    case Method::l1_ss: return "l1-ss";
    }
    return "?";
}

inline Method parse_method(const std::string& s)
{
    for (auto m : {Method::ppxa_tv, Method::ppxa_l1, Method::iht, Method::bpdn, Method::tvdn, Method::l1_ss})
        if (to_string(m) == s) return m;
    throw InvalidArgument("unknown method: " + s);
}

/// How the decorrelating scheme obtains its measurements.
enum class Decorrelation { acquisition, post_processing };

inline std::string to_string(Decorrelation d)
{
    return d == Decorrelation::acquisition ? "acquisition" : "post-processing";
}

inline Decorrelation parse_decorrelation(const std::string& s)
{
    if (s == "acquisition") return Decorrelation::acquisition;
    if (s == "post-processing") return Decorrelation::post_processing;
    throw InvalidArgument("unknown decorrelation mode: " + s);
}

struct ExperimentConfig {
    SceneSpec scene;
    Scheme scheme = Scheme::decorrelating;
    Decorrelation decorrelation = Decorrelation::post_processing;
    CoreKind core = CoreKind::random_convolution;
    std::vector<double> rates{0.25};
    std::vector<double> snr_db{std::numeric_limits<double>::infinity()};
    Method method = Method::ppxa_tv;
    SolverConfig solver;
    int trials = 1;
    std::uint64_t seed = 1;
    WaveletFamily wavelet = WaveletFamily::haar;
    int wavelet_levels = -1;
    /// Use sigma_max(H-dagger) * epsilon instead of the oracle noise norm
    /// after post-processing decorrelation.
    bool deployable_epsilon = false;
    std::string output;

    void validate() const
    {
        scene.validate();
        solver.validate();
        detail::require(!rates.empty() && !snr_db.empty(), "ExperimentConfig: rates and snr_db must be non-empty");
        for (double r : rates) detail::require(r > 0.0 && r <= 1.0, "ExperimentConfig: rates must be in (0, 1]");
        for (double s : snr_db)
            detail::require(!std::isnan(s) && s > 0.0, "ExperimentConfig: snr_db entries must be > 0 or null");
        detail::require(trials >= 1, "ExperimentConfig: trials must be >= 1");
        if (method == Method::bpdn || method == Method::tvdn)
            detail::require(scheme != Scheme::decorrelating,
                            "ExperimentConfig: bpdn/tvdn recover the cube and need a dense or uniform scheme");
        if (method == Method::iht)
            detail::require(scene.disjoint, "ExperimentConfig: iht assumes disjoint sources");
    }
};

struct ResultRow {
    std::string method;
    std::string scheme;
    std::string decorrelation;
    std::string core;
    Index rows = 0;
    Index cols = 0;
    Index rho = 0;
    Index channels = 0;
    std::string partition;
    bool disjoint = true;
    std::optional<double> target_xi;
    double xi = 0.0;
    double rate = 0.0;
    Index m_hat = 0;
    Index m = 0;
    double snr_db = 0.0;
    int trial = 0;
    std::uint64_t scene_seed = 0;
    std::uint64_t operator_seed = 0;
    double epsilon = 0.0;
    double reconstruction_snr_db = 0.0; ///< from X_hat = S_hat H^T (or the cube estimate)
    std::optional<double> hardened_snr_db; ///< from harden(S_hat) H^T, disjoint scenes
    double source_snr_db = 0.0;
    std::optional<double> accuracy;
    int iterations = 0;
    bool converged = false;
    bool diverged = false;
    double residual = 0.0;
    std::string error; ///< non-empty when the trial failed
    double wall_time_s = 0.0;
};

struct TrialOutcome {
    ResultRow row;
    Mat s_hat;
    Mat x_hat;
};

namespace detail {

inline std::uint64_t trial_seed(std::uint64_t base, int trial) { return derive_seed(base, static_cast<std::uint64_t>(trial)); }

} // namespace detail

/// Runs one (rate, snr, trial) cell. Solver failures are reported in the row.
inline TrialOutcome run_trial(const ExperimentConfig& cfg, double rate, double snr_db, int trial)
{
    const auto t0 = std::chrono::steady_clock::now();
    TrialOutcome out;
    ResultRow& row = out.row;
    row.method = to_string(cfg.method);
    row.scheme = to_string(cfg.scheme);
    row.decorrelation = cfg.scheme == Scheme::decorrelating ? to_string(cfg.decorrelation) : "none";
    row.core = to_string(cfg.core);
    row.rows = cfg.scene.rows;
    row.cols = cfg.scene.cols;
    row.rho = cfg.scene.rho;
    row.channels = cfg.scene.channels;
    row.partition = to_string(cfg.scene.partition);
    row.disjoint = cfg.scene.disjoint;
    row.target_xi = cfg.scene.target_xi;
    row.rate = rate;
    row.snr_db = snr_db;
    row.trial = trial;

    SceneSpec spec = cfg.scene;
    spec.seed = detail::trial_seed(cfg.scene.seed, trial);
    row.scene_seed = spec.seed;
    const Scene scene = generate_scene(spec);
    row.xi = scene.diagnostics.xi;

    const std::uint64_t trial_base = detail::trial_seed(cfg.seed, trial);
    row.operator_seed = derive_seed(trial_base, 1);
    const std::uint64_t noise_seed = derive_seed(trial_base, 2);
    const Index n1 = spec.rows * spec.cols;
    const Index n2 = spec.channels;
    const Mat& x = scene.cube.data();

    SamplingOperator acquisition = [&] {
        if (cfg.scheme == Scheme::dense) {
            const auto m = std::max<Index>(1, std::lround(rate * static_cast<double>(n1 * n2)));
            return SamplingOperator::dense(cfg.core, m, n1, n2, row.operator_seed);
        }
        const auto m_hat = std::max<Index>(1, std::lround(rate * static_cast<double>(n1)));
        CoreOperator core(cfg.core, m_hat, n1, row.operator_seed);
        if (cfg.scheme == Scheme::decorrelating && cfg.decorrelation == Decorrelation::acquisition)
            return SamplingOperator::decorrelating(core, scene.mixing);
        return SamplingOperator::uniform(core, n2);
    }();
    MeasurementSet ms = add_noise(acquisition.forward_cube(x), snr_db, noise_seed);
    ms.descriptor = acquisition.descriptor();
    ms.descriptor.rows = spec.rows;
    ms.descriptor.cols = spec.cols;
    SamplingOperator solve_op = acquisition;
    if (cfg.scheme == Scheme::decorrelating && cfg.decorrelation == Decorrelation::post_processing) {
        ms = decorrelate(ms, scene.mixing, acquisition.core().m_hat());
        solve_op = SamplingOperator::decorrelating(acquisition.core(), scene.mixing);
        if (cfg.deployable_epsilon) ms.epsilon = *ms.epsilon_bound;
    }
    row.m_hat = acquisition.core().m_hat();
    row.m = acquisition.output_dim();
    row.epsilon = ms.epsilon;

    const Wavelet2D psi(spec.rows, spec.cols, cfg.wavelet, cfg.wavelet_levels);
    SolverConfig scfg = cfg.solver;
    try {
        SolveResult res;
        switch (cfg.method) {
        case Method::ppxa_tv:
        case Method::ppxa_l1:
            res = ppxa_solve(make_source_problem(ms, solve_op, scene.mixing,
                                                 cfg.method == Method::ppxa_tv ? Prior::tv : Prior::l1_wavelet, psi),
                             scfg);
            break;
        case Method::iht: {
            if (scfg.iht_k == 0) {
                // oracle budget: the true number of nonzero wavelet coefficients
                const Mat theta = psi.forward_columns(scene.sources.data());
                scfg.iht_k = std::max<Index>(spec.rho, (theta.array().abs() > 1e-9).count());
            }
            res = iht_ss_solve(make_source_problem(ms, solve_op, scene.mixing, Prior::l1_wavelet, psi), scfg);
            break;
        }
        case Method::l1_ss: res = l1_ss_synthesis_solve(ms.y, solve_op, scene.mixing, psi, ms.epsilon, scfg); break;
        case Method::bpdn: res = bpdn_solve(ms.y, solve_op, psi, ms.epsilon, scfg); break;
        case Method::tvdn: res = tvdn_solve(ms.y, solve_op, psi, ms.epsilon, scfg); break;
        }
        row.iterations = res.iterations;
        row.converged = res.converged;
        row.diverged = res.diverged;
        row.residual = res.residual;
        if (cfg.method == Method::bpdn || cfg.method == Method::tvdn) {
            out.x_hat = res.S_hat;
            out.s_hat = res.S_hat * pseudo_inverse(scene.mixing.data()).transpose();
        } else {
            out.s_hat = res.S_hat;
            out.x_hat = reconstruct_cube(res.S_hat, scene.mixing);
        }
        if (out.x_hat.allFinite()) {
            row.reconstruction_snr_db = reconstruction_snr(x, out.x_hat);
            row.source_snr_db = reconstruction_snr(scene.sources.data(), out.s_hat);
            if (spec.disjoint) {
                row.accuracy = accuracy(scene.labels, out.s_hat);
                row.hardened_snr_db = reconstruction_snr(x, reconstruct_cube(harden_sources(out.s_hat), scene.mixing));
            }
        } else {
            row.reconstruction_snr_db = row.source_snr_db = -std::numeric_limits<double>::infinity();
            if (spec.disjoint) row.accuracy = 0.0;
        }
    } catch (const std::exception& e) {
        row.error = e.what();
        row.diverged = true;
    }
    row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

/// Worker count: CSSKIT_THREADS if set (>= 1), else the hardware concurrency.
inline unsigned worker_count()
{
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("CSSKIT_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(v));
    }
    return n;
}

/// All (rate, snr, trial) cells in grid order. Cells run concurrently on
/// worker_count() threads; the order of the rows never depends on timing.
inline std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg)
{
    cfg.validate();
    struct Cell {
        double rate;
        double snr;
        int trial;
    };
    std::vector<Cell> cells;
    for (double rate : cfg.rates)
        for (double snr : cfg.snr_db)
            for (int t = 0; t < cfg.trials; ++t) cells.push_back({rate, snr, t});
    std::vector<ResultRow> rows(cells.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++)
            rows[i] = run_trial(cfg, cells[i].rate, cells[i].snr, cells[i].trial).row;
    };
    const unsigned workers = std::min<unsigned>(worker_count(), static_cast<unsigned>(cells.size()));
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    return rows;
}

namespace detail {

inline std::string opt_cell(const std::optional<double>& v) { return v ? io::format_double(*v) : ""; }

} // namespace detail

inline const std::vector<std::string>& result_columns()
{
    static const std::vector<std::string> cols{
        "method", "scheme", "decorrelation", "core", "rows", "cols", "rho", "channels", "partition", "disjoint",
        "target_xi", "xi", "rate", "m_hat", "m", "snr_db", "trial", "scene_seed", "operator_seed", "epsilon",
        "reconstruction_snr_db", "hardened_snr_db", "source_snr_db", "accuracy", "iterations", "converged",
        "diverged", "residual", "error"};
    return cols;
}

/// RFC-4180 results. Wall time is left out so reruns are byte-identical;
/// see write_timing_csv.
inline void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows)
{
    using io::csv_cell;
    using io::format_double;
    const auto& cols = result_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << "\r\n";
    for (const auto& r : rows) {
        std::vector<std::string> cells{csv_cell(r.method),
                                       r.scheme,
                                       r.decorrelation,
                                       r.core,
                                       std::to_string(r.rows),
                                       std::to_string(r.cols),
                                       std::to_string(r.rho),
                                       std::to_string(r.channels),
                                       r.partition,
                                       r.disjoint ? "true" : "false",
                                       detail::opt_cell(r.target_xi),
                                       format_double(r.xi),
                                       format_double(r.rate),
                                       std::to_string(r.m_hat),
                                       std::to_string(r.m),
                                       format_double(r.snr_db),
                                       std::to_string(r.trial),
                                       std::to_string(r.scene_seed),
                                       std::to_string(r.operator_seed),
                                       format_double(r.epsilon),
                                       format_double(r.reconstruction_snr_db),
                                       detail::opt_cell(r.hardened_snr_db),
                                       format_double(r.source_snr_db),
                                       detail::opt_cell(r.accuracy),
                                       std::to_string(r.iterations),
                                       r.converged ? "true" : "false",
                                       r.diverged ? "true" : "false",
                                       format_double(r.residual),
                                       csv_cell(r.error)};
        for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
        out << "\r\n";
    }
}

inline void write_timing_csv(std::ostream& out, const std::vector<ResultRow>& rows)
{
    out << "rate,snr_db,trial,wall_time_s\r\n";
    for (const auto& r : rows)
        out << io::format_double(r.rate) << ',' << io::format_double(r.snr_db) << ',' << r.trial << ','
            << io::format_double(r.wall_time_s) << "\r\n";
}

// ---- JSON configuration ----------------------------------------------------

inline SolverConfig solver_config_from_json(const nlohmann::json& j, SolverConfig c = {})
{
    c.beta = j.value("beta", c.beta);
    c.max_iters = j.value("max_iters", c.max_iters);
    c.rel_tol = j.value("rel_tol", c.rel_tol);
    c.iht_k = j.value("iht_k", c.iht_k);
    if (j.contains("gamma_step") && !j.at("gamma_step").is_null()) c.gamma_step = j.at("gamma_step").get<double>();
    c.tv_max_iters = j.value("tv_max_iters", c.tv_max_iters);
    c.tv_tol = j.value("tv_tol", c.tv_tol);
    c.ball_max_iters = j.value("ball_max_iters", c.ball_max_iters);
    c.ball_tol = j.value("ball_tol", c.ball_tol);
    c.certify_max_iters = j.value("certify_max_iters", c.certify_max_iters);
    c.certify_rounds = j.value("certify_rounds", c.certify_rounds);
    c.ball_warm_start = j.value("ball_warm_start", c.ball_warm_start);
    c.validate();
    return c;
}

inline SceneSpec scene_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base = {})
{
    SceneSpec s;
    s.rows = j.value("rows", s.rows);
    s.cols = j.value("cols", s.cols);
    s.rho = j.value("rho", s.rho);
    s.partition = parse_partition(j.value("partition", std::string("rectangles")));
    s.disjoint = j.value("disjoint", s.disjoint);
    s.seed = j.value("seed", s.seed);
    s.channels = j.value("channels", s.channels);
    if (j.contains("target_xi") && !j.at("target_xi").is_null()) s.target_xi = j.at("target_xi").get<double>();
    const std::string spectra = j.value("spectra", std::string("synthetic-smooth"));
    if (spectra != "synthetic-smooth") {
        std::filesystem::path p(spectra);
        if (p.is_relative() && !base.empty()) p = base / p;
        auto sp = io::read_spectra(p);
        s.spectra = sp.h;
        s.names = sp.names;
        s.channels = sp.h.rows();
        detail::require_dims(sp.h.cols() == s.rho, "scene: spectra CSV column count != rho");
    }
    s.validate();
    return s;
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {})
{
    try {
        ExperimentConfig c;
        if (j.contains("scene")) c.scene = scene_spec_from_json(j.at("scene"), base);
        c.scheme = parse_scheme(j.value("scheme", std::string("decorrelating")));
        c.decorrelation = parse_decorrelation(j.value("decorrelation", std::string("post-processing")));
        c.core = parse_core_kind(j.value("core", std::string("random-convolution")));
        if (j.contains("rates")) c.rates = j.at("rates").get<std::vector<double>>();
        if (j.contains("snr_db")) {
            c.snr_db.clear();
            for (const auto& v : j.at("snr_db")) c.snr_db.push_back(io::snr_from_json(v));
        }
        c.method = parse_method(j.value("method", std::string("ppxa-tv")));
        if (j.contains("solver")) c.solver = solver_config_from_json(j.at("solver"));
        c.trials = j.value("trials", c.trials);
        c.seed = j.value("seed", c.seed);
        c.wavelet = parse_wavelet_family(j.value("wavelet", std::string("haar")));
        c.wavelet_levels = j.value("wavelet_levels", c.wavelet_levels);
        c.deployable_epsilon = j.value("deployable_epsilon", c.deployable_epsilon);
        c.output = j.value("output", std::string());
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("experiment config: ") + e.what());
    }
}

} // namespace csskit
