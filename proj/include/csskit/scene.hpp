#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "csskit/error.hpp"
#include "csskit/linear_map.hpp"
#include "csskit/model.hpp"

// Synthetic scenes: a spatial partition into rho materials and smooth
// positive spectra, mixed into a cube.

namespace csskit {

enum class Partition { rectangles, voronoi };

inline std::string to_string(Partition p) { return p == Partition::voronoi ? "voronoi" : "rectangles"; }

inline Partition parse_partition(const std::string& s)
{
    if (s == "rectangles") return Partition::rectangles;
    if (s == "voronoi") return Partition::voronoi;
    throw InvalidArgument("unknown partition: " + s);
}

struct SceneSpec {
    Index rows = 16;
    Index cols = 16;
    Index rho = 2;
    Partition partition = Partition::rectangles;
    bool disjoint = true;
    std::uint64_t seed = 1;
    Index channels = 16;
    std::optional<double> target_xi;
    /// When set, used as H instead of the synthetic spectra (n2 x rho).
    std::optional<Mat> spectra;
    std::vector<std::string> names;

    void validate() const
    {
        detail::require(rows >= 2 && cols >= 2, "SceneSpec: rows and cols must be >= 2");
        detail::require(is_pow2(rows) && is_pow2(cols), "SceneSpec: rows and cols must be powers of two");
        detail::require(rho >= 1 && rho <= rows * cols, "SceneSpec: need 1 <= rho <= rows*cols");
        detail::require(channels >= rho, "SceneSpec: need channels >= rho");
        detail::require(!target_xi || *target_xi >= 1.0, "SceneSpec: target_xi must be >= 1");
        if (spectra)
            detail::require_dims(spectra->rows() == channels && spectra->cols() == rho,
                                 "SceneSpec: spectra must be channels x rho");
    }

private:
    static bool is_pow2(Index n) { return n > 0 && (n & (n - 1)) == 0; }
};

struct Scene {
    SourceMatrix sources;
    std::vector<int> labels; ///< row-major, one label per pixel (argmax for non-disjoint scenes)
    MixingMatrix mixing;
    HsiCube cube;
    MixingDiagnostics diagnostics;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<int> rectangle_labels(const SceneSpec& spec, std::mt19937_64& rng)
{
    const Index n = spec.rows * spec.cols;
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<int> labels(static_cast<std::size_t>(n), 0);
        for (Index r = 1; r < spec.rho; ++r) {
            std::uniform_int_distribution<Index> hdist(std::max<Index>(1, spec.rows / 4), std::max<Index>(1, spec.rows / 2));
            std::uniform_int_distribution<Index> wdist(std::max<Index>(1, spec.cols / 4), std::max<Index>(1, spec.cols / 2));
            const Index h = hdist(rng), w = wdist(rng);
            std::uniform_int_distribution<Index> top(0, spec.rows - h), left(0, spec.cols - w);
            const Index t = top(rng), l = left(rng);
            for (Index i = t; i < t + h; ++i)
                for (Index j = l; j < l + w; ++j) labels[static_cast<std::size_t>(i * spec.cols + j)] = static_cast<int>(r);
        }
        std::vector<bool> seen(static_cast<std::size_t>(spec.rho), false);
        for (int v : labels) seen[static_cast<std::size_t>(v)] = true;
        if (std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) return labels;
    }
    throw InvalidArgument("generate_scene: could not place rectangles showing every source");
}

inline std::vector<int> voronoi_labels(const SceneSpec& spec, std::mt19937_64& rng)
{
    const Index n = spec.rows * spec.cols;
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::uniform_real_distribution<double> ur(0.0, static_cast<double>(spec.rows));
        std::uniform_real_distribution<double> uc(0.0, static_cast<double>(spec.cols));
        std::vector<std::pair<double, double>> sites(static_cast<std::size_t>(spec.rho));
        for (auto& s : sites) s = {ur(rng), uc(rng)};
        std::vector<int> labels(static_cast<std::size_t>(n));
        std::vector<bool> seen(static_cast<std::size_t>(spec.rho), false);
        for (Index i = 0; i < spec.rows; ++i) {
            for (Index j = 0; j < spec.cols; ++j) {
                int best = 0;
                double best_d = std::numeric_limits<double>::infinity();
                for (std::size_t s = 0; s < sites.size(); ++s) {
                    const double di = static_cast<double>(i) + 0.5 - sites[s].first;
                    const double dj = static_cast<double>(j) + 0.5 - sites[s].second;
                    const double d = di * di + dj * dj;
                    if (d < best_d) {
                        best_d = d;
                        best = static_cast<int>(s);
                    }
                }
                labels[static_cast<std::size_t>(i * spec.cols + j)] = best;
                seen[static_cast<std::size_t>(best)] = true;
            }
        }
        if (std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) return labels;
    }
    throw InvalidArgument("generate_scene: could not place voronoi sites covering every source");
}

/// Gaussian-blurred indicators (replicate boundary), renormalized to row-sum 1.
inline Mat soft_abundances(const std::vector<int>& labels, Index rows, Index cols, Index rho, double sigma = 1.5)
{
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double ksum = 0.0;
    for (int t = -radius; t <= radius; ++t) {
        kernel[static_cast<std::size_t>(t + radius)] = std::exp(-0.5 * t * t / (sigma * sigma));
        ksum += kernel[static_cast<std::size_t>(t + radius)];
    }
    for (auto& k : kernel) k /= ksum;
    auto clamp = [](Index v, Index hi) { return std::clamp<Index>(v, 0, hi - 1); };

    Mat s(rows * cols, rho);
    Vec tmp(rows * cols);
    for (Index r = 0; r < rho; ++r) {
        Vec ind(rows * cols);
        for (Index p = 0; p < rows * cols; ++p) ind[p] = labels[static_cast<std::size_t>(p)] == r ? 1.0 : 0.0;
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) {
                double acc = 0.0;
                for (int t = -radius; t <= radius; ++t)
                    acc += kernel[static_cast<std::size_t>(t + radius)] * ind[i * cols + clamp(j + t, cols)];
                tmp[i * cols + j] = acc;
            }
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) {
                double acc = 0.0;
                for (int t = -radius; t <= radius; ++t)
                    acc += kernel[static_cast<std::size_t>(t + radius)] * tmp[clamp(i + t, rows) * cols + j];
                s(i * cols + j, r) = acc;
            }
    }
    for (Index p = 0; p < s.rows(); ++p) s.row(p) /= s.row(p).sum();
    return s;
}

/// Positive smooth spectra: 3 to 5 gaussian bumps per source on a small
/// baseline. Source i has its dominant bump centred at (i + 0.5) n2 / rho.
inline Mat smooth_spectra(Index n2, Index rho, std::mt19937_64& rng)
{
    Mat h(n2, rho);
    const double n = static_cast<double>(n2);
    std::uniform_int_distribution<int> count(3, 5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Index i = 0; i < rho; ++i) {
        const int bumps = count(rng);
        std::vector<double> mean, width, amp;
        mean.push_back((static_cast<double>(i) + 0.5) * n / static_cast<double>(rho));
        width.push_back(std::max(1.0, 0.35 * n / static_cast<double>(rho)));
        amp.push_back(1.0);
        for (int b = 1; b < bumps; ++b) {
            mean.push_back(unit(rng) * n);
            width.push_back(std::max(0.75, (0.03 + 0.12 * unit(rng)) * n));
            amp.push_back(0.1 + 0.5 * unit(rng));
        }
        for (Index c = 0; c < n2; ++c) {
            double v = 0.02;
            for (std::size_t b = 0; b < mean.size(); ++b) {
                const double d = (static_cast<double>(c) - mean[b]) / width[b];
                v += amp[b] * std::exp(-0.5 * d * d);
            }
            h(c, i) = v;
        }
        h.col(i).normalize();
    }
    return h;
}

inline double condition_number(const Mat& h)
{
    Eigen::JacobiSVD<Mat> svd(h);
    const auto& s = svd.singularValues();
    return s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
}

/// Moves cond(H) toward `target`: columns are blended toward their mean
/// (raises cond) or sharpened by an elementwise power (lowers cond), with
/// the blend or power found by bisection. Columns keep unit norm.
inline Mat steer_condition(const Mat& h0, double target, std::vector<std::string>& warnings)
{
    auto blended = [&h0](double t) {
        Vec mean = h0.rowwise().mean();
        Mat h = h0;
        for (Index i = 0; i < h.cols(); ++i) {
            h.col(i) = (1.0 - t) * h0.col(i) + t * mean;
            h.col(i).normalize();
        }
        return h;
    };
    auto sharpened = [&h0](double p) {
        Mat h = h0.array().pow(p).matrix();
        for (Index i = 0; i < h.cols(); ++i) h.col(i).normalize();
        return h;
    };
    const double natural = condition_number(h0);
    Mat best = h0;
    if (h0.cols() < 2) {
        if (std::abs(natural - target) > 0.1 * target)
            warnings.push_back("target condition number unattainable with a single source");
        return best;
    }
    if (natural < target) {
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (lo + hi);
            (condition_number(blended(mid)) < target ? lo : hi) = mid;
        }
        best = blended(0.5 * (lo + hi));
    } else if (natural > target) {
        double lo = 1.0, hi = 1.0;
        while (condition_number(sharpened(hi)) > target && hi < 1024.0) hi *= 2.0;
        for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (lo + hi);
            (condition_number(sharpened(mid)) > target ? lo : hi) = mid;
        }
        best = sharpened(hi);
    }
    const double got = condition_number(best);
    if (!(std::abs(got - target) <= 0.1 * target))
        warnings.push_back("target condition number " + std::to_string(target) + " not reached; got " +
                           std::to_string(got));
    return best;
}

} // namespace detail

/// Builds S, the label map, H and X = S H^T from the spec. The partition and
/// the spectra come from separate random streams, so S depends only on the
/// spatial fields and the seed.
inline Scene generate_scene(const SceneSpec& spec)
{
    spec.validate();
    std::mt19937_64 spatial(derive_seed(spec.seed, 0));
    std::mt19937_64 spectral(derive_seed(spec.seed, 1));

    std::vector<int> labels = spec.partition == Partition::rectangles ? detail::rectangle_labels(spec, spatial)
                                                                      : detail::voronoi_labels(spec, spatial);
    Mat s;
    if (spec.disjoint) {
        s = Mat::Zero(spec.rows * spec.cols, spec.rho);
        for (std::size_t p = 0; p < labels.size(); ++p) s(static_cast<Index>(p), labels[p]) = 1.0;
    } else {
        s = detail::soft_abundances(labels, spec.rows, spec.cols, spec.rho);
    }

    std::vector<std::string> warnings;
    Mat h = spec.spectra ? *spec.spectra : detail::smooth_spectra(spec.channels, spec.rho, spectral);
    if (spec.target_xi) h = detail::steer_condition(h, *spec.target_xi, warnings);

    std::vector<std::string> names = spec.names;
    if (names.empty())
        for (Index i = 0; i < spec.rho; ++i) names.push_back("source" + std::to_string(i));
    MixingMatrix mixing(h, names);
    SourceMatrix sources(spec.rows, spec.cols, std::move(s), spec.disjoint);
    HsiCube cube = mix(sources, mixing);
    auto diag = mixing_diagnostics(mixing.data());
    return Scene{std::move(sources), std::move(labels), std::move(mixing), std::move(cube), diag, std::move(warnings)};
}

} // namespace csskit
