#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "csskit/error.hpp"
#include "csskit/linear_map.hpp"
#include "csskit/solvers.hpp"

namespace csskit {

/// 20 log10(||X||_F / ||X - X_hat||_F); +inf when the two are equal.
inline double reconstruction_snr(const Mat& x, const Mat& x_hat)
{
    detail::require_dims(x.rows() == x_hat.rows() && x.cols() == x_hat.cols(), "reconstruction_snr: shapes differ");
    const double err = (x - x_hat).norm();
    if (err == 0.0) return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(x.norm() / err);
}

/// Fraction of pixels whose hardened label equals the ground-truth label.
inline double accuracy(const std::vector<int>& labels, const Mat& s_hat)
{
    detail::require_dims(static_cast<Index>(labels.size()) == s_hat.rows(), "accuracy: one label per pixel");
    if (labels.empty()) return 1.0;
    const Mat hard = harden_sources(s_hat);
    Index hits = 0;
    for (Index p = 0; p < hard.rows(); ++p) {
        const int l = labels[static_cast<std::size_t>(p)];
        if (l >= 0 && l < hard.cols() && hard(p, l) == 1.0) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

} // namespace csskit
