#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "csskit/error.hpp"
#include "csskit/linear_map.hpp"

namespace csskit {

enum class WaveletFamily { haar, db4 };

inline std::string to_string(WaveletFamily f) { return f == WaveletFamily::haar ? "haar" : "db4"; }

inline WaveletFamily parse_wavelet_family(const std::string& s)
{
    if (s == "haar") return WaveletFamily::haar;
    if (s == "db4") return WaveletFamily::db4;
    throw InvalidArgument("unknown wavelet family: " + s);
}

/// Orthonormal separable 2-D wavelet basis with periodic boundary.
///
/// Images are flattened row-major (pixel p at row p / cols, column p % cols),
/// coefficients use the Mallat layout in the same rows x cols grid with the
/// coarsest approximation in the top-left corner. forward() is the analysis
/// operator Psi*, inverse() the synthesis operator Psi.
class Wavelet2D {
public:
    /// levels < 0 selects the deepest decomposition both dims allow.
    Wavelet2D(Index rows, Index cols, WaveletFamily family = WaveletFamily::haar, int levels = -1)
        : rows_(rows), cols_(cols), family_(family)
    {
        detail::require(rows >= 1 && cols >= 1, "Wavelet2D: dims must be positive");
        const int max_levels = max_levels_for(rows, cols);
        levels_ = levels < 0 ? max_levels : levels;
        detail::require(levels_ <= max_levels, "Wavelet2D: dims must be multiples of 2^levels");
        if (family == WaveletFamily::haar) {
            const double r = 1.0 / std::sqrt(2.0);
            lowpass_ = {r, r};
        } else {
            lowpass_ = {0.23037781330889650086,  0.71484657055291564709,  0.63088076792985890788,
                        -0.027983769416859854211, -0.18703481171909308408, 0.030841381835560763627,
                        0.032883011666885199735,  -0.010597401785069032105};
        }
        const std::size_t len = lowpass_.size();
        highpass_.resize(len);
        for (std::size_t n = 0; n < len; ++n)
            highpass_[n] = ((n % 2) ? -1.0 : 1.0) * lowpass_[len - 1 - n];
    }

    static int max_levels_for(Index rows, Index cols)
    {
        int l = 0;
        while (rows % 2 == 0 && cols % 2 == 0 && rows > 1 && cols > 1) {
            rows /= 2;
            cols /= 2;
            ++l;
        }
        return l;
    }

    Index rows() const { return rows_; }
    Index cols() const { return cols_; }
    Index size() const { return rows_ * cols_; }
    int levels() const { return levels_; }
    WaveletFamily family() const { return family_; }

    Vec forward(const Vec& image) const
    {
        detail::require_dims(image.size() == size(), "Wavelet2D::forward: wrong image size");
        Vec c = image;
        Index r = rows_, q = cols_;
        std::vector<double> buf;
        for (int l = 0; l < levels_; ++l) {
            for (Index i = 0; i < r; ++i) analyze(c.data() + i * cols_, q, 1, buf);
            for (Index j = 0; j < q; ++j) analyze(c.data() + j, r, cols_, buf);
            r /= 2;
            q /= 2;
        }
        return c;
    }

    Vec inverse(const Vec& coeffs) const
    {
        detail::require_dims(coeffs.size() == size(), "Wavelet2D::inverse: wrong coefficient count");
        Vec x = coeffs;
        std::vector<double> buf;
        for (int l = levels_ - 1; l >= 0; --l) {
            const Index r = rows_ >> l;
            const Index q = cols_ >> l;
            for (Index j = 0; j < q; ++j) synthesize(x.data() + j, r, cols_, buf);
            for (Index i = 0; i < r; ++i) synthesize(x.data() + i * cols_, q, 1, buf);
        }
        return x;
    }

    /// Column-wise forward on an n1 x c matrix (one image per column).
    Mat forward_columns(const Mat& images) const
    {
        Mat out(images.rows(), images.cols());
        for (Index c = 0; c < images.cols(); ++c) out.col(c) = forward(images.col(c));
        return out;
    }

    Mat inverse_columns(const Mat& coeffs) const
    {
        Mat out(coeffs.rows(), coeffs.cols());
        for (Index c = 0; c < coeffs.cols(); ++c) out.col(c) = inverse(coeffs.col(c));
        return out;
    }

    /// Psi = Id_c kron Psi_2D acting on stacked coefficient vectors (synthesis).
    LinearMap synthesis_map(Index channels) const
    {
        Wavelet2D self = *this;
        const Index n = size();
        return LinearMap(
            n * channels, n * channels,
            [self, n, channels](const Vec& t) {
                Mat s = self.inverse_columns(Eigen::Map<const Mat>(t.data(), n, channels));
                return Vec(Eigen::Map<const Vec>(s.data(), s.size()));
            },
            [self, n, channels](const Vec& x) {
                Mat t = self.forward_columns(Eigen::Map<const Mat>(x.data(), n, channels));
                return Vec(Eigen::Map<const Vec>(t.data(), t.size()));
            },
            1.0, true);
    }

private:
    // One periodized analysis step on n samples spaced by `stride`:
    // approximation to the first n/2 slots, details to the last n/2.
    void analyze(double* data, Index n, Index stride, std::vector<double>& buf) const
    {
        const Index half = n / 2;
        buf.assign(static_cast<std::size_t>(n), 0.0);
        const auto len = static_cast<Index>(lowpass_.size());
        for (Index k = 0; k < half; ++k) {
            double a = 0.0, d = 0.0;
            for (Index t = 0; t < len; ++t) {
                const double v = data[((2 * k + t) % n) * stride];
                a += lowpass_[static_cast<std::size_t>(t)] * v;
                d += highpass_[static_cast<std::size_t>(t)] * v;
            }
            buf[static_cast<std::size_t>(k)] = a;
            buf[static_cast<std::size_t>(half + k)] = d;
        }
        for (Index i = 0; i < n; ++i) data[i * stride] = buf[static_cast<std::size_t>(i)];
    }

    void synthesize(double* data, Index n, Index stride, std::vector<double>& buf) const
    {
        const Index half = n / 2;
        buf.assign(static_cast<std::size_t>(n), 0.0);
        const auto len = static_cast<Index>(lowpass_.size());
        for (Index k = 0; k < half; ++k) {
            const double a = data[k * stride];
            const double d = data[(half + k) * stride];
            for (Index t = 0; t < len; ++t)
                buf[static_cast<std::size_t>((2 * k + t) % n)] +=
                    lowpass_[static_cast<std::size_t>(t)] * a + highpass_[static_cast<std::size_t>(t)] * d;
        }
        for (Index i = 0; i < n; ++i) data[i * stride] = buf[static_cast<std::size_t>(i)];
    }

    Index rows_;
    Index cols_;
    WaveletFamily family_;
    int levels_ = 0;
    std::vector<double> lowpass_;
    std::vector<double> highpass_;
};

} // namespace csskit
