#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SVD>

#include "csskit/error.hpp"
#include "csskit/linear_map.hpp"

// Linear mixture model X = S H^T and mixing-matrix diagnostics.

namespace csskit {

inline constexpr double kRankTol = 1e-10;
inline constexpr double kRowSumTol = 1e-9;

/// Multichannel data X: (rows*cols) pixels by `channels`, pixel-major columns.
/// Pixel p of the image sits at row p / cols, column p % cols.
class HsiCube {
public:
    HsiCube(Index rows, Index cols, Mat data) : rows_(rows), cols_(cols), data_(std::move(data))
    {
        detail::require(rows > 0 && cols > 0, "HsiCube: spatial dims must be positive");
        detail::require_dims(data_.rows() == rows * cols, "HsiCube: data rows != rows*cols");
        detail::require(data_.cols() >= 1, "HsiCube: at least one channel required");
        detail::require(data_.allFinite(), "HsiCube: non-finite entries");
    }

    Index rows() const { return rows_; }
    Index cols() const { return cols_; }
    Index pixels() const { return rows_ * cols_; }
    Index channels() const { return data_.cols(); }
    const Mat& data() const { return data_; }

private:
    Index rows_;
    Index cols_;
    Mat data_;
};

/// Per-pixel abundances S (n1 x rho); rows on the probability simplex.
class SourceMatrix {
public:
    SourceMatrix(Index rows, Index cols, Mat data, bool disjoint);

    Index rows() const { return rows_; }
    Index cols() const { return cols_; }
    Index rho() const { return data_.cols(); }
    bool disjoint() const { return disjoint_; }
    const Mat& data() const { return data_; }

private:
    Index rows_;
    Index cols_;
    Mat data_;
    bool disjoint_;
};

/// Spectral signatures H (n2 x rho), one per column. Full column rank.
class MixingMatrix {
public:
    explicit MixingMatrix(Mat data, std::vector<std::string> names = {})
        : data_(std::move(data)), names_(std::move(names))
    {
        detail::require(data_.size() > 0, "MixingMatrix: empty");
        detail::require(data_.allFinite(), "MixingMatrix: non-finite entries");
        detail::require_dims(data_.rows() >= data_.cols(), "MixingMatrix: need n2 >= rho");
        detail::require_dims(names_.empty() || static_cast<Index>(names_.size()) == data_.cols(),
                             "MixingMatrix: one name per source");
        Eigen::JacobiSVD<Mat> svd(data_);
        const auto& s = svd.singularValues();
        if (!(s(s.size() - 1) > kRankTol * s(0)))
            throw RankDeficient("MixingMatrix: not full column rank");
    }

    Index channels() const { return data_.rows(); }
    Index rho() const { return data_.cols(); }
    const Mat& data() const { return data_; }
    const std::vector<std::string>& names() const { return names_; }

private:
    Mat data_;
    std::vector<std::string> names_;
};

struct MixingDiagnostics {
    double sigma_max = 0.0;
    double sigma_min = 0.0;
    double xi = 0.0;    ///< condition number sigma_max / sigma_min
    double eta = 0.0;   ///< max(1 - sigma_min^2, sigma_max^2 - 1)
    double scale = 1.0; ///< factor H was divided by
};

inline MixingDiagnostics mixing_diagnostics(const Mat& h, double scale = 1.0)
{
    Eigen::JacobiSVD<Mat> svd(h);
    const auto& s = svd.singularValues();
    MixingDiagnostics d;
    d.sigma_max = s(0);
    d.sigma_min = s(s.size() - 1);
    d.xi = d.sigma_max / d.sigma_min;
    d.eta = std::max(1.0 - d.sigma_min * d.sigma_min, d.sigma_max * d.sigma_max - 1.0);
    d.scale = scale;
    return d;
}

/// Divides H by (sigma_max + sigma_min) / 2 so that 1 <= sigma_max < 2 and
/// 0 < sigma_min <= 1. The matching source matrix is S * scale.
inline std::pair<MixingMatrix, MixingDiagnostics> normalize_mixing(const MixingMatrix& h)
{
    Eigen::JacobiSVD<Mat> svd(h.data());
    const auto& s = svd.singularValues();
    const double smax = s(0);
    const double smin = s(s.size() - 1);
    if (!(smin > kRankTol * smax)) throw RankDeficient("normalize_mixing: rank-deficient H");
    const double scale = 0.5 * (smax + smin);
    MixingMatrix normalized(h.data() / scale, h.names());
    auto diag = mixing_diagnostics(normalized.data(), scale);
    return {std::move(normalized), diag};
}

/// X = S H^T.
inline Mat mix(const Mat& s, const Mat& h)
{
    detail::require_dims(s.cols() == h.cols(), "mix: S and H disagree on rho");
    return s * h.transpose();
}

inline HsiCube mix(const SourceMatrix& s, const MixingMatrix& h)
{
    return HsiCube(s.rows(), s.cols(), mix(s.data(), h.data()));
}

/// (H kron Id_n1) S_vec without forming the Kronecker product.
inline Vec mixing_forward(const Vec& s_vec, const Mat& h)
{
    const Index rho = h.cols();
    detail::require_dims(rho > 0 && s_vec.size() % rho == 0, "mixing_forward: length not a multiple of rho");
    const Index n1 = s_vec.size() / rho;
    Eigen::Map<const Mat> s(s_vec.data(), n1, rho);
    Mat x = s * h.transpose();
    return Eigen::Map<const Vec>(x.data(), x.size());
}

/// (H kron Id_n1)^T X_vec = vec(X H).
inline Vec mixing_adjoint(const Vec& x_vec, const Mat& h)
{
    const Index n2 = h.rows();
    detail::require_dims(n2 > 0 && x_vec.size() % n2 == 0, "mixing_adjoint: length not a multiple of n2");
    const Index n1 = x_vec.size() / n2;
    Eigen::Map<const Mat> x(x_vec.data(), n1, n2);
    Mat s = x * h;
    return Eigen::Map<const Vec>(s.data(), s.size());
}

inline Mat mixing_adjoint(const Mat& x, const Mat& h)
{
    detail::require_dims(x.cols() == h.rows(), "mixing_adjoint: X columns != n2");
    return x * h;
}

/// Phi = H kron Id_n1 as a LinearMap on S_vec.
inline LinearMap mixing_map(const Mat& h, Index n1)
{
    const Index rho = h.cols();
    const Index n2 = h.rows();
    return LinearMap(
        n1 * rho, n1 * n2, [h](const Vec& s) { return mixing_forward(s, h); },
        [h](const Vec& x) { return mixing_adjoint(x, h); });
}

struct SourceValidation {
    struct RowSum {
        Index row;
        double deviation;
    };
    struct Range {
        Index row;
        Index col;
        double value;
    };
    double max_rowsum_deviation = 0.0;
    std::vector<RowSum> rowsum_violations;
    std::vector<Range> range_violations;
    std::vector<Index> disjoint_violations;

    bool ok() const
    {
        return rowsum_violations.empty() && range_violations.empty() && disjoint_violations.empty();
    }
};

/// Report-only check of the abundance constraints; never throws.
inline SourceValidation validate_sources(const Mat& s, bool disjoint, double tol = kRowSumTol)
{
    SourceValidation report;
    for (Index i = 0; i < s.rows(); ++i) {
        const double dev = std::abs(s.row(i).sum() - 1.0);
        report.max_rowsum_deviation = std::max(report.max_rowsum_deviation, dev);
        if (!(dev <= tol)) report.rowsum_violations.push_back({i, dev});
        int ones = 0;
        bool others_zero = true;
        for (Index j = 0; j < s.cols(); ++j) {
            const double v = s(i, j);
            if (!(v >= -tol && v <= 1.0 + tol)) report.range_violations.push_back({i, j, v});
            if (std::abs(v - 1.0) <= tol) ++ones;
            else if (std::abs(v) > tol) others_zero = false;
        }
        if (disjoint && !(ones == 1 && others_zero)) report.disjoint_violations.push_back(i);
    }
    return report;
}

inline SourceMatrix::SourceMatrix(Index rows, Index cols, Mat data, bool disjoint)
    : rows_(rows), cols_(cols), data_(std::move(data)), disjoint_(disjoint)
{
    detail::require(rows > 0 && cols > 0, "SourceMatrix: spatial dims must be positive");
    detail::require_dims(data_.rows() == rows * cols, "SourceMatrix: data rows != rows*cols");
    detail::require(data_.cols() >= 1, "SourceMatrix: rho must be >= 1");
    if (!validate_sources(data_, disjoint_).ok())
        throw InvalidArgument("SourceMatrix: rows must lie on the simplex (one-hot when disjoint)");
}

} // namespace csskit
