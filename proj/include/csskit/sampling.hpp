#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/SVD>
#include <unsupported/Eigen/FFT>

#include "csskit/error.hpp"
#include "csskit/linear_map.hpp"
#include "csskit/model.hpp"

namespace csskit {

enum class CoreKind { gaussian, bernoulli, random_convolution, identity };
enum class Scheme { dense, uniform, decorrelating };

inline std::string to_string(CoreKind k)
{
    switch (k) {
    case CoreKind::gaussian: return "gaussian";
    case CoreKind::bernoulli: return "bernoulli";
    case CoreKind::random_convolution: return "random-convolution";
    case CoreKind::identity: return "identity";
    }
    return "?";
}

inline std::string to_string(Scheme s)
{
    switch (s) {
    case Scheme::dense: return "dense";
    case Scheme::uniform: return "uniform";
    case Scheme::decorrelating: return "decorrelating";
    }
    return "?";
}

inline CoreKind parse_core_kind(const std::string& s)
{
    if (s == "gaussian") return CoreKind::gaussian;
    if (s == "bernoulli") return CoreKind::bernoulli;
    if (s == "random-convolution" || s == "rc") return CoreKind::random_convolution;
    if (s == "identity") return CoreKind::identity;
    throw InvalidArgument("unknown core kind: " + s);
}

inline Scheme parse_scheme(const std::string& s)
{
    if (s == "dense") return Scheme::dense;
    if (s == "uniform") return Scheme::uniform;
    if (s == "decorrelating") return Scheme::decorrelating;
    throw InvalidArgument("unknown scheme: " + s);
}

inline bool is_power_of_two(Index n) { return n > 0 && (n & (n - 1)) == 0; }

/// Moore-Penrose pseudo-inverse of a full column rank matrix via SVD.
inline Mat pseudo_inverse(const Mat& h)
{
    Eigen::JacobiSVD<Mat> svd(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    if (!(s(s.size() - 1) > kRankTol * s(0))) throw RankDeficient("pseudo_inverse: rank-deficient matrix");
    return svd.matrixV() * s.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
}

/// The m_hat x n1 core sampling matrix applied per channel or per source.
///
/// gaussian: N(0, 1/m_hat) entries. bernoulli: +-1/sqrt(m_hat).
/// random-convolution: sqrt(n1/m_hat) R F^-1 Sigma F with conjugate-symmetric
/// unit-modulus Sigma (a real orthogonal circulant) and R a uniformly drawn row
/// subset, so that A A* = (n1/m_hat) Id. identity: m_hat == n1, A = Id.
class CoreOperator {
public:
    CoreOperator(CoreKind kind, Index m_hat, Index n1, std::uint64_t seed)
        : kind_(kind), m_hat_(m_hat), n1_(n1), seed_(seed)
    {
        detail::require(n1 >= 1 && m_hat >= 1 && m_hat <= n1, "CoreOperator: need 1 <= m_hat <= n1");
        std::mt19937_64 rng(seed);
        switch (kind) {
        case CoreKind::gaussian: {
            std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(m_hat)));
            Mat a(m_hat, n1);
            for (Index i = 0; i < m_hat; ++i)
                for (Index j = 0; j < n1; ++j) a(i, j) = normal(rng);
            dense_ = std::make_shared<const Mat>(std::move(a));
            break;
        }
        case CoreKind::bernoulli: {
            const double v = 1.0 / std::sqrt(static_cast<double>(m_hat));
            std::bernoulli_distribution coin(0.5);
            Mat a(m_hat, n1);
            for (Index i = 0; i < m_hat; ++i)
                for (Index j = 0; j < n1; ++j) a(i, j) = coin(rng) ? v : -v;
            dense_ = std::make_shared<const Mat>(std::move(a));
            break;
        }
        case CoreKind::random_convolution: {
            detail::require(is_power_of_two(n1), "CoreOperator: random-convolution needs n1 a power of two");
            auto rc = std::make_shared<RandomConvolution>();
            rc->scale = std::sqrt(static_cast<double>(n1) / static_cast<double>(m_hat));
            rc->phases.assign(static_cast<std::size_t>(n1), {1.0, 0.0});
            std::bernoulli_distribution coin(0.5);
            std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
            rc->phases[0] = coin(rng) ? 1.0 : -1.0;
            if (n1 >= 2) {
                const Index half = n1 / 2;
                for (Index k = 1; k < half; ++k) {
                    const auto p = std::polar(1.0, angle(rng));
                    rc->phases[static_cast<std::size_t>(k)] = p;
                    rc->phases[static_cast<std::size_t>(n1 - k)] = std::conj(p);
                }
                rc->phases[static_cast<std::size_t>(half)] = coin(rng) ? 1.0 : -1.0;
            }
            std::vector<Index> idx(static_cast<std::size_t>(n1));
            std::iota(idx.begin(), idx.end(), Index{0});
            for (Index i = 0; i < m_hat; ++i) {
                std::uniform_int_distribution<Index> pick(i, n1 - 1);
                std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
            }
            idx.resize(static_cast<std::size_t>(m_hat));
            std::sort(idx.begin(), idx.end());
            rc->rows = std::move(idx);
            rc_ = std::move(rc);
            break;
        }
        case CoreKind::identity:
            detail::require(m_hat == n1, "CoreOperator: identity core needs m_hat == n1");
            break;
        }
    }

    CoreKind kind() const { return kind_; }
    Index m_hat() const { return m_hat_; }
    Index n1() const { return n1_; }
    std::uint64_t seed() const { return seed_; }

    /// nu with A A* = nu Id for the structurally tight kinds.
    std::optional<double> tight_frame_nu() const
    {
        if (kind_ == CoreKind::random_convolution)
            return static_cast<double>(n1_) / static_cast<double>(m_hat_);
        if (kind_ == CoreKind::identity) return 1.0;
        return std::nullopt;
    }

    Vec apply(const Vec& x) const
    {
        detail::require_dims(x.size() == n1_, "CoreOperator::apply: expected length n1");
        switch (kind_) {
        case CoreKind::identity: return x;
        case CoreKind::random_convolution: return rc_apply(x);
        default: return (*dense_) * x;
        }
    }

    Vec apply_adjoint(const Vec& y) const
    {
        detail::require_dims(y.size() == m_hat_, "CoreOperator::apply_adjoint: expected length m_hat");
        switch (kind_) {
        case CoreKind::identity: return y;
        case CoreKind::random_convolution: return rc_adjoint(y);
        default: return dense_->transpose() * y;
        }
    }

    /// A applied to every column of x (n1 x c) -> m_hat x c.
    Mat apply_columns(const Mat& x) const
    {
        detail::require_dims(x.rows() == n1_, "CoreOperator::apply_columns: expected n1 rows");
        if (dense_) return (*dense_) * x;
        Mat out(m_hat_, x.cols());
        for (Index c = 0; c < x.cols(); ++c) out.col(c) = apply(x.col(c));
        return out;
    }

    Mat adjoint_columns(const Mat& y) const
    {
        detail::require_dims(y.rows() == m_hat_, "CoreOperator::adjoint_columns: expected m_hat rows");
        if (dense_) return dense_->transpose() * y;
        Mat out(n1_, y.cols());
        for (Index c = 0; c < y.cols(); ++c) out.col(c) = apply_adjoint(y.col(c));
        return out;
    }

    /// Explicit m_hat x n1 matrix; built column by column for matrix-free kinds.
    Mat materialize() const
    {
        if (dense_) return *dense_;
        return apply_columns(Mat::Identity(n1_, n1_));
    }

    LinearMap as_map() const
    {
        CoreOperator self = *this;
        return LinearMap(
            n1_, m_hat_, [self](const Vec& x) { return self.apply(x); },
            [self](const Vec& y) { return self.apply_adjoint(y); }, tight_frame_nu(),
            kind_ == CoreKind::identity);
    }

private:
    struct RandomConvolution {
        double scale = 1.0;
        std::vector<std::complex<double>> phases;
        std::vector<Index> rows;
    };

    static Eigen::FFT<double>& fft()
    {
        thread_local Eigen::FFT<double> engine;
        return engine;
    }

    Vec circulant(const Vec& x, bool conjugate) const
    {
        const auto n = static_cast<std::size_t>(n1_);
        std::vector<std::complex<double>> time(n), freq(n);
        for (std::size_t i = 0; i < n; ++i) time[i] = x[static_cast<Index>(i)];
        fft().fwd(freq, time);
        for (std::size_t k = 0; k < n; ++k) freq[k] *= conjugate ? std::conj(rc_->phases[k]) : rc_->phases[k];
        fft().inv(time, freq);
        Vec out(n1_);
        for (std::size_t i = 0; i < n; ++i) out[static_cast<Index>(i)] = time[i].real();
        return out;
    }

    Vec rc_apply(const Vec& x) const
    {
        const Vec u = circulant(x, false);
        Vec y(m_hat_);
        for (Index i = 0; i < m_hat_; ++i) y[i] = rc_->scale * u[rc_->rows[static_cast<std::size_t>(i)]];
        return y;
    }

    Vec rc_adjoint(const Vec& y) const
    {
        Vec u = Vec::Zero(n1_);
        for (Index i = 0; i < m_hat_; ++i) u[rc_->rows[static_cast<std::size_t>(i)]] = rc_->scale * y[i];
        return circulant(u, true);
    }

    CoreKind kind_;
    Index m_hat_;
    Index n1_;
    std::uint64_t seed_;
    std::shared_ptr<const Mat> dense_;
    std::shared_ptr<const RandomConvolution> rc_;
};

inline CoreOperator make_core_operator(CoreKind kind, Index m_hat, Index n1, std::uint64_t seed)
{
    return CoreOperator(kind, m_hat, n1, seed);
}

/// Applies A A* to the m_hat canonical probes and returns nu = n1/m_hat when
/// the Gram matrix is within `tol` of nu Id (max abs entry deviation).
inline double verify_tight_frame(const CoreOperator& core, double tol = 1e-8)
{
    const double nu = static_cast<double>(core.n1()) / static_cast<double>(core.m_hat());
    double worst = 0.0;
    Vec e = Vec::Zero(core.m_hat());
    for (Index j = 0; j < core.m_hat(); ++j) {
        e.setZero();
        e[j] = 1.0;
        Vec g = core.apply(core.apply_adjoint(e));
        g[j] -= nu;
        worst = std::max(worst, g.cwiseAbs().maxCoeff());
    }
    if (!(worst < tol))
        throw NotTightFrame("verify_tight_frame: max deviation " + std::to_string(worst) + " from nu*Id");
    return nu;
}

/// Describes how a measurement vector was produced; enough to rebuild the operator.
struct OperatorDescriptor {
    Scheme scheme = Scheme::uniform;
    CoreKind kind = CoreKind::random_convolution;
    std::uint64_t seed = 0;
    Index rows = 0; ///< image height, when known
    Index cols = 0; ///< image width, when known
    Index n1 = 0;
    Index n2 = 0;
    Index rho = 0;
    Index m_hat = 0; ///< core rows (block schemes); m for dense
    Index m = 0;
    /// "none", "acquisition" (H-dagger kron A applied at sensing time) or
    /// "post-processing" (uniform acquisition followed by Y (H-dagger)^T).
    std::string decorrelation = "none";
};

/// The three acquisition schemes as matrix-free maps.
///
///   dense:          y = A X_vec, A an m x n1*n2 core (materialized for gaussian/bernoulli)
///   uniform:        Y = A~ X, i.e. (Id_n2 kron A~) X_vec
///   decorrelating:  (H-dagger kron A~) X_vec = vec(A~ X (H-dagger)^T) = (Id_rho kron A~) S_vec
class SamplingOperator {
public:
    static SamplingOperator dense(CoreKind kind, Index m, Index n1, Index n2, std::uint64_t seed)
    {
        detail::require(n1 >= 1 && n2 >= 1, "SamplingOperator::dense: bad dims");
        return SamplingOperator(Scheme::dense, CoreOperator(kind, m, n1 * n2, seed), n1, n2, std::nullopt);
    }

    static SamplingOperator uniform(CoreOperator core, Index n2)
    {
        detail::require(n2 >= 1, "SamplingOperator::uniform: n2 must be >= 1");
        const Index n1 = core.n1();
        return SamplingOperator(Scheme::uniform, std::move(core), n1, n2, std::nullopt);
    }

    static SamplingOperator decorrelating(CoreOperator core, const MixingMatrix& h)
    {
        const Index n1 = core.n1();
        return SamplingOperator(Scheme::decorrelating, std::move(core), n1, h.channels(), h);
    }

    Scheme scheme() const { return scheme_; }
    const CoreOperator& core() const { return core_; }
    Index n1() const { return n1_; }
    Index n2() const { return n2_; }
    const std::optional<MixingMatrix>& mixing() const { return h_; }
    const std::optional<Mat>& mixing_pinv() const { return h_pinv_; }

    Index output_dim() const
    {
        switch (scheme_) {
        case Scheme::dense: return core_.m_hat();
        case Scheme::uniform: return core_.m_hat() * n2_;
        case Scheme::decorrelating: return core_.m_hat() * h_->rho();
        }
        return 0;
    }

    Vec forward_cube(const Mat& x) const
    {
        detail::require_dims(x.rows() == n1_ && x.cols() == n2_, "forward_cube: X must be n1 x n2");
        switch (scheme_) {
        case Scheme::dense: return core_.apply(Eigen::Map<const Vec>(x.data(), x.size()));
        case Scheme::uniform: return flatten(core_.apply_columns(x));
        case Scheme::decorrelating: return flatten(core_.apply_columns(x * h_pinv_->transpose()));
        }
        return {};
    }

    Mat adjoint_cube(const Vec& y) const
    {
        detail::require_dims(y.size() == output_dim(), "adjoint_cube: wrong measurement length");
        switch (scheme_) {
        case Scheme::dense: {
            Vec x = core_.apply_adjoint(y);
            return Eigen::Map<const Mat>(x.data(), n1_, n2_);
        }
        case Scheme::uniform:
            return core_.adjoint_columns(Eigen::Map<const Mat>(y.data(), core_.m_hat(), n2_));
        case Scheme::decorrelating:
            return core_.adjoint_columns(Eigen::Map<const Mat>(y.data(), core_.m_hat(), h_->rho())) * (*h_pinv_);
        }
        return {};
    }

    /// Decorrelating scheme only: (Id_rho kron A~) S_vec, with S given directly.
    Vec forward_sources(const Mat& s) const
    {
        detail::require(scheme_ == Scheme::decorrelating, "forward_sources: scheme is not decorrelating");
        detail::require_dims(s.rows() == n1_ && s.cols() == h_->rho(), "forward_sources: S must be n1 x rho");
        return flatten(core_.apply_columns(s));
    }

    Mat adjoint_sources(const Vec& y) const
    {
        detail::require(scheme_ == Scheme::decorrelating, "adjoint_sources: scheme is not decorrelating");
        detail::require_dims(y.size() == output_dim(), "adjoint_sources: wrong measurement length");
        return core_.adjoint_columns(Eigen::Map<const Mat>(y.data(), core_.m_hat(), h_->rho()));
    }

    /// The map X_vec -> y.
    LinearMap cube_map() const
    {
        SamplingOperator self = *this;
        std::optional<double> nu;
        if (scheme_ != Scheme::decorrelating) nu = core_.tight_frame_nu();
        return LinearMap(
            n1_ * n2_, output_dim(),
            [self](const Vec& x) { return self.forward_cube(Eigen::Map<const Mat>(x.data(), self.n1_, self.n2_)); },
            [self](const Vec& y) { return flatten(self.adjoint_cube(y)); }, nu);
    }

    /// The map S_vec -> y used for source recovery. For the decorrelating
    /// scheme this is Id_rho kron A~ and `h` is ignored; otherwise it is the
    /// cube map composed with Phi = H kron Id_n1.
    LinearMap source_map(const MixingMatrix& h) const
    {
        if (scheme_ == Scheme::decorrelating) {
            SamplingOperator self = *this;
            const Index rho = h_->rho();
            return LinearMap(
                n1_ * rho, output_dim(),
                [self, rho](const Vec& s) {
                    return self.forward_sources(Eigen::Map<const Mat>(s.data(), self.n1_, rho));
                },
                [self](const Vec& y) { return flatten(self.adjoint_sources(y)); }, core_.tight_frame_nu());
        }
        detail::require_dims(h.channels() == n2_, "source_map: H rows != n2");
        return compose(cube_map(), mixing_map(h.data(), n1_));
    }

    OperatorDescriptor descriptor() const
    {
        OperatorDescriptor d;
        d.scheme = scheme_;
        d.kind = core_.kind();
        d.seed = core_.seed();
        d.n1 = n1_;
        d.n2 = n2_;
        d.rho = h_ ? h_->rho() : 0;
        d.m_hat = core_.m_hat();
        d.m = output_dim();
        d.decorrelation = scheme_ == Scheme::decorrelating ? "acquisition" : "none";
        return d;
    }

    static Vec flatten(const Mat& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }

private:
    SamplingOperator(Scheme scheme, CoreOperator core, Index n1, Index n2, std::optional<MixingMatrix> h)
        : scheme_(scheme), core_(std::move(core)), n1_(n1), n2_(n2), h_(std::move(h))
    {
        if (h_) h_pinv_ = pseudo_inverse(h_->data());
    }

    Scheme scheme_;
    CoreOperator core_;
    Index n1_;
    Index n2_;
    std::optional<MixingMatrix> h_;
    std::optional<Mat> h_pinv_;
};

/// y, the noise-norm bound epsilon and provenance.
struct MeasurementSet {
    Vec y;
    double epsilon = 0.0;
    double snr_db = std::numeric_limits<double>::infinity();
    /// sigma_max(H-dagger) * epsilon_acquisition, a bound usable without the noise oracle.
    std::optional<double> epsilon_bound;
    Vec noise; ///< z itself (simulation only)
    OperatorDescriptor descriptor;
};

/// Adds i.i.d. gaussian noise rescaled so 20 log10(||y|| / ||z||) == snr_db.
/// epsilon is set to ||z|| (oracle bound); snr_db = +inf means noiseless.
inline MeasurementSet add_noise(const Vec& y_clean, double snr_db, std::uint64_t seed)
{
    detail::require(!std::isnan(snr_db) && snr_db > 0.0, "add_noise: snr_db must be in (0, inf]");
    MeasurementSet ms;
    ms.snr_db = snr_db;
    if (std::isinf(snr_db)) {
        ms.y = y_clean;
        ms.noise = Vec::Zero(y_clean.size());
        ms.epsilon = 0.0;
        return ms;
    }
    const double signal = y_clean.norm();
    detail::require(signal > 0.0, "add_noise: zero signal has no finite SNR");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec z(y_clean.size());
    for (Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
    z *= signal * std::pow(10.0, -snr_db / 20.0) / z.norm();
    ms.y = y_clean + z;
    ms.epsilon = z.norm();
    ms.noise = std::move(z);
    return ms;
}

struct DecorrelatedMeasurements {
    Mat y_star;         ///< m_hat x rho
    double z_gain = 1.; ///< sigma_max(H-dagger)
};

/// Y* = Y (H-dagger)^T for an m_hat x n2 measurement matrix Y.
inline DecorrelatedMeasurements decorrelate_measurements(const Mat& y, const MixingMatrix& h)
{
    detail::require_dims(y.cols() == h.channels(), "decorrelate_measurements: Y must have n2 columns");
    Eigen::JacobiSVD<Mat> svd(h.data());
    const auto& s = svd.singularValues();
    if (!(s(s.size() - 1) > kRankTol * s(0))) throw RankDeficient("decorrelate_measurements: rank-deficient H");
    DecorrelatedMeasurements out;
    out.y_star = y * pseudo_inverse(h.data()).transpose();
    out.z_gain = 1.0 / s(s.size() - 1);
    return out;
}

/// Post-processes a uniform-scheme MeasurementSet into decorrelated source
/// measurements. epsilon becomes the oracle ||Z (H-dagger)^T||_F and
/// epsilon_bound the deployable sigma_max(H-dagger) * epsilon.
inline MeasurementSet decorrelate(const MeasurementSet& uniform, const MixingMatrix& h, Index m_hat)
{
    detail::require_dims(uniform.y.size() == m_hat * h.channels(), "decorrelate: y length != m_hat * n2");
    Eigen::Map<const Mat> y(uniform.y.data(), m_hat, h.channels());
    auto dm = decorrelate_measurements(y, h);
    MeasurementSet out;
    out.y = SamplingOperator::flatten(dm.y_star);
    out.snr_db = uniform.snr_db;
    if (uniform.noise.size() == uniform.y.size() && uniform.epsilon > 0.0) {
        Eigen::Map<const Mat> z(uniform.noise.data(), m_hat, h.channels());
        Mat z_star = z * pseudo_inverse(h.data()).transpose();
        out.noise = SamplingOperator::flatten(z_star);
        out.epsilon = z_star.norm();
    } else {
        out.noise = Vec::Zero(out.y.size());
        out.epsilon = 0.0;
    }
    out.epsilon_bound = dm.z_gain * uniform.epsilon;
    out.descriptor = uniform.descriptor;
    out.descriptor.scheme = Scheme::decorrelating;
    out.descriptor.rho = h.rho();
    out.descriptor.m = out.y.size();
    out.descriptor.decorrelation = "post-processing";
    return out;
}

} // namespace csskit
