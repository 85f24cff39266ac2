#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fivegang/codec/bytes.hpp"
#include "fivegang/errors.hpp"
#include "fivegang/sim/rng.hpp"

namespace fivegang::cs {

enum class BasisKind : std::uint8_t
{
    identity = 0,
    dct2 = 1,
};

inline const char* to_string(BasisKind k) { return k == BasisKind::identity ? "identity" : "dct2"; }

/// Orthonormal n x n transform. `forward` maps a signal to coefficients,
/// `inverse` maps coefficients back.
class SparseBasis
{
public:
    SparseBasis(std::size_t n, BasisKind kind) : n_(n), kind_(kind)
    {
        if (kind_ == BasisKind::dct2) {
            // Row k of the orthonormal DCT-II matrix.
            forward_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
            const double dn = static_cast<double>(n);
            for (std::size_t k = 0; k < n; ++k) {
                const double s = k == 0 ? std::sqrt(1.0 / dn) : std::sqrt(2.0 / dn);
                for (std::size_t i = 0; i < n; ++i)
                    forward_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
                        s * std::cos(std::numbers::pi * (2.0 * static_cast<double>(i) + 1.0) *
                                     static_cast<double>(k) / (2.0 * dn));
            }
        }
    }

    std::size_t n() const { return n_; }
    BasisKind kind() const { return kind_; }

    Eigen::VectorXd forward(const Eigen::VectorXd& x) const
    {
        return kind_ == BasisKind::identity ? x : Eigen::VectorXd(forward_ * x);
    }

    Eigen::VectorXd inverse(const Eigen::VectorXd& s) const
    {
        return kind_ == BasisKind::identity ? s : Eigen::VectorXd(forward_.transpose() * s);
    }

    /// Matrix whose columns are the basis vectors expressed in signal space.
    Eigen::MatrixXd synthesis() const
    {
        if (kind_ == BasisKind::identity)
            return Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
        return forward_.transpose();
    }

private:
    std::size_t n_;
    BasisKind kind_;
    Eigen::MatrixXd forward_;
};

/// m x n measurement matrix with entries +-1/sqrt(m), regenerated
/// deterministically from (m, n, seed). The identity override exists for
/// pass-through configurations.
class MeasurementMatrix
{
public:
    static MeasurementMatrix bernoulli(std::size_t m, std::size_t n, std::uint64_t seed)
    {
        if (m == 0 || m > n)
            throw DimensionMismatch("measurement matrix needs 1 <= m <= n, got m=" + std::to_string(m) +
                                    " n=" + std::to_string(n));
        MeasurementMatrix mat(m, n, seed, false);
        const double v = 1.0 / std::sqrt(static_cast<double>(m));
        sim::RngStream rng(seed);
        std::uint64_t bits = 0;
        int left = 0;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (left == 0) {
                    bits = rng();
                    left = 64;
                }
                mat.entries_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (bits & 1u) ? v : -v;
                bits >>= 1;
                --left;
            }
        return mat;
    }

    static MeasurementMatrix identity(std::size_t n)
    {
        MeasurementMatrix mat(n, n, 0, true);
        mat.entries_.setIdentity();
        return mat;
    }

    std::size_t m() const { return m_; }
    std::size_t n() const { return n_; }
    std::uint64_t seed() const { return seed_; }
    bool is_identity() const { return identity_; }
    const Eigen::MatrixXd& entries() const { return entries_; }

private:
    MeasurementMatrix(std::size_t m, std::size_t n, std::uint64_t seed, bool identity)
        : m_(m), n_(n), seed_(seed), identity_(identity),
          entries_(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n))
    {
    }

    std::size_t m_, n_;
    std::uint64_t seed_;
    bool identity_;
    Eigen::MatrixXd entries_;
};

struct CsCodeword
{
    std::vector<double> measurements;
    std::size_t m = 0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    bool identity_matrix = false;
    BasisKind basis = BasisKind::dct2;
    std::size_t true_n = 0;

    MeasurementMatrix matrix() const
    {
        return identity_matrix ? MeasurementMatrix::identity(n) : MeasurementMatrix::bernoulli(m, n, seed);
    }

    /// m u16 BE, n u16 BE, seed u64 BE, basis u8 (bit 7 flags the identity
    /// matrix), then m little-endian f64 measurements.
    codec::Bytes serialize() const
    {
        codec::Bytes out;
        codec::ByteWriter w(out);
        w.u16(static_cast<std::uint16_t>(m));
        w.u16(static_cast<std::uint16_t>(n));
        w.u64(seed);
        w.u8(static_cast<std::uint8_t>(static_cast<std::uint8_t>(basis) | (identity_matrix ? 0x80u : 0u)));
        for (double v : measurements)
            w.f64(v);
        return out;
    }

    static CsCodeword parse(std::span<const std::uint8_t> wire)
    {
        codec::ByteReader r(wire);
        CsCodeword cw;
        cw.m = r.u16();
        cw.n = r.u16();
        cw.true_n = cw.n;
        cw.seed = r.u64();
        const std::uint8_t b = r.u8();
        cw.identity_matrix = (b & 0x80u) != 0;
        const std::uint8_t kind = b & 0x7Fu;
        if (kind > 1)
            throw MalformedPacket("unknown basis kind " + std::to_string(kind));
        cw.basis = static_cast<BasisKind>(kind);
        cw.measurements.resize(cw.m);
        for (auto& v : cw.measurements)
            v = r.f64();
        if (r.remaining() != 0)
            throw MalformedPacket("trailing bytes after CS codeword");
        return cw;
    }
};

inline CsCodeword encode(std::span<const double> signal, const MeasurementMatrix& mat,
                         BasisKind basis = BasisKind::dct2)
{
    if (signal.size() != mat.n())
        throw DimensionMismatch("signal length " + std::to_string(signal.size()) + " != n " +
                                std::to_string(mat.n()));
    const Eigen::Map<const Eigen::VectorXd> x(signal.data(), static_cast<Eigen::Index>(signal.size()));
    const Eigen::VectorXd y = mat.entries() * x;
    CsCodeword cw;
    cw.measurements.assign(y.data(), y.data() + y.size());
    cw.m = mat.m();
    cw.n = mat.n();
    cw.seed = mat.seed();
    cw.identity_matrix = mat.is_identity();
    cw.basis = basis;
    cw.true_n = mat.n();
    return cw;
}

struct Recovery
{
    std::vector<double> signal;
    std::vector<std::size_t> support; // basis indices in selection order
    std::size_t iterations = 0;
    double residual_norm = 0.0;
};

/// Ceiling on the condition number of the selected sub-dictionary.
inline constexpr double kMaxCondition = 1e12;

/// Least-squares fit of `y` on the columns of `sub`. Throws when the columns
/// are numerically dependent.
inline Eigen::VectorXd least_squares_on_support(const Eigen::MatrixXd& sub, const Eigen::VectorXd& y)
{
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sub, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    if (sub.cols() > sub.rows() || smin <= 0.0 || sv(0) / smin > kMaxCondition)
        throw IllConditionedSupport("support of size " + std::to_string(sub.cols()) +
                                    " has condition estimate above 1e12");
    return svd.solve(y);
}

/// Orthogonal matching pursuit over the dictionary (measurement matrix x
/// synthesis basis). Stops once the residual norm is within `residual_tol`
/// or `sparsity_k` atoms are selected.
inline Recovery decode(const CsCodeword& cw, std::size_t sparsity_k, double residual_tol)
{
    if (sparsity_k < 1 || sparsity_k > cw.m)
        throw DimensionMismatch("sparsity " + std::to_string(sparsity_k) + " outside [1, m=" +
                                std::to_string(cw.m) + "]");
    if (cw.measurements.size() != cw.m)
        throw DimensionMismatch("codeword carries " + std::to_string(cw.measurements.size()) +
                                " measurements, header says " + std::to_string(cw.m));

    const SparseBasis basis(cw.n, cw.basis);
    const Eigen::MatrixXd dict = cw.matrix().entries() * basis.synthesis();
    const Eigen::VectorXd norms = dict.colwise().norm().transpose();
    const Eigen::Map<const Eigen::VectorXd> y(cw.measurements.data(), static_cast<Eigen::Index>(cw.m));

    Recovery rec;
    Eigen::VectorXd residual = y;
    Eigen::VectorXd coeffs;
    std::vector<bool> chosen(cw.n, false);

    while (rec.support.size() < sparsity_k && residual.norm() > residual_tol) {
        const Eigen::VectorXd corr = dict.transpose() * residual;
        Eigen::Index best = -1;
        double best_score = 0.0;
        for (Eigen::Index j = 0; j < corr.size(); ++j) {
            if (chosen[static_cast<std::size_t>(j)] || norms(j) == 0.0)
                continue;
            const double score = std::abs(corr(j)) / norms(j);
            if (score > best_score) {
                best_score = score;
                best = j;
            }
        }
        if (best < 0 || best_score <= 1e-15 * residual.norm())
            break;
        chosen[static_cast<std::size_t>(best)] = true;
        rec.support.push_back(static_cast<std::size_t>(best));
        ++rec.iterations;

        Eigen::MatrixXd sub(dict.rows(), static_cast<Eigen::Index>(rec.support.size()));
        for (std::size_t c = 0; c < rec.support.size(); ++c)
            sub.col(static_cast<Eigen::Index>(c)) = dict.col(static_cast<Eigen::Index>(rec.support[c]));
        coeffs = least_squares_on_support(sub, y);
        residual = y - sub * coeffs;
    }

    Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cw.n));
    for (std::size_t c = 0; c < rec.support.size(); ++c)
        s(static_cast<Eigen::Index>(rec.support[c])) = coeffs(static_cast<Eigen::Index>(c));
    const Eigen::VectorXd x = basis.inverse(s);
    rec.signal.assign(x.data(), x.data() + x.size());
    rec.signal.resize(cw.true_n);
    rec.residual_norm = residual.norm();
    return rec;
}

} // namespace fivegang::cs
