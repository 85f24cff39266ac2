#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fivegang/codec/cs.hpp"
#include "oracles.hpp"

using namespace fivegang;

namespace {

std::vector<std::vector<double>> dense(const cs::MeasurementMatrix& mat)
{
    std::vector<std::vector<double>> a(mat.m(), std::vector<double>(mat.n()));
    for (std::size_t i = 0; i < mat.m(); ++i)
        for (std::size_t j = 0; j < mat.n(); ++j)
            a[i][j] = mat.entries()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return a;
}

// Naive orthonormal inverse DCT-II (a DCT-III) written from the definition.
std::vector<double> idct_oracle(const std::vector<double>& coeffs)
{
    const std::size_t n = coeffs.size();
    std::vector<double> x(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) {
            const double s = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
            x[i] += s * coeffs[k] * std::cos(std::numbers::pi * (2.0 * i + 1.0) * k / (2.0 * n));
        }
    return x;
}

std::vector<double> planted(std::size_t n, std::size_t k, sim::RngStream& rng, std::vector<std::size_t>* support)
{
    std::vector<double> coeffs(n, 0.0);
    std::size_t placed = 0;
    while (placed < k) {
        const auto j = static_cast<std::size_t>(rng.below(n));
        if (coeffs[j] != 0.0)
            continue;
        // Magnitudes bounded away from zero.
        coeffs[j] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(1.0, 3.0);
        if (support)
            support->push_back(j);
        ++placed;
    }
    return idct_oracle(coeffs);
}

} // namespace

TEST(CsBasis, Dct2IsOrthonormal)
{
    for (std::size_t n : {1u, 7u, 64u, 128u}) {
        cs::SparseBasis b(n, cs::BasisKind::dct2);
        sim::RngStream rng(n);
        Eigen::VectorXd x(static_cast<Eigen::Index>(n));
        for (Eigen::Index i = 0; i < x.size(); ++i)
            x(i) = rng.normal();
        const Eigen::VectorXd back = b.inverse(b.forward(x));
        EXPECT_LE((back - x).norm() / x.norm(), 1e-10);
        // Parseval.
        EXPECT_NEAR(b.forward(x).norm(), x.norm(), 1e-10 * x.norm());
    }
}

TEST(CsBasis, InverseMatchesDefinition)
{
    sim::RngStream rng(4);
    std::vector<double> c(32);
    for (auto& v : c)
        v = rng.normal();
    cs::SparseBasis b(32, cs::BasisKind::dct2);
    const Eigen::VectorXd x = b.inverse(Eigen::Map<Eigen::VectorXd>(c.data(), 32));
    const auto ref = idct_oracle(c);
    for (std::size_t i = 0; i < 32; ++i)
        EXPECT_NEAR(x(static_cast<Eigen::Index>(i)), ref[i], 1e-12);
}

TEST(CsMatrix, EntriesAreScaledSignsAndReproducible)
{
    auto a = cs::MeasurementMatrix::bernoulli(16, 64, 99);
    auto b = cs::MeasurementMatrix::bernoulli(16, 64, 99);
    auto c = cs::MeasurementMatrix::bernoulli(16, 64, 100);
    EXPECT_EQ(a.entries(), b.entries());
    EXPECT_NE(a.entries(), c.entries());
    for (Eigen::Index i = 0; i < a.entries().size(); ++i)
        EXPECT_DOUBLE_EQ(std::abs(a.entries()(i)), 0.25);
    EXPECT_THROW(cs::MeasurementMatrix::bernoulli(65, 64, 1), DimensionMismatch);
}

TEST(CsEncode, IdentityOverrideIsFullSampling)
{
    std::vector<double> x{1.5, -2.0, 0.25, 8.0};
    auto cw = cs::encode(x, cs::MeasurementMatrix::identity(4));
    EXPECT_EQ(cw.measurements, x);
}

TEST(CsEncode, ZeroSignal)
{
    std::vector<double> x(64, 0.0);
    auto cw = cs::encode(x, cs::MeasurementMatrix::bernoulli(16, 64, 1));
    for (double v : cw.measurements)
        EXPECT_EQ(v, 0.0);
}

TEST(CsEncode, MatchesNaiveMultiply)
{
    auto mat = cs::MeasurementMatrix::bernoulli(24, 64, 5);
    sim::RngStream rng(6);
    std::vector<double> x(64);
    for (auto& v : x)
        v = rng.normal(0.0, 10.0);
    auto cw = cs::encode(x, mat);
    auto ref = oracle::matvec(dense(mat), x);
    EXPECT_LE(oracle::rel_l2(cw.measurements, ref), 1e-12);
}

TEST(CsEncode, DimensionMismatch)
{
    std::vector<double> x(10, 1.0);
    EXPECT_THROW(cs::encode(x, cs::MeasurementMatrix::bernoulli(4, 12, 1)), DimensionMismatch);
}

TEST(CsProperty, EncoderIsLinear)
{
    auto mat = cs::MeasurementMatrix::bernoulli(20, 50, 8);
    sim::RngStream rng(12);
    for (int t = 0; t < 20; ++t) {
        std::vector<double> x(50), y(50), z(50);
        const double a = rng.normal(), b = rng.normal();
        for (std::size_t i = 0; i < 50; ++i) {
            x[i] = rng.normal();
            y[i] = rng.normal();
            z[i] = a * x[i] + b * y[i];
        }
        auto ex = cs::encode(x, mat).measurements;
        auto ey = cs::encode(y, mat).measurements;
        auto ez = cs::encode(z, mat).measurements;
        std::vector<double> combo(ex.size());
        for (std::size_t i = 0; i < ex.size(); ++i)
            combo[i] = a * ex[i] + b * ey[i];
        EXPECT_LE(oracle::rel_l2(ez, combo), 1e-10);
    }
}

TEST(CsDecode, OneSparseDctExactSupport)
{
    std::vector<double> c(64, 0.0);
    c[9] = 3.0;
    const auto x = idct_oracle(c);
    auto cw = cs::encode(x, cs::MeasurementMatrix::bernoulli(16, 64, 42));
    auto rec = cs::decode(cw, 1, 1e-9);
    ASSERT_EQ(rec.support.size(), 1u);
    EXPECT_EQ(rec.support[0], 9u);
    EXPECT_LE(oracle::rel_l2(rec.signal, x), 1e-6);
}

TEST(CsDecode, ZeroMeasurementsNoIterations)
{
    cs::CsCodeword cw = cs::encode(std::vector<double>(32, 0.0), cs::MeasurementMatrix::bernoulli(8, 32, 3));
    auto rec = cs::decode(cw, 4, 0.0);
    EXPECT_EQ(rec.iterations, 0u);
    for (double v : rec.signal)
        EXPECT_EQ(v, 0.0);
}

TEST(CsDecode, PlantedFiveSparseRecovery)
{
    const std::size_t n = 128, k = 5;
    const auto m = static_cast<std::size_t>(std::ceil(4.0 * k * std::log(double(n) / k)));
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        sim::RngStream rng(1000 + seed);
        std::vector<std::size_t> support;
        auto x = planted(n, k, rng, &support);
        auto cw = cs::encode(x, cs::MeasurementMatrix::bernoulli(m, n, seed));
        auto rec = cs::decode(cw, k, 1e-10);
        if (oracle::rel_l2(rec.signal, x) <= 1e-6)
            ++ok;
    }
    EXPECT_GE(ok, 99);
}

TEST(CsDecode, IdentityBasisSparseSignal)
{
    std::vector<double> x(40, 0.0);
    x[3] = 1.0;
    x[17] = -2.0;
    x[30] = 0.5;
    auto cw = cs::encode(x, cs::MeasurementMatrix::bernoulli(30, 40, 17), cs::BasisKind::identity);
    auto rec = cs::decode(cw, 3, 1e-10);
    EXPECT_LE(oracle::rel_l2(rec.signal, x), 1e-9);
}

TEST(CsDecode, RejectsSparsityOutOfRange)
{
    auto cw = cs::encode(std::vector<double>(16, 1.0), cs::MeasurementMatrix::bernoulli(4, 16, 3));
    EXPECT_THROW(cs::decode(cw, 0, 1e-9), DimensionMismatch);
    EXPECT_THROW(cs::decode(cw, 5, 1e-9), DimensionMismatch);
}

TEST(CsDecode, IllConditionedSupportIsReported)
{
    Eigen::MatrixXd sub(3, 2);
    sub << 1.0, 1.0, 0.0, 1e-14, 0.0, 0.0;
    Eigen::VectorXd y(3);
    y << 1.0, 0.0, 0.0;
    EXPECT_THROW(cs::least_squares_on_support(sub, y), IllConditionedSupport);
}

TEST(CsWire, CodewordLayoutRoundTrip)
{
    auto cw = cs::encode(std::vector<double>{1.0, 2.0, 3.0, 4.0}, cs::MeasurementMatrix::bernoulli(2, 4, 0xABCDu));
    auto wire = cw.serialize();
    ASSERT_EQ(wire.size(), 2u + 2u + 8u + 1u + 2u * 8u);
    EXPECT_EQ(wire[0], 0);
    EXPECT_EQ(wire[1], 2);
    EXPECT_EQ(wire[12], 1); // dct2
    auto back = cs::CsCodeword::parse(wire);
    EXPECT_EQ(back.measurements, cw.measurements);
    EXPECT_EQ(back.seed, 0xABCDu);
    EXPECT_EQ(back.matrix().entries(), cw.matrix().entries());
}
