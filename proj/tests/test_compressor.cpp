// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "casnet/compressor.hpp"
#include "test_util.hpp"

using namespace casnet;

namespace {

constexpr std::size_t kD = 16, kF = 32;

std::vector<float> random_frame(std::uint64_t seed, std::size_t rows = kD, std::size_t cols = kF) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> x(rows * cols);
  for (auto& v : x) v = n(rng);
  return x;
}

Eigen::MatrixXd to_eigen(const std::vector<float>& x, std::size_t rows, std::size_t cols) {
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = x[i * cols + j];
  return m;
}

double frob_err(const std::vector<float>& a, const std::vector<float>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  return std::sqrt(s);
}

double frob(const std::vector<float>& a) {
  double s = 0.0;
  for (float v : a) s += double(v) * v;
  return std::sqrt(s);
}

}  // namespace

TEST(JacobiSvd, ReconstructsAndMatchesEigen) {
  for (auto [m, n] : {std::pair{16, 32}, std::pair{32, 16}, std::pair{7, 7}, std::pair{1, 5}}) {
    const auto x = random_frame(m * 100 + n, m, n);
    Grid<double> a(m, n);
    for (std::size_t i = 0; i < x.size(); ++i) a.data()[i] = x[i];
    const auto r = jacobi_svd(a);
    const Eigen::VectorXd ref = Eigen::BDCSVD<Eigen::MatrixXd>(to_eigen(x, m, n)).singularValues();
    ASSERT_EQ(r.sigma.size(), static_cast<std::size_t>(ref.size()));
    for (std::size_t k = 0; k < r.sigma.size(); ++k) EXPECT_NEAR(r.sigma[k], ref(k), 1e-10 * ref(0));
    for (std::size_t i = 0; i < std::size_t(m); ++i)
      for (std::size_t j = 0; j < std::size_t(n); ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < r.sigma.size(); ++k) acc += r.u(i, k) * r.sigma[k] * r.v(j, k);
        EXPECT_NEAR(acc, a(i, j), 1e-10);
      }
  }
}

TEST(JacobiSvd, OrthonormalFactorsAndDescendingValues) {
  const auto x = random_frame(3);
  Grid<double> a(kD, kF);
  for (std::size_t i = 0; i < x.size(); ++i) a.data()[i] = x[i];
  const auto r = jacobi_svd(a);
  for (std::size_t k = 1; k < r.sigma.size(); ++k) EXPECT_GE(r.sigma[k - 1], r.sigma[k]);
  for (std::size_t p = 0; p < kD; ++p)
    for (std::size_t q = 0; q < kD; ++q) {
      double uu = 0.0, vv = 0.0;
      for (std::size_t i = 0; i < kD; ++i) uu += r.u(i, p) * r.u(i, q);
      for (std::size_t j = 0; j < kF; ++j) vv += r.v(j, p) * r.v(j, q);
      EXPECT_NEAR(uu, p == q ? 1.0 : 0.0, 1e-12);
      EXPECT_NEAR(vv, p == q ? 1.0 : 0.0, 1e-12);
    }
}

TEST(JacobiSvd, RankDeficientInputKeepsOrthonormalBasis) {
  Grid<double> a(kD, kF, 0.0);
  for (std::size_t i = 0; i < kD; ++i)
    for (std::size_t j = 0; j < kF; ++j) a(i, j) = double(i + 1) * std::sin(0.3 * double(j));
  const auto r = jacobi_svd(a);
  for (std::size_t k = 1; k < r.sigma.size(); ++k) EXPECT_NEAR(r.sigma[k], 0.0, 1e-9);
  for (std::size_t p = 0; p < kD; ++p) {
    double uu = 0.0;
    for (std::size_t i = 0; i < kD; ++i) uu += r.u(i, p) * r.u(i, p);
    EXPECT_NEAR(uu, 1.0, 1e-12);
  }
}

TEST(Compressor, FullRankIsLossless) {
  const auto x = random_frame(11);
  const auto f = compress_frame(x, kD, kF, kD);
  EXPECT_LT(frob_err(decompress_frame(f), x), 1e-5 * frob(x));
}

TEST(Compressor, RankOneInputIsExactAtRankOne) {
  std::vector<float> x(kD * kF);
  for (std::size_t i = 0; i < kD; ++i)
    for (std::size_t j = 0; j < kF; ++j) x[i * kF + j] = float(i + 1) * float(j % 5 + 1) * 0.1f;
  const auto f = compress_frame(x, kD, kF, 1);
  EXPECT_LT(frob_err(decompress_frame(f), x), 1e-6 * frob(x));
}

TEST(Compressor, EckartYoungErrorMatchesTailSingularValues) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto x = random_frame(1000 + seed);
    const Eigen::VectorXd s = Eigen::BDCSVD<Eigen::MatrixXd>(to_eigen(x, kD, kF)).singularValues();
    for (std::size_t a : {1u, 4u, 8u, 16u}) {
      const double tail = std::sqrt(s.tail(kD - a).squaredNorm());
      const double err = frob_err(decompress_frame(compress_frame(x, kD, kF, a)), x);
      EXPECT_NEAR(err, tail, 1e-6 * frob(x)) << "seed " << seed << " rank " << a;
    }
  }
}

TEST(Compressor, ErrorNonIncreasingInRank) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto x = random_frame(2000 + seed);
    double prev = 1e300;
    for (std::size_t a = 1; a <= kD; ++a) {
      const double err = frob_err(decompress_frame(compress_frame(x, kD, kF, a)), x);
      EXPECT_LE(err, prev + 1e-6 * frob(x));
      prev = err;
    }
  }
}

TEST(Compressor, BeatsRandomSubspaceProjection) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto x = random_frame(3000 + seed);
    const Eigen::MatrixXd a = to_eigen(x, kD, kF);
    for (std::size_t r : {2u, 6u}) {
      Eigen::MatrixXd g(kD, r);
      for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n(rng);
      const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() * Eigen::MatrixXd::Identity(kD, r);
      const double proj_err = (a - q * (q.transpose() * a)).norm();
      const double err = frob_err(decompress_frame(compress_frame(x, kD, kF, r)), x);
      EXPECT_LE(err, proj_err + 1e-6);
    }
  }
}

TEST(Compressor, FactorShapesAndPayload) {
  const auto f = compress_frame(random_frame(4), kD, kF, 4);
  EXPECT_EQ(f.left.rows(), kD);
  EXPECT_EQ(f.left.cols(), 4u);
  EXPECT_EQ(f.right.rows(), 4u);
  EXPECT_EQ(f.right.cols(), kF);
  EXPECT_EQ(f.payload_floats(), 4u * (kD + kF));
}

TEST(Compressor, Deterministic) {
  const auto x = random_frame(9);
  EXPECT_EQ(compress_frame(x, kD, kF, 5), compress_frame(x, kD, kF, 5));
}

TEST(Compressor, ZeroFrame) {
  const std::vector<float> x(kD * kF, 0.0f);
  const auto y = decompress_frame(compress_frame(x, kD, kF, 3));
  for (float v : y) EXPECT_EQ(v, 0.0f);
}

TEST(Compressor, Errors) {
  const auto x = random_frame(1);
  EXPECT_THROW(compress_frame(x, kD, kF, 0), Error);
  EXPECT_THROW(compress_frame(x, kD, kF, kD + 1), Error);
  EXPECT_THROW(compress_frame(std::span<const float>(x).first(10), kD, kF, 2), ShapeError);
  auto bad = x;
  bad[7] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(compress_frame(bad, kD, kF, 2), Error);
}

TEST(Compressor, SequenceRoundTrip) {
  const Tensor3 h = casnet::testing::random_tensor(kD, 6, kF, 21, 1.0f);
  const auto frames = compress_sequence(h, kD);
  ASSERT_EQ(frames.size(), 6u);
  const Tensor3 r = decompress_sequence(frames, kD, kF);
  EXPECT_LT(max_abs_diff(h, r), 1e-5f);
  EXPECT_THROW(decompress_sequence(frames, kD, kF + 1), ShapeError);
}
