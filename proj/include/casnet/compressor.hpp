// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Per-frame truncated-SVD compression of node features. A node sends, for
// every frame, the D x a block U_a*S_a and the a x F' block V_a^T; the
// fusion center multiplies them back together.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "casnet/error.hpp"
#include "casnet/tensor.hpp"

namespace casnet {

struct SvdResult {
  Grid<double> u;              // m x r, orthonormal columns
  std::vector<double> sigma;   // r, non-increasing
  Grid<double> v;              // n x r, orthonormal columns
};

namespace detail {

/// One-sided Jacobi on the columns of `w` (rows x cols, rows >= cols).
/// Returns the accumulated rotation (cols x cols); on exit the columns of
/// `w` are mutually orthogonal.
inline Grid<double> jacobi_orthogonalize(Grid<double>& w, double tol) {
  const std::size_t rows = w.rows(), cols = w.cols();
  Grid<double> q(cols, cols, 0.0);
  for (std::size_t i = 0; i < cols; ++i) q(i, i) = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < cols; ++p) {
      for (std::size_t k = p + 1; k < cols; ++k) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
          const double a = w(i, p), b = w(i, k);
          alpha += a * a;
          beta += b * b;
          gamma += a * b;
        }
        if (std::abs(gamma) <= tol * std::sqrt(alpha * beta) || gamma == 0.0) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t), s = c * t;
        for (std::size_t i = 0; i < rows; ++i) {
          const double a = w(i, p), b = w(i, k);
          w(i, p) = c * a - s * b;
          w(i, k) = s * a + c * b;
        }
        for (std::size_t i = 0; i < cols; ++i) {
          const double a = q(i, p), b = q(i, k);
          q(i, p) = c * a - s * b;
          q(i, k) = s * a + c * b;
        }
      }
    }
    if (!rotated) break;
  }
  return q;
}

/// Replaces columns of `basis` flagged in `missing` by unit vectors
/// orthogonal to all other columns (Gram-Schmidt against the standard basis).
inline void complete_orthonormal(Grid<double>& basis, const std::vector<bool>& missing) {
  const std::size_t n = basis.rows(), r = basis.cols();
  for (std::size_t j = 0; j < r; ++j) {
    if (!missing[j]) continue;
    for (std::size_t e = 0; e < n; ++e) {
      std::vector<double> cand(n, 0.0);
      cand[e] = 1.0;
      for (std::size_t k = 0; k < r; ++k) {
        if (k == j || (missing[k] && k > j)) continue;
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += cand[i] * basis(i, k);
        for (std::size_t i = 0; i < n; ++i) cand[i] -= dot * basis(i, k);
      }
      double norm = 0.0;
      for (double v : cand) norm += v * v;
      norm = std::sqrt(norm);
      if (norm > 1e-6) {
        for (std::size_t i = 0; i < n; ++i) basis(i, j) = cand[i] / norm;
        break;
      }
    }
  }
}

}  // namespace detail

/// Thin SVD A = U diag(sigma) V^T via one-sided Jacobi, r = min(m, n).
/// Singular values are sorted in decreasing order and every left vector is
/// sign-normalized so that its largest-magnitude entry is positive.
inline SvdResult jacobi_svd(const Grid<double>& a, double tol = 1e-13) {
  const std::size_t m = a.rows(), n = a.cols();
  const bool transposed = m < n;
  // Work on the tall orientation: w = A (m >= n) or A^T.
  const std::size_t rows = transposed ? n : m, cols = transposed ? m : n;
  Grid<double> w(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) w(i, j) = transposed ? a(j, i) : a(i, j);
  Grid<double> q = detail::jacobi_orthogonalize(w, tol);

  // w = X q with orthogonal columns, so X = (w/sigma) diag(sigma) q^T.
  std::vector<double> sigma(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) s += w(i, j) * w(i, j);
    sigma[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(cols);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  const double smax = cols ? sigma[order[0]] : 0.0;
  const double zero_tol = std::max(smax, 1.0) * 1e-14 * static_cast<double>(rows);
  Grid<double> tall(rows, cols), narrow(cols, cols);
  std::vector<double> s_sorted(cols);
  std::vector<bool> missing(cols, false);
  for (std::size_t j = 0; j < cols; ++j) {
    const std::size_t src = order[j];
    s_sorted[j] = sigma[src];
    for (std::size_t i = 0; i < cols; ++i) narrow(i, j) = q(i, src);
    if (sigma[src] > zero_tol) {
      for (std::size_t i = 0; i < rows; ++i) tall(i, j) = w(i, src) / sigma[src];
    } else {
      s_sorted[j] = 0.0;
      missing[j] = true;
    }
  }
  detail::complete_orthonormal(tall, missing);

  SvdResult r;
  r.sigma = std::move(s_sorted);
  r.u = transposed ? std::move(narrow) : std::move(tall);
  r.v = transposed ? std::move(tall) : std::move(narrow);

  for (std::size_t j = 0; j < cols; ++j) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < r.u.rows(); ++i)
      if (std::abs(r.u(i, j)) > std::abs(r.u(arg, j))) arg = i;
    if (r.u(arg, j) < 0.0) {
      for (std::size_t i = 0; i < r.u.rows(); ++i) r.u(i, j) = -r.u(i, j);
      for (std::size_t i = 0; i < r.v.rows(); ++i) r.v(i, j) = -r.v(i, j);
    }
  }
  return r;
}

/// Rank-a factors of one D x F' frame, as put on the wire.
struct SvdFactors {
  Grid<float> left;   // D x a, U_a * Sigma_a
  Grid<float> right;  // a x F', V_a^T
  std::size_t rank = 0;

  std::size_t rows() const { return left.rows(); }
  std::size_t cols() const { return right.cols(); }
  std::size_t payload_floats() const { return left.data().size() + right.data().size(); }

  friend bool operator==(const SvdFactors&, const SvdFactors&) = default;
};

/// Best rank-a approximation of a D x F' frame (row-major span).
inline SvdFactors compress_frame(std::span<const float> frame, std::size_t rows, std::size_t cols, std::size_t rank) {
  CASNET_CHECK(frame.size() == rows * cols, ShapeError, "frame size does not match D x F'");
  CASNET_CHECK(rank >= 1 && rank <= std::min(rows, cols), Error,
               "rank " + std::to_string(rank) + " out of range [1, " + std::to_string(std::min(rows, cols)) + "]");
  Grid<double> a(rows, cols);
  for (std::size_t i = 0; i < frame.size(); ++i) {
    CASNET_CHECK(std::isfinite(frame[i]), Error, "non-finite value in feature frame");
    a.data()[i] = frame[i];
  }
  const SvdResult svd = jacobi_svd(a);
  SvdFactors f{Grid<float>(rows, rank), Grid<float>(rank, cols), rank};
  for (std::size_t k = 0; k < rank; ++k) {
    for (std::size_t i = 0; i < rows; ++i) f.left(i, k) = static_cast<float>(svd.u(i, k) * svd.sigma[k]);
    for (std::size_t j = 0; j < cols; ++j) f.right(k, j) = static_cast<float>(svd.v(j, k));
  }
  return f;
}

/// left * right, accumulated in double.
inline std::vector<float> decompress_frame(const SvdFactors& f) {
  CASNET_CHECK(f.left.cols() == f.rank && f.right.rows() == f.rank, ShapeError,
               "SVD factor shapes disagree with their rank");
  const std::size_t rows = f.left.rows(), cols = f.right.cols();
  std::vector<float> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < f.rank; ++k) acc += static_cast<double>(f.left(i, k)) * f.right(k, j);
      out[i * cols + j] = static_cast<float>(acc);
    }
  return out;
}

/// One factor set per frame of a D x T x F' feature tensor.
inline std::vector<SvdFactors> compress_sequence(const Tensor3& h, std::size_t rank) {
  std::vector<SvdFactors> out;
  out.reserve(h.frames());
  for (std::size_t t = 0; t < h.frames(); ++t) out.push_back(compress_frame(h.frame(t), h.channels(), h.bins(), rank));
  return out;
}

inline Tensor3 decompress_sequence(const std::vector<SvdFactors>& frames, std::size_t rows, std::size_t cols) {
  Tensor3 h(rows, frames.size(), cols);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    CASNET_CHECK(frames[t].rows() == rows && frames[t].cols() == cols, ShapeError, "factor shape mismatch in sequence");
    const auto x = decompress_frame(frames[t]);
    std::copy(x.begin(), x.end(), h.frame(t).begin());
  }
  return h;
}

}  // namespace casnet
