// Copyright 2026 The deltattr Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DELTATTR_LINALG_HPP
#define DELTATTR_LINALG_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "deltattr/core.hpp"

namespace deltattr {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_.data() + i * cols_, cols_);
  }
  std::span<double> row(std::size_t i) {
    return std::span<double>(data_.data() + i * cols_, cols_);
  }

  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct LstsqResult {
  Vec solution;
  int rank = 0;
  bool rank_deficient = false;
};

namespace detail {

// In-place Householder QR of the leading min(rows, cols) columns of W.
// Reflectors are stored below the diagonal with implicit unit head; taus
// holds the scalar factors. Classic Golub & Van Loan form.
inline void householder_qr(Matrix& w, std::vector<double>& taus) {
  const std::size_t m = w.rows(), n = w.cols();
  const std::size_t steps = std::min(m, n);
  taus.assign(steps, 0.0);
  for (std::size_t k = 0; k < steps; ++k) {
    double norm2 = 0.0;
    for (std::size_t i = k; i < m; ++i) norm2 += w(i, k) * w(i, k);
    const double norm = std::sqrt(norm2);
    if (norm == 0.0) continue;  // column already zero
    const double alpha = w(k, k) >= 0.0 ? -norm : norm;
    const double v0 = w(k, k) - alpha;
    taus[k] = -v0 / alpha;  // tau = 2 / (v' v) with v scaled to v0 = 1
    const double inv_v0 = 1.0 / v0;
    for (std::size_t i = k + 1; i < m; ++i) w(i, k) *= inv_v0;
    w(k, k) = alpha;
    for (std::size_t j = k + 1; j < n; ++j) {
      double dot = w(k, j);
      for (std::size_t i = k + 1; i < m; ++i) dot += w(i, k) * w(i, j);
      const double scale = taus[k] * dot;
      w(k, j) -= scale;
      for (std::size_t i = k + 1; i < m; ++i) w(i, j) -= scale * w(i, k);
    }
  }
}

// Applies Q' (from householder_qr factors) to a vector in place.
inline void apply_qt(const Matrix& w, const std::vector<double>& taus,
                     Vec& v) {
  const std::size_t m = w.rows();
  for (std::size_t k = 0; k < taus.size(); ++k) {
    if (taus[k] == 0.0) continue;
    double dot = v[k];
    for (std::size_t i = k + 1; i < m; ++i) dot += w(i, k) * v[i];
    const double scale = taus[k] * dot;
    v[k] -= scale;
    for (std::size_t i = k + 1; i < m; ++i) v[i] -= scale * w(i, k);
  }
}

// Applies Q (reflectors in reverse) to a vector in place.
inline void apply_q(const Matrix& w, const std::vector<double>& taus, Vec& v) {
  const std::size_t m = w.rows();
  for (std::size_t k = taus.size(); k-- > 0;) {
    if (taus[k] == 0.0) continue;
    double dot = v[k];
    for (std::size_t i = k + 1; i < m; ++i) dot += w(i, k) * v[i];
    const double scale = taus[k] * dot;
    v[k] -= scale;
    for (std::size_t i = k + 1; i < m; ++i) v[i] -= scale * w(i, k);
  }
}

}  // namespace detail

// Least-squares solution of A x ~= b via Householder QR with column
// pivoting. Full column rank gives the unique minimizer; rank deficiency is
// detected from the R diagonal and resolved to the minimum-norm solution
// through a second factorization of the leading rows (complete orthogonal
// decomposition), flagged in the result.
inline LstsqResult lstsq_qr(const Matrix& a, const Vec& b) {
  const std::size_t m = a.rows(), n = a.cols();
  if (m == 0 || n == 0) throw ValidationError("least squares needs a nonempty matrix");
  if (b.size() != m) throw ValidationError("rhs length must match row count");

  Matrix w = a;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  const std::size_t steps = std::min(m, n);
  std::vector<double> taus(steps, 0.0);

  for (std::size_t k = 0; k < steps; ++k) {
    // Pivot: bring the column with the largest remaining norm to position k.
    std::size_t best = k;
    double best_norm = -1.0;
    for (std::size_t j = k; j < n; ++j) {
      double norm2 = 0.0;
      for (std::size_t i = k; i < m; ++i) norm2 += w(i, j) * w(i, j);
      if (norm2 > best_norm) {
        best_norm = norm2;
        best = j;
      }
    }
    if (best != k) {
      for (std::size_t i = 0; i < m; ++i) std::swap(w(i, k), w(i, best));
      std::swap(perm[k], perm[best]);
    }

    const double norm = std::sqrt(std::max(best_norm, 0.0));
    if (norm == 0.0) {
      taus[k] = 0.0;
      continue;
    }
    const double alpha = w(k, k) >= 0.0 ? -norm : norm;
    const double v0 = w(k, k) - alpha;
    taus[k] = -v0 / alpha;
    const double inv_v0 = 1.0 / v0;
    for (std::size_t i = k + 1; i < m; ++i) w(i, k) *= inv_v0;
    w(k, k) = alpha;
    for (std::size_t j = k + 1; j < n; ++j) {
      double dot = w(k, j);
      for (std::size_t i = k + 1; i < m; ++i) dot += w(i, k) * w(i, j);
      const double scale = taus[k] * dot;
      w(k, j) -= scale;
      for (std::size_t i = k + 1; i < m; ++i) w(i, j) -= scale * w(i, k);
    }
  }

  // Numerical rank from the pivoted R diagonal.
  const double r00 = std::abs(w(0, 0));
  const double tol = r00 * static_cast<double>(std::max(m, n)) *
                     std::numeric_limits<double>::epsilon();
  std::size_t rank = 0;
  for (std::size_t k = 0; k < steps; ++k) {
    if (std::abs(w(k, k)) > tol) ++rank;
  }

  Vec c = b;
  detail::apply_qt(w, taus, c);

  LstsqResult out;
  out.rank = static_cast<int>(rank);
  out.rank_deficient = rank < n;
  out.solution.assign(n, 0.0);
  if (rank == 0) return out;

  Vec z(n, 0.0);
  if (!out.rank_deficient) {
    // Back-substitution on the full-rank triangle.
    for (std::size_t k = n; k-- > 0;) {
      double s = c[k];
      for (std::size_t j = k + 1; j < n; ++j) s -= w(k, j) * z[j];
      z[k] = s / w(k, k);
    }
  } else {
    // Minimum-norm solution of the truncated system [R11 R12] z = c_(0:r):
    // factor the transposed leading rows, forward-solve, map back with Q.
    Matrix rt(n, rank);
    for (std::size_t i = 0; i < rank; ++i) {
      for (std::size_t j = i; j < n; ++j) rt(j, i) = w(i, j);
    }
    std::vector<double> taus2;
    detail::householder_qr(rt, taus2);
    Vec u(n, 0.0);
    for (std::size_t k = 0; k < rank; ++k) {  // solve T' u = c, T upper
      double s = c[k];
      for (std::size_t j = 0; j < k; ++j) s -= rt(j, k) * u[j];
      u[k] = s / rt(k, k);
    }
    detail::apply_q(rt, taus2, u);
    z = std::move(u);
  }

  for (std::size_t j = 0; j < n; ++j) out.solution[perm[j]] = z[j];
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace deltattr

#endif  // DELTATTR_LINALG_HPP
