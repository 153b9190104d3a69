// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "relalign/matrix.hpp"

namespace relalign {

// Probabilities below this floor are clamped before any log.
inline constexpr double kProbFloor = 1e-12;
inline constexpr double kRowSumTol = 1e-12;

/// A matrix whose entries lie in [0, 1] and whose rows each sum to 1
/// within 1e-12. Produced by row_softmax / renormalize_rows.
class RowStochasticMatrix {
 public:
  explicit RowStochasticMatrix(Matrix m) : inner_(std::move(m)) { validate(); }

  const Matrix& matrix() const { return inner_; }
  std::size_t rows() const { return inner_.rows(); }
  std::size_t cols() const { return inner_.cols(); }
  std::span<const double> row(std::size_t i) const { return inner_.row(i); }

 private:
  Matrix inner_;

  void validate() const {
    for (std::size_t i = 0; i < inner_.rows(); ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < inner_.cols(); ++j) {
        const double v = inner_(i, j);
        if (v < 0.0 || v > 1.0) {
          throw std::invalid_argument("row-stochastic: entry out of [0,1] at (" +
                                      std::to_string(i) + "," + std::to_string(j) + ")");
        }
        sum += v;
      }
      if (std::abs(sum - 1.0) > kRowSumTol) {
        throw std::invalid_argument("row-stochastic: row " + std::to_string(i) +
                                    " sums to " + std::to_string(sum));
      }
    }
  }
};

/// Row-wise softmax of `scale * S` with max-subtraction for stability.
inline RowStochasticMatrix row_softmax(const Matrix& s, double scale) {
  if (s.empty()) throw std::invalid_argument("row_softmax: empty matrix");
  if (!(scale > 0.0)) throw std::invalid_argument("row_softmax: scale must be positive");
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t j = 0; j < s.cols(); ++j) {
      if (!std::isfinite(s(i, j))) {
        throw std::invalid_argument("row_softmax: non-finite input at (" + std::to_string(i) +
                                    "," + std::to_string(j) + ")");
      }
    }
  }
  Matrix out(s.rows(), s.cols());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < s.cols(); ++j) mx = std::max(mx, scale * s(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < s.cols(); ++j) {
      const double e = std::exp(scale * s(i, j) - mx);
      out(i, j) = e;
      denom += e;
    }
    for (std::size_t j = 0; j < s.cols(); ++j) out(i, j) /= denom;
  }
  return RowStochasticMatrix(std::move(out));
}

/// Rescales each row of a nonnegative matrix to sum to 1.
inline RowStochasticMatrix renormalize_rows(const Matrix& m) {
  if (m.empty()) throw std::invalid_argument("renormalize_rows: empty matrix");
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (m(i, j) < 0.0) {
        throw std::invalid_argument("renormalize_rows: negative entry at (" + std::to_string(i) +
                                    "," + std::to_string(j) + ")");
      }
      sum += m(i, j);
    }
    if (!(sum > 0.0)) {
      throw std::invalid_argument("renormalize_rows: row " + std::to_string(i) +
                                  " has no positive mass");
    }
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) / sum;
  }
  return RowStochasticMatrix(std::move(out));
}

namespace detail {

// Clamp to the probability floor and renormalize, then sum p*ln(p/q).
inline double kl_prepared(std::span<const double> p, std::span<const double> q) {
  const std::size_t n = p.size();
  std::vector<double> pc(n), qc(n);
  double ps = 0.0, qs = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    pc[k] = std::max(p[k], kProbFloor);
    qc[k] = std::max(q[k], kProbFloor);
    ps += pc[k];
    qs += qc[k];
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double pk = pc[k] / ps;
    const double qk = qc[k] / qs;
    acc += pk * std::log(pk / qk);
  }
  return acc;
}

// Raw variant: clamps before the log but performs no renormalization.
// Used where rows are compared without being forced into distributions.
inline double kl_raw(std::span<const double> p, std::span<const double> q) {
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double pk = std::max(p[k], kProbFloor);
    const double qk = std::max(q[k], kProbFloor);
    acc += pk * std::log(pk / qk);
  }
  return acc;
}

}  // namespace detail

/// KL divergence between two probability rows. Inputs must each sum to 1
/// within 1e-9; entries are clamped to the 1e-12 floor (and the row
/// renormalized) before the log, so exact zeros are admitted.
inline double kl_div(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("kl_div: length mismatch (" + std::to_string(p.size()) + " vs " +
                                std::to_string(q.size()) + ")");
  }
  if (p.empty()) throw std::invalid_argument("kl_div: empty input");
  double ps = 0.0, qs = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    ps += p[k];
    qs += q[k];
  }
  if (std::abs(ps - 1.0) > 1e-9)
    throw std::invalid_argument("kl_div: first argument sums to " + std::to_string(ps));
  if (std::abs(qs - 1.0) > 1e-9)
    throw std::invalid_argument("kl_div: second argument sums to " + std::to_string(qs));
  return detail::kl_prepared(p, q);
}

/// Symmetric matrix KL: sum over rows i of KL(A_i||B_i) + KL(B_i||A_i).
inline double m_kl(const RowStochasticMatrix& a, const RowStochasticMatrix& b) {
  if (!a.matrix().same_shape(b.matrix()))
    throw std::invalid_argument("m_kl: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    acc += detail::kl_prepared(a.row(i), b.row(i)) + detail::kl_prepared(b.row(i), a.row(i));
  }
  return acc;
}

/// Per-row index of the maximum entry; ties break to the lowest index.
inline std::vector<std::size_t> row_argmax(const Matrix& s) {
  if (s.empty()) throw std::invalid_argument("row_argmax: empty matrix");
  std::vector<std::size_t> out(s.rows());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < s.cols(); ++j) {
      if (s(i, j) > s(i, best)) best = j;
    }
    out[i] = best;
  }
  return out;
}

/// Sample Pearson correlation coefficient.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("pearson: need at least 2 samples");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = x[k] - mx;
    const double dy = y[k] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw std::invalid_argument("pearson: first input is constant");
  if (syy == 0.0) throw std::invalid_argument("pearson: second input is constant");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace relalign
