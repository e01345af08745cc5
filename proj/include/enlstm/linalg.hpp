#pragma once

// Ensemble statistics and regularized SPD solves.
//
// Convention: an ensemble of N samples of dimension p is a p x N matrix, one
// sample per COLUMN. This is the layout the update step works in (one member
// parameter vector per column) and avoids transposed copies of large
// ensembles.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <vector>

#include "enlstm/error.hpp"

namespace enlstm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Per-row mean over the columns of `samples`. Sums are accumulated in long double.
inline Vector ensemble_mean(const Matrix& samples) {
  if (samples.cols() < 1) throw InvalidArgument("empty ensemble");
  const Eigen::Index p = samples.rows();
  const Eigen::Index n = samples.cols();
  std::vector<long double> acc(static_cast<std::size_t>(p), 0.0L);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double* col = samples.col(j).data();
    for (Eigen::Index k = 0; k < p; ++k) acc[k] += col[k];
  }
  Vector mean(p);
  for (Eigen::Index k = 0; k < p; ++k) mean[k] = static_cast<double>(acc[k] / n);
  return mean;
}

// Samples with the ensemble mean removed from every column.
inline Matrix centered(const Matrix& samples) {
  Matrix out = samples;
  out.colwise() -= ensemble_mean(samples);
  return out;
}

// Unbiased cross-covariance (1/(N-1)) sum_j (a_j - a_bar)(b_j - b_bar)^T between
// two ensembles with the same member count. Returns p x q.
inline Matrix cross_covariance(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw InvalidArgument("cross_covariance: ensembles differ in member count");
  if (a.cols() < 2) throw InvalidArgument("covariance undefined");
  const Matrix da = centered(a);
  const Matrix db = centered(b);
  const Eigen::Index n = a.cols();
  Matrix out(a.rows(), b.rows());
  for (Eigen::Index k = 0; k < a.rows(); ++k) {
    for (Eigen::Index m = 0; m < b.rows(); ++m) {
      long double s = 0.0L;
      for (Eigen::Index j = 0; j < n; ++j) s += static_cast<long double>(da(k, j)) * db(m, j);
      out(k, m) = static_cast<double>(s / (n - 1));
    }
  }
  return out;
}

inline Matrix covariance(const Matrix& a) { return cross_covariance(a, a); }

struct SpdSolution {
  Matrix x;
  // Diagonal shift that made the factorization succeed; 0 when none was needed.
  double jitter = 0.0;
};

struct JitterPolicy {
  double relative_start = 1e-10;  // first shift, times mean(diag(S))
  double growth = 10.0;
  int max_attempts = 8;
};

// Solves S X = R for symmetric S by Cholesky. When S is not numerically
// positive definite the diagonal is shifted by an escalating jitter.
inline SpdSolution spd_solve(const Matrix& s, const Matrix& r, const JitterPolicy& policy = {}) {
  if (s.rows() < 1 || s.rows() != s.cols()) throw InvalidArgument("spd_solve: matrix must be square and non-empty");
  if (r.rows() != s.rows()) throw InvalidArgument("spd_solve: right-hand side row count mismatch");
  const double scale = s.cwiseAbs().maxCoeff();
  if (!std::isfinite(scale)) throw NumericalError("spd_solve: non-finite matrix entries");
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + scale))
    throw InvalidArgument("spd_solve: matrix is not symmetric");

  auto attempt = [&](double shift, SpdSolution& out) {
    Matrix shifted = s;
    if (shift > 0.0) shifted.diagonal().array() += shift;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() != Eigen::Success) return false;
    out.x = llt.solve(r);
    out.jitter = shift;
    return out.x.allFinite();
  };

  SpdSolution sol;
  if (attempt(0.0, sol)) return sol;
  double base = policy.relative_start * s.diagonal().mean();
  if (!(base > 0.0) || !std::isfinite(base)) base = policy.relative_start;
  double shift = base;
  for (int k = 0; k < policy.max_attempts; ++k, shift *= policy.growth) {
    if (attempt(shift, sol)) return sol;
  }
  throw NumericalError("singular system");
}

}  // namespace enlstm
