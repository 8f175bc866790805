#pragma once

#include "hsk/linalg.hpp"
#include "hsk/sketch.hpp"

namespace hsk {

/// Sketched estimates of the sketch quality quantities
///   Z1 = inf over unit v in colspace(A) of ||S v||^2
///   Z2 = sup over unit u, v in colspace(A) of <u, (S^T S - I) v>.
struct SpectralEstimates {
  double z1_hat = 0.0;
  double z2_hat = 0.0;
  double eta = 0.0;
  bool succeeded = false;
  /// True when the basis came from an exact QR of A instead of a sketch T.
  bool exact_basis = false;

  /// z2_hat / z1_hat, or +inf when z1_hat is zero (a rank-deficient sketch).
  double ratio() const;
};

struct EigEstimates {
  double sigma_max = 0.0;
  double sigma_min = 0.0;
  double condition() const { return sigma_max / sigma_min; }
};

struct EstimatorOptions {
  /// Rows of the internal embedding T: ceil(embedding_constant * d^2 / eta^2).
  double embedding_constant = 20.0;
  /// Power iterations: ceil(power_constant * log(d / eta)).
  double power_constant = 10.0;
  /// Skip T and use the exact basis of A (test hook; also taken when T would not be shorter than A).
  bool exact = false;
};

/// Rows used for the internal sparse embedding T.
Index embedding_rows(Index d, double eta, double constant);

/// tau_i = squared row norms of an orthonormal basis of colspace(A).
/// Throws RankDeficientError for rank-deficient A.
Vector leverage_scores(const Matrix& A);

/// Estimate(S, A): QR of T*A, then z1 = sigma_min(S A R^{-1})^2 and
/// z2 = power-method estimate of ||(S A R^{-1})^T (S A R^{-1}) - I||.
/// succeeded == false when T*A is rank deficient; callers retry with options.exact.
SpectralEstimates estimate_z(const SketchMatrix& S, const Matrix& A, double eta, Rng& rng,
                             const EstimatorOptions& options = {});

/// Extreme singular values of T*A*Rinv, T a sparse embedding of O(d^2/eta^2) rows.
/// Throws RankDeficientError when the product is numerically singular.
EigEstimates eig_via_sketch(const Matrix& A, const Matrix& Rinv, double eta, Rng& rng,
                            const EstimatorOptions& options = {});

/// (1 +- eta) estimate of max |eigenvalue| of a symmetric matrix: power iteration from a
/// random unit start, keeping the largest ||M x|| seen.
double operator_norm_symmetric(const Matrix& M, double eta, Rng& rng, double power_constant = 10.0);

}  // namespace hsk
