#pragma once

// Dense reference computations shared by the unit and acceptance tests. Each one is
// deliberately naive: brute force over supports, bisection, full SVD.

#include "hsk/linalg.hpp"
#include "hsk/sketch.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace oracle {

using hsk::Index;
using hsk::Matrix;
using hsk::Vector;

inline Matrix orthonormal_columns(const Matrix& A) {
  Eigen::HouseholderQR<Matrix> qr(A);
  return qr.householderQ() * Matrix::Identity(A.rows(), A.cols());
}

struct ExactZ {
  double z1 = 0.0;
  double z2 = 0.0;
};

/// Z1 = sigma_min(SU)^2, Z2 = ||(SU)^T SU - I|| from a dense eigendecomposition.
inline ExactZ exact_z(const hsk::SketchMatrix& S, const Matrix& A) {
  const Matrix U = orthonormal_columns(A);
  const Matrix SU = S.apply(U);
  Matrix M = SU.transpose() * SU;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(M);
  ExactZ out;
  out.z1 = std::max(0.0, eig.eigenvalues().minCoeff());
  M.diagonal().array() -= 1.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig2(M);
  out.z2 = eig2.eigenvalues().cwiseAbs().maxCoeff();
  return out;
}

/// Worst singular-value deviation max |sigma_i(SU) - 1|.
inline double norm_distortion(const hsk::SketchMatrix& S, const Matrix& A) {
  const Matrix U = orthonormal_columns(A);
  Eigen::JacobiSVD<Matrix> svd(S.apply(U));
  const Vector s = svd.singularValues();
  double worst = 0.0;
  for (Index i = 0; i < U.cols(); ++i) worst = std::max(worst, std::abs((i < s.size() ? s(i) : 0.0) - 1.0));
  return worst;
}

/// Projection onto the simplex by enumerating every support set and solving its KKT system.
inline Vector simplex_active_set(const Vector& x) {
  const Index d = x.size();
  Vector best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask < (1u << d); ++mask) {
    double sum = 0.0;
    int k = 0;
    for (Index i = 0; i < d; ++i)
      if (mask & (1u << i)) {
        sum += x(i);
        ++k;
      }
    const double shift = (sum - 1.0) / k;
    Vector y = Vector::Zero(d);
    bool ok = true;
    for (Index i = 0; i < d; ++i)
      if (mask & (1u << i)) {
        y(i) = x(i) - shift;
        if (y(i) < 0.0) ok = false;
      }
    if (!ok) continue;
    const double dist = (y - x).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = y;
    }
  }
  return best;
}

/// Projection of a nonnegative vector onto {s >= 0, sum s <= radius} by bisection on the shift.
inline Vector l1_ball_bisection(const Vector& s, double radius) {
  if (s.sum() <= radius) return s;
  double lo = 0.0, hi = s.maxCoeff();
  for (int k = 0; k < 300; ++k) {
    const double mid = 0.5 * (lo + hi);
    if ((s.array() - mid).max(0.0).sum() > radius)
      lo = mid;
    else
      hi = mid;
  }
  return (s.array() - 0.5 * (lo + hi)).max(0.0).matrix();
}

inline Matrix nuclear_bisection(const Matrix& X, double rho) {
  Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector s = l1_ball_bisection(svd.singularValues(), rho);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

inline double soft(double v, double t) { return v > t ? v - t : (v < -t ? v + t : 0.0); }

/// Plain proximal gradient for 1/2||Ax - b||^2 + lambda ||x||_1, run for a long fixed horizon.
inline Vector lasso_ista(const Matrix& A, const Vector& b, double lambda, int iterations) {
  const Matrix H = A.transpose() * A;
  const Vector Atb = A.transpose() * b;
  const double L = Eigen::SelfAdjointEigenSolver<Matrix>(H).eigenvalues().maxCoeff();
  Vector x = Vector::Zero(A.cols());
  for (int k = 0; k < iterations; ++k) {
    const Vector z = x - (H * x - Atb) / L;
    for (Index i = 0; i < z.size(); ++i) x(i) = soft(z(i), lambda / L);
  }
  return x;
}

inline double lasso_objective(const Matrix& A, const Vector& b, double lambda, const Vector& x) {
  return 0.5 * (A * x - b).squaredNorm() + lambda * x.lpNorm<1>();
}

inline double dense_condition(const Matrix& M) {
  Eigen::JacobiSVD<Matrix> svd(M);
  const Vector s = svd.singularValues();
  return s(0) / s(s.size() - 1);
}

inline Vector singular_values_of(const Matrix& M) { return Eigen::JacobiSVD<Matrix>(M).singularValues(); }

/// Moore-Penrose inverse from a full SVD, cutoff 1e-12 relative to the top singular value.
inline Matrix pinv(const Matrix& M) {
  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vector s = svd.singularValues();
  const double cut = s.size() ? 1e-12 * s(0) : 0.0;
  for (Index i = 0; i < s.size(); ++i) s(i) = s(i) > cut ? 1.0 / s(i) : 0.0;
  return svd.matrixV() * s.asDiagonal() * svd.matrixU().transpose();
}

/// A with prescribed singular values: random orthonormal U (n x d), V (d x d).
inline Matrix with_spectrum(Index n, const Vector& sigma, hsk::Rng& rng) {
  const Index d = sigma.size();
  const Matrix U = orthonormal_columns(hsk::gaussian_matrix(n, d, rng));
  const Matrix V = orthonormal_columns(hsk::gaussian_matrix(d, d, rng));
  return U * sigma.asDiagonal() * V.transpose();
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  const double mx = mean(lx), my = mean(ly);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    num += (lx[i] - mx) * (ly[i] - my);
    den += (lx[i] - mx) * (lx[i] - mx);
  }
  return num / den;
}

}  // namespace oracle
