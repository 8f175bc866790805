#include "hsk/linalg.hpp"

#include <limits>

namespace hsk {

std::uint64_t child_seed(std::uint64_t root, std::uint64_t index) {
  std::uint64_t z = root + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Matrix gaussian_matrix(Index rows, Index cols, Rng& rng, double stddev) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix G(rows, cols);
  // Column-major fill order is part of the reproducibility contract.
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) G(i, j) = normal(rng);
  return G;
}

Vector singular_values(const Matrix& M) {
  if (M.size() == 0) return Vector();
  Eigen::JacobiSVD<Matrix> svd(M);
  return svd.singularValues();
}

double condition_number(const Matrix& M) {
  const Vector s = singular_values(M);
  if (s.size() < M.cols() || s.size() == 0) return std::numeric_limits<double>::infinity();
  const double smin = s(s.size() - 1);
  if (smin <= kRankTolerance * s(0)) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

bool full_column_rank(const Matrix& A) {
  if (A.rows() < A.cols() || A.cols() == 0) return false;
  const Vector s = singular_values(qr_r_factor(A));
  return s(s.size() - 1) > kRankTolerance * s(0);
}

Matrix qr_r_factor(const Matrix& A) {
  const Index d = A.cols();
  Eigen::HouseholderQR<Matrix> qr(A);
  Matrix R = Matrix::Zero(d, d);
  const Index k = std::min(A.rows(), d);
  R.topRows(k) = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  return R;
}

Matrix orthonormal_basis(const Matrix& A) {
  if (A.rows() < A.cols()) throw RankDeficientError("orthonormal_basis: fewer rows than columns");
  Eigen::HouseholderQR<Matrix> qr(A);
  Matrix R = qr.matrixQR().topRows(A.cols()).triangularView<Eigen::Upper>();
  const Vector s = singular_values(R);
  if (s.size() == 0 || s(s.size() - 1) <= kRankTolerance * s(0))
    throw RankDeficientError("orthonormal_basis: matrix is not of full column rank");
  return qr.householderQ() * Matrix::Identity(A.rows(), A.cols());
}

Matrix right_solve_upper(const Matrix& B, const Matrix& R) {
  // X R = B  <=>  R^T X^T = B^T
  return R.triangularView<Eigen::Upper>().transpose().solve(B.transpose()).transpose();
}

Matrix upper_inverse(const Matrix& R) {
  return R.triangularView<Eigen::Upper>().solve(Matrix::Identity(R.rows(), R.cols()));
}

Matrix pseudo_inverse(const Matrix& M, double rel_cutoff) {
  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  Vector inv = Vector::Zero(s.size());
  const double cut = s.size() > 0 ? rel_cutoff * s(0) : 0.0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > cut) inv(i) = 1.0 / s(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

}  // namespace hsk
