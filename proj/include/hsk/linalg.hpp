#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace hsk {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// All randomness flows through explicitly passed generators of this type.
using Rng = std::mt19937_64;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class RankDeficientError : public Error {
 public:
  using Error::Error;
};

/// Relative singular-value cutoff used for every numerical rank decision.
inline constexpr double kRankTolerance = 1e-10;

/// Derives an independent child seed from (root, index) with the SplitMix64
/// finalizer. Used to give every trial / worker its own generator.
std::uint64_t child_seed(std::uint64_t root, std::uint64_t index);

Matrix gaussian_matrix(Index rows, Index cols, Rng& rng, double stddev = 1.0);

/// Singular values in decreasing order.
Vector singular_values(const Matrix& M);

/// Ratio of extreme singular values; +inf for numerically singular input.
double condition_number(const Matrix& M);

/// Thin orthonormal basis of colspace(A); throws RankDeficientError when A does
/// not have full column rank.
Matrix orthonormal_basis(const Matrix& A);

/// Upper-triangular R of the thin QR of A (d x d).
Matrix qr_r_factor(const Matrix& A);

/// True when the smallest singular value exceeds kRankTolerance * largest.
bool full_column_rank(const Matrix& A);

/// Computes B * R^{-1} for upper-triangular R without forming the inverse.
Matrix right_solve_upper(const Matrix& B, const Matrix& R);

/// Inverse of an upper-triangular matrix by triangular solve against I.
Matrix upper_inverse(const Matrix& R);

/// Moore-Penrose pseudoinverse via SVD with relative cutoff.
Matrix pseudo_inverse(const Matrix& M, double rel_cutoff = kRankTolerance);

/// Frobenius inner product.
inline double inner(const Matrix& X, const Matrix& Y) { return (X.array() * Y.array()).sum(); }

}  // namespace hsk
