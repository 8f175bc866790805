#pragma once

#include "hsk/constraints.hpp"
#include "hsk/linalg.hpp"

#include <string>

namespace hsk {

/// A constrained / composite least-squares instance
///   minimize 1/2 ||A X - B||_F^2 + penalty(X)  over the constraint set.
/// Vector problems carry a single-column target.
struct Task {
  std::string id;
  Matrix A;
  Matrix b;
  ConstraintSpec constraint = Free{};

  Index n() const { return A.rows(); }
  Index d() const { return A.cols(); }
  Index targets() const { return b.cols(); }

  /// Shape and parameter checks; throws ValidationError.
  void validate() const;

  /// 1/2 ||A x - b||^2 + penalty(x).
  double composite_objective(const Matrix& x) const;

  /// Objective used by the error metric of each family: ||Bx||^2 for the simplex
  /// (SVM dual) family, the composite objective otherwise.
  double reported_objective(const Matrix& x) const;

  Matrix zero_point() const { return Matrix::Zero(d(), targets()); }
};

}  // namespace hsk
