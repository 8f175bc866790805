#pragma once

#include "hsk/linalg.hpp"

#include <json.hpp>

#include <string>
#include <variant>

namespace hsk {

struct Free {};
struct L1Penalty {
  double lambda = 0.0;
};
/// Positive simplex {x >= 0, sum x = 1}; vectors only.
struct Simplex {};
/// {X : ||X||_* <= rho}.
struct NuclearBall {
  double rho = 1.0;
};

using ConstraintSpec = std::variant<Free, L1Penalty, Simplex, NuclearBall>;

/// Throws ValidationError for lambda < 0 or rho <= 0.
void validate(const ConstraintSpec& spec);

/// Soft threshold: sign(x) * max(|x| - threshold, 0), elementwise.
Matrix prox_l1(const Matrix& x, double threshold);

/// Euclidean projection onto the positive simplex (sort-and-threshold).
Vector project_simplex(const Vector& x);

/// Euclidean projection of a nonnegative vector onto {s >= 0, sum s <= radius}.
Vector project_l1_ball_nonneg(const Vector& s, double radius);

/// Projection onto the nuclear-norm ball via SVD and projection of the spectrum.
Matrix project_nuclear_ball(const Matrix& X, double rho);

double nuclear_norm(const Matrix& X);

/// Free -> identity; L1Penalty -> prox with threshold lambda*step; Simplex and
/// NuclearBall -> projection (step ignored). Throws DimensionError on shape mismatch.
Matrix prox_or_project(const ConstraintSpec& spec, const Matrix& point, double step);

/// Penalty term of the composite objective (lambda*||x||_1 for L1Penalty, 0 otherwise).
double regularizer(const ConstraintSpec& spec, const Matrix& x);

/// Membership test for the hard constraints, with absolute tolerance.
bool feasible(const ConstraintSpec& spec, const Matrix& x, double tol);

std::string describe(const ConstraintSpec& spec);

/// {"constraint": "free"|"l1"|"simplex"|"nuclear", "lambda": .., "rho": ..}
nlohmann::json constraint_to_json(const ConstraintSpec& spec);
ConstraintSpec constraint_from_json(const nlohmann::json& config);

}  // namespace hsk
