#pragma once

#include "hsk/estimate.hpp"
#include "hsk/sketch.hpp"
#include "hsk/task.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hsk {

struct InnerSolverOptions {
  int max_iterations = 500;
  double tolerance = 1e-10;
};

/// Options for the long-horizon reference solve of a task.
inline InnerSolverOptions reference_solver_options() { return InnerSolverOptions{20000, 1e-14}; }

struct InnerSolveResult {
  Matrix x;
  double objective = 0.0;  // sketched round objective at x, penalty included
  int iterations = 0;
  bool converged = false;
};

/// Raised when the inner solver exhausts its iteration budget; carries the best iterate.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, Matrix best) : Error(what), best_(std::move(best)) {}
  const Matrix& best() const { return best_; }

 private:
  Matrix best_;
};

/// Minimizes 1/2 ||SA (x - x_t)||^2 - <g, x - x_t> + penalty(x) over the constraint.
/// Free problems are solved directly from a QR of SA; the others by FISTA with adaptive
/// restart. Never throws on nonconvergence: inspect `converged`.
InnerSolveResult solve_quadratic_model(const Matrix& SA, const Matrix& g, const Matrix& x_t,
                                       const ConstraintSpec& constraint, const InnerSolverOptions& options = {},
                                       const Matrix* warm_start = nullptr);

/// solve_quadratic_model with g = A^T (b - A x_t) taken from the task.
InnerSolveResult solve_sketched_subproblem(const Matrix& SA, const Task& task, const Matrix& x_t,
                                           const InnerSolverOptions& options = {},
                                           const Matrix* warm_start = nullptr);

/// One iterative-Hessian-sketch update with sketch S. Throws NonConvergenceError with the
/// best iterate when the inner solver does not converge, RankDeficientError when a Free
/// problem has a singular sketched Hessian.
Matrix sketched_quadratic_solve(const SketchMatrix& S, const Task& task, const Matrix& x_t,
                                const InnerSolverOptions& options = {});

/// High-accuracy minimizer of the task objective (identity-sketch subproblem at x = 0).
Matrix reference_solution(const Task& task);

enum class SketchChoice { Learned, Random };
std::string to_string(SketchChoice choice);

struct SelectionResult {
  Matrix x;
  SketchChoice chosen = SketchChoice::Random;
  SpectralEstimates learned;
  SpectralEstimates random;
};

/// Estimates (z1, z2) for both sketches and solves the round with the one of smaller
/// z2/z1. Ties go to the learned sketch unless its ratio is infinite.
SelectionResult hessian_sketch_select(const SketchMatrix& learned, const SketchMatrix& random,
                                      const Task& task, const Matrix& x_t, double eta, Rng& rng,
                                      const InnerSolverOptions& options = {},
                                      const EstimatorOptions& estimator = {});

struct RoundRecord {
  std::size_t round = 0;
  std::string sketch;  // family label of the sketch that produced the iterate
  Index m = 0;
  std::optional<std::uint64_t> seed;
  std::optional<SketchChoice> chosen;
  double error = 0.0;
  double time_ms = 0.0;
  bool converged = true;
};

struct IHSState {
  std::size_t round = 0;
  Matrix x;
  double reference_objective = 0.0;
  std::vector<RoundRecord> rounds;
};

struct IHSOptions {
  InnerSolverOptions inner;
  EstimatorOptions estimator;
  double eta = 0.1;
  /// Run the learned-vs-random selection whenever both sketches are provided.
  bool safeguard = true;
  std::uint64_t estimator_seed = 0;
};

using SketchProvider = std::function<RoundSketches(std::size_t round)>;

/// Iterates the sketched update for `rounds` rounds from x0 (projected onto the constraint),
/// recording reported_objective(x_t) - reported_objective(x*) after every round.
/// `reference` supplies x*; it is computed with reference_solution when absent.
IHSState run_ihs(const Task& task, const SketchProvider& provider, std::size_t rounds, const Matrix& x0,
                 const IHSOptions& options = {}, const std::optional<Matrix>& reference = std::nullopt);

/// SVM dual as a simplex-constrained task: data matrix [A D ; I/sqrt(C)], zero target,
/// where A holds one sample per column and D = diag(labels).
Task build_svm_dual(const Matrix& A, const Vector& labels, double C);

}  // namespace hsk
