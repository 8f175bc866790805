#pragma once

#include "hsk/estimate.hpp"
#include "hsk/ihs.hpp"
#include "hsk/sketch.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hsk {

enum class PreconditionerSource { Learned, Random, Fallback };
std::string to_string(PreconditionerSource source);

/// Update rule of the preconditioned gradient loop, with M = P^T A^T A P and c = P^T y:
///   Hessian: z <- z - step * (M z - c)       step = step_scale / (smax^2 + smin^2)
///   Squared: z <- z - step * M (M z - c)     step = step_scale / (smax^4 + smin^4)
/// Both have fixed point M z = c. The Hessian form needs O(kappa^2) iterations, the
/// squared form O(kappa^4).
enum class IterationForm { Hessian, Squared };

struct FastRegOptions {
  double eta_est = 0.1;
  double step_scale = 1.0;
  IterationForm form = IterationForm::Hessian;
  /// Replaces the estimated step entirely.
  std::optional<double> step_override;
  /// Error threshold on iterations; default 10 * k^2 * ln(kappa(A)/eps) + 1000 (k^4 for Squared).
  std::optional<long> iteration_cap;
  /// Hard budget: stop after this many iterations without raising (fixed-iteration experiments).
  std::optional<long> iteration_budget;
  EstimatorOptions estimator;
  /// Called with (t, z_t) before every update, including t = 0.
  std::function<void(long, const Vector&)> observer;
};

/// P = R^{-1} from the QR of S*A, kept as the triangular factor R.
struct Preconditioner {
  Matrix R;
  EigEstimates estimates;  // extreme singular values of A P
  double step = 0.0;
  PreconditionerSource source = PreconditionerSource::Random;

  Vector apply(const Vector& z) const;            // P z
  Vector apply_transpose(const Vector& y) const;  // P^T y
  double kappa() const { return estimates.condition(); }

  /// P = I with the given step; for cross-checks against plain gradient descent.
  static Preconditioner identity(Index d, double step, const EigEstimates& estimates = {1.0, 1.0});
};

/// Step size for the given singular value estimates of A P.
double preconditioned_step(const EigEstimates& estimates, const FastRegOptions& options);

/// QR of S*A, then singular value estimates of A R^{-1}. Throws RankDeficientError when
/// S*A is numerically rank deficient.
Preconditioner build_preconditioner(const SketchMatrix& S, const Matrix& A, Rng& rng,
                                    const FastRegOptions& options = {},
                                    PreconditionerSource source = PreconditionerSource::Random);

struct FastRegResult {
  Vector x;
  long iterations = 0;
  PreconditionerSource chosen = PreconditionerSource::Random;
  /// ||A^T A x_t - y|| / ||y|| before each update and at exit.
  std::vector<double> residuals;
  double relative_residual = 0.0;
  bool converged = true;
  double kappa_learned = 0.0;
  double kappa_random = 0.0;
};

class FastRegNonConvergence : public Error {
 public:
  FastRegNonConvergence(const std::string& what, FastRegResult partial)
      : Error(what), partial_(std::move(partial)) {}
  const FastRegResult& partial() const { return partial_; }

 private:
  FastRegResult partial_;
};

/// Preconditioned gradient loop from z = 0 until ||A^T A P z - y|| <= eps ||y||.
/// Products with A^T A are nested matrix-vector products.
FastRegResult preconditioned_solve(const Matrix& A, const Vector& y, const Preconditioner& P, double eps,
                                   const FastRegOptions& options = {});

/// Builds a preconditioner from each provided sketch, keeps the one with smaller estimated
/// condition number (ties to learned) and solves A^T A x = y to relative residual eps.
/// Falls back to a dense solve when neither sketch gives a full-rank S*A.
FastRegResult fast_regression_solve(const SketchMatrix* learned, const SketchMatrix* random, const Matrix& A,
                                    const Vector& y, double eps, Rng& rng, const FastRegOptions& options = {});

struct NewtonRound {
  std::size_t round = 0;
  Vector x;                    // iterate after the round
  double relative_residual = 0.0;
  long iterations = 0;
  PreconditionerSource chosen = PreconditionerSource::Random;
  double gradient_norm = 0.0;  // ||grad f|| at the iterate before the round
  double time_ms = 0.0;
  std::vector<double> residuals;
};

/// Newton iterations x <- x - (A^T A)^{-1} grad f(x) for f(x) = 1/2 ||Ax - b||^2, with every
/// Hessian system solved by fast_regression_solve. Requires a Free, single-target task.
std::vector<NewtonRound> newton_driver(const Task& task, const SketchProvider& provider, std::size_t rounds,
                                       double eps, const Vector& x0, Rng& rng, const FastRegOptions& options = {});

}  // namespace hsk
