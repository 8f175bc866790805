#include "hsk/ihs.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace hsk {

void Task::validate() const {
  if (A.rows() == 0 || A.cols() == 0) throw ValidationError("task " + id + ": empty data matrix");
  if (b.rows() != A.rows() || b.cols() < 1)
    throw ValidationError("task " + id + ": target rows do not match the data matrix");
  if (A.rows() < A.cols()) throw ValidationError("task " + id + ": needs n >= d");
  hsk::validate(constraint);
  if (std::holds_alternative<Simplex>(constraint) && b.cols() != 1)
    throw ValidationError("task " + id + ": simplex tasks have a vector unknown");
}

double Task::composite_objective(const Matrix& x) const {
  return 0.5 * (A * x - b).squaredNorm() + regularizer(constraint, x);
}

double Task::reported_objective(const Matrix& x) const {
  if (std::holds_alternative<Simplex>(constraint)) return (A * x - b).squaredNorm();
  return composite_objective(x);
}

std::string to_string(SketchChoice choice) { return choice == SketchChoice::Learned ? "learned" : "random"; }

namespace {

void check_shapes(const Matrix& SA, const Task& task, const Matrix& x_t) {
  if (SA.cols() != task.d()) throw DimensionError("subproblem: sketched matrix has wrong column count");
  if (x_t.rows() != task.d() || x_t.cols() != task.targets())
    throw DimensionError("subproblem: iterate shape does not match the task");
}

InnerSolveResult solve_free(const Matrix& SA, const Matrix& g, const Matrix& x_t) {
  if (SA.rows() < SA.cols()) throw RankDeficientError("subproblem: sketch has fewer rows than d");
  const Matrix R = qr_r_factor(SA);
  const Vector s = singular_values(R);
  if (s(s.size() - 1) <= kRankTolerance * s(0))
    throw RankDeficientError("subproblem: sketched Hessian is singular");
  // (SA)^T SA dx = g  with  (SA)^T SA = R^T R
  const Matrix w = R.triangularView<Eigen::Upper>().transpose().solve(g);
  const Matrix dx = R.triangularView<Eigen::Upper>().solve(w);
  InnerSolveResult out;
  out.x = x_t + dx;
  out.objective = -0.5 * inner(g, dx);
  out.iterations = 1;
  out.converged = true;
  return out;
}

}  // namespace

InnerSolveResult solve_quadratic_model(const Matrix& SA, const Matrix& g, const Matrix& x_t,
                                       const ConstraintSpec& spec, const InnerSolverOptions& options,
                                       const Matrix* warm_start) {
  if (SA.cols() != g.rows() || g.rows() != x_t.rows() || g.cols() != x_t.cols())
    throw DimensionError("quadratic model: inconsistent shapes");
  if (std::holds_alternative<Free>(spec)) return solve_free(SA, g, x_t);

  const Matrix H = SA.transpose() * SA;
  auto objective = [&](const Matrix& x) {
    const Matrix dx = x - x_t;
    return 0.5 * inner(dx, H * dx) - inner(g, dx) + regularizer(spec, x);
  };

  double L = Eigen::SelfAdjointEigenSolver<Matrix>(H, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  if (!(L > 0.0)) {
    if (std::holds_alternative<L1Penalty>(spec))
      throw RankDeficientError("subproblem: zero sketched Hessian with an unbounded penalty problem");
    L = 1.0;  // linear objective over a compact set; any step reaches a minimizing vertex
  }
  const double step = 1.0 / L;

  Matrix x = prox_or_project(spec, warm_start ? *warm_start : x_t, step);
  Matrix y = x;
  double t = 1.0;
  double F = objective(x);

  InnerSolveResult out;
  out.x = x;
  out.objective = F;
  for (int k = 1; k <= options.max_iterations; ++k) {
    const Matrix grad = H * (y - x_t) - g;
    Matrix x_new = prox_or_project(spec, y - step * grad, step);
    const double F_new = objective(x_new);
    if (F_new < out.objective) {
      out.x = x_new;
      out.objective = F_new;
    }
    const Matrix delta = x_new - x;
    if (inner(y - x_new, delta) > 0.0) {
      t = 1.0;
      y = x_new;
    } else {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = x_new + ((t - 1.0) / t_next) * delta;
      t = t_next;
    }
    const double scale = std::max({std::abs(F_new), std::abs(F), std::numeric_limits<double>::min()});
    const bool settled = std::abs(F_new - F) <= options.tolerance * scale &&
                         delta.norm() <= std::sqrt(options.tolerance) * std::max(1.0, x_new.norm());
    x = std::move(x_new);
    F = F_new;
    out.iterations = k;
    if (settled) {
      out.converged = true;
      break;
    }
  }
  return out;
}

InnerSolveResult solve_sketched_subproblem(const Matrix& SA, const Task& task, const Matrix& x_t,
                                           const InnerSolverOptions& options, const Matrix* warm_start) {
  check_shapes(SA, task, x_t);
  const Matrix g = task.A.transpose() * (task.b - task.A * x_t);
  return solve_quadratic_model(SA, g, x_t, task.constraint, options, warm_start);
}

Matrix sketched_quadratic_solve(const SketchMatrix& S, const Task& task, const Matrix& x_t,
                                const InnerSolverOptions& options) {
  InnerSolveResult r = solve_sketched_subproblem(S.apply(task.A), task, x_t, options);
  if (!r.converged)
    throw NonConvergenceError("inner solver did not converge in " + std::to_string(options.max_iterations) +
                                  " iterations",
                              std::move(r.x));
  return std::move(r.x);
}

Matrix reference_solution(const Task& task) {
  if (std::holds_alternative<Free>(task.constraint)) {
    Eigen::ColPivHouseholderQR<Matrix> qr(task.A);
    if (qr.rank() < task.d()) throw RankDeficientError("reference: A is not of full column rank");
    return qr.solve(task.b);
  }
  return solve_sketched_subproblem(task.A, task, task.zero_point(), reference_solver_options()).x;
}

SelectionResult hessian_sketch_select(const SketchMatrix& learned, const SketchMatrix& random, const Task& task,
                                      const Matrix& x_t, double eta, Rng& rng, const InnerSolverOptions& options,
                                      const EstimatorOptions& estimator) {
  auto estimates = [&](const SketchMatrix& S) {
    SpectralEstimates e = estimate_z(S, task.A, eta, rng, estimator);
    if (!e.succeeded) {
      EstimatorOptions exact = estimator;
      exact.exact = true;
      e = estimate_z(S, task.A, eta, rng, exact);
    }
    return e;
  };
  SelectionResult out;
  out.learned = estimates(learned);
  out.random = estimates(random);
  const double lr = out.learned.ratio(), rr = out.random.ratio();
  out.chosen = (std::isfinite(lr) && lr <= rr) ? SketchChoice::Learned : SketchChoice::Random;
  const SketchMatrix& S = out.chosen == SketchChoice::Learned ? learned : random;
  out.x = sketched_quadratic_solve(S, task, x_t, options);
  return out;
}

IHSState run_ihs(const Task& task, const SketchProvider& provider, std::size_t rounds, const Matrix& x0,
                 const IHSOptions& options, const std::optional<Matrix>& reference) {
  task.validate();
  IHSState state;
  state.x = prox_or_project(task.constraint, x0, 0.0);
  const Matrix x_star = reference ? *reference : reference_solution(task);
  state.reference_objective = task.reported_objective(x_star);
  Rng estimator_rng(options.estimator_seed);

  for (std::size_t t = 1; t <= rounds; ++t) {
    RoundSketches sketches = provider(t);
    if (!sketches.learned && !sketches.random) throw ValidationError("run_ihs: provider returned no sketch");
    RoundRecord rec;
    rec.round = t;
    const bool select = sketches.learned && sketches.random && options.safeguard;
    const SketchMatrix* used = sketches.learned ? &*sketches.learned : &*sketches.random;

    const auto start = std::chrono::steady_clock::now();
    Matrix next;
    try {
      if (select) {
        SelectionResult sel = hessian_sketch_select(*sketches.learned, *sketches.random, task, state.x,
                                                    options.eta, estimator_rng, options.inner, options.estimator);
        rec.chosen = sel.chosen;
        used = sel.chosen == SketchChoice::Learned ? &*sketches.learned : &*sketches.random;
        next = std::move(sel.x);
      } else {
        next = sketched_quadratic_solve(*used, task, state.x, options.inner);
      }
    } catch (const NonConvergenceError& e) {
      next = e.best();
      rec.converged = false;
    }
    rec.time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    rec.sketch = used->family();
    rec.m = used->rows();
    if (used->kind() == SketchKind::Gaussian) rec.seed = used->gaussian_payload().seed;
    state.x = std::move(next);
    state.round = t;
    rec.error = task.reported_objective(state.x) - state.reference_objective;
    state.rounds.push_back(std::move(rec));
  }
  return state;
}

Task build_svm_dual(const Matrix& A, const Vector& labels, double C) {
  if (!(C > 0.0)) throw ValidationError("svm dual: C must be > 0");
  if (labels.size() != A.cols()) throw DimensionError("svm dual: one label per sample column");
  for (Index i = 0; i < labels.size(); ++i)
    if (labels(i) != 1.0 && labels(i) != -1.0) throw ValidationError("svm dual: labels must be +1 or -1");
  const Index n = A.rows(), d = A.cols();
  Task task;
  task.A.resize(n + d, d);
  task.A.topRows(n) = A * labels.asDiagonal();
  task.A.bottomRows(d) = Matrix::Identity(d, d) / std::sqrt(C);
  task.b = Matrix::Zero(n + d, 1);
  task.constraint = Simplex{};
  return task;
}

}  // namespace hsk
