#include "hsk/fastreg.hpp"

#include <chrono>
#include <cmath>

namespace hsk {

std::string to_string(PreconditionerSource source) {
  switch (source) {
    case PreconditionerSource::Learned: return "learned";
    case PreconditionerSource::Random: return "random";
    case PreconditionerSource::Fallback: return "fallback";
  }
  return "unknown";
}

Vector Preconditioner::apply(const Vector& z) const { return R.triangularView<Eigen::Upper>().solve(z); }

Vector Preconditioner::apply_transpose(const Vector& y) const {
  return R.triangularView<Eigen::Upper>().transpose().solve(y);
}

Preconditioner Preconditioner::identity(Index d, double step, const EigEstimates& estimates) {
  Preconditioner p;
  p.R = Matrix::Identity(d, d);
  p.estimates = estimates;
  p.step = step;
  return p;
}

double preconditioned_step(const EigEstimates& e, const FastRegOptions& options) {
  if (options.step_override) return *options.step_override;
  const double hi = e.sigma_max * e.sigma_max, lo = e.sigma_min * e.sigma_min;
  if (options.form == IterationForm::Squared) return options.step_scale / (hi * hi + lo * lo);
  return options.step_scale / (hi + lo);
}

Preconditioner build_preconditioner(const SketchMatrix& S, const Matrix& A, Rng& rng, const FastRegOptions& options,
                                    PreconditionerSource source) {
  const Matrix SA = S.apply(A);
  if (SA.rows() < SA.cols() || !full_column_rank(SA))
    throw RankDeficientError("preconditioner: sketched matrix is rank deficient");
  Preconditioner p;
  p.R = qr_r_factor(SA);
  p.estimates = eig_via_sketch(A, upper_inverse(p.R), options.eta_est, rng, options.estimator);
  p.step = preconditioned_step(p.estimates, options);
  if (!(p.step > 0.0) || !std::isfinite(p.step)) throw ValidationError("preconditioner: invalid step size");
  p.source = source;
  return p;
}

namespace {

long default_cap(const Preconditioner& P, double eps, const FastRegOptions& options) {
  const double k = std::max(1.0, P.kappa());
  const double kappa_a = std::max(1.0, k * condition_number(P.R));
  const double power = options.form == IterationForm::Squared ? k * k * k * k : k * k;
  const double cap = 10.0 * power * std::log(std::max(kappa_a / eps, M_E)) + 1000.0;
  return cap > 1e12 ? static_cast<long>(1e12) : static_cast<long>(cap);
}

Vector hessian_times(const Matrix& A, const Vector& x) { return A.transpose() * (A * x); }

}  // namespace

FastRegResult preconditioned_solve(const Matrix& A, const Vector& y, const Preconditioner& P, double eps,
                                   const FastRegOptions& options) {
  if (!(eps > 0.0 && eps < 1.0)) throw ValidationError("fast regression: eps must lie in (0, 1)");
  if (y.size() != A.cols() || P.R.rows() != A.cols()) throw DimensionError("fast regression: shape mismatch");
  const long cap = options.iteration_cap ? *options.iteration_cap : default_cap(P, eps, options);
  const double ynorm = y.norm();

  FastRegResult out;
  out.chosen = P.source;
  Vector z = Vector::Zero(A.cols());
  Vector r = -y;
  for (long t = 0;; ++t) {
    const double rnorm = r.norm();
    out.residuals.push_back(ynorm > 0.0 ? rnorm / ynorm : 0.0);
    out.iterations = t;
    if (rnorm <= eps * ynorm) break;
    if (options.iteration_budget && t >= *options.iteration_budget) {
      out.converged = false;
      break;
    }
    if (t >= cap) {
      out.converged = false;
      out.x = P.apply(z);
      out.relative_residual = out.residuals.back();
      throw FastRegNonConvergence("fast regression: iteration cap of " + std::to_string(cap) + " reached",
                                  std::move(out));
    }
    if (options.observer) options.observer(t, z);
    Vector u = P.apply_transpose(r);
    if (options.form == IterationForm::Squared) u = P.apply_transpose(hessian_times(A, P.apply(u)));
    z -= P.step * u;
    r = hessian_times(A, P.apply(z)) - y;
  }
  out.x = P.apply(z);
  out.relative_residual = out.residuals.back();
  return out;
}

namespace {

FastRegResult dense_fallback(const Matrix& A, const Vector& y, double eps) {
  const Matrix R = qr_r_factor(A);
  if (!full_column_rank(R)) throw RankDeficientError("fast regression: A is rank deficient");
  auto solve = [&](const Vector& rhs) -> Vector {
    const Vector w = R.triangularView<Eigen::Upper>().transpose().solve(rhs);
    return R.triangularView<Eigen::Upper>().solve(w);
  };
  FastRegResult out;
  out.chosen = PreconditionerSource::Fallback;
  const double ynorm = y.norm();
  out.x = solve(y);
  Vector r = hessian_times(A, out.x) - y;
  for (int k = 0; k < 3 && r.norm() > eps * ynorm; ++k) {
    out.x -= solve(r);
    r = hessian_times(A, out.x) - y;
  }
  out.relative_residual = ynorm > 0.0 ? r.norm() / ynorm : 0.0;
  out.residuals.push_back(out.relative_residual);
  out.converged = r.norm() <= eps * ynorm;
  return out;
}

}  // namespace

FastRegResult fast_regression_solve(const SketchMatrix* learned, const SketchMatrix* random, const Matrix& A,
                                    const Vector& y, double eps, Rng& rng, const FastRegOptions& options) {
  if (!(eps > 0.0 && eps < 1.0)) throw ValidationError("fast regression: eps must lie in (0, 1)");
  if (y.size() != A.cols()) throw DimensionError("fast regression: y must have d entries");
  if (!learned && !random) throw ValidationError("fast regression: no sketch supplied");

  std::optional<Preconditioner> pl, pr;
  try {
    if (learned) pl = build_preconditioner(*learned, A, rng, options, PreconditionerSource::Learned);
  } catch (const RankDeficientError&) {
  }
  try {
    if (random) pr = build_preconditioner(*random, A, rng, options, PreconditionerSource::Random);
  } catch (const RankDeficientError&) {
  }

  FastRegResult out;
  if (!pl && !pr) {
    out = dense_fallback(A, y, eps);
  } else {
    const Preconditioner& chosen = (pl && (!pr || pl->kappa() <= pr->kappa())) ? *pl : *pr;
    out = preconditioned_solve(A, y, chosen, eps, options);
  }
  if (pl) out.kappa_learned = pl->kappa();
  if (pr) out.kappa_random = pr->kappa();
  return out;
}

std::vector<NewtonRound> newton_driver(const Task& task, const SketchProvider& provider, std::size_t rounds,
                                       double eps, const Vector& x0, Rng& rng, const FastRegOptions& options) {
  task.validate();
  if (!std::holds_alternative<Free>(task.constraint) || task.targets() != 1)
    throw ValidationError("newton driver: needs an unconstrained single-target task");
  if (x0.size() != task.d()) throw DimensionError("newton driver: x0 must have d entries");

  std::vector<NewtonRound> trace;
  Vector x = x0;
  for (std::size_t t = 1; t <= rounds; ++t) {
    RoundSketches sketches = provider(t);
    const Vector grad = task.A.transpose() * (task.A * x - task.b.col(0));
    const auto start = std::chrono::steady_clock::now();
    FastRegResult r = fast_regression_solve(sketches.learned ? &*sketches.learned : nullptr,
                                            sketches.random ? &*sketches.random : nullptr, task.A, grad, eps, rng,
                                            options);
    NewtonRound rec;
    rec.time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    x -= r.x;
    rec.round = t;
    rec.x = x;
    rec.relative_residual = r.relative_residual;
    rec.iterations = r.iterations;
    rec.chosen = r.chosen;
    rec.gradient_norm = grad.norm();
    rec.residuals = std::move(r.residuals);
    trace.push_back(std::move(rec));
  }
  return trace;
}

}  // namespace hsk
