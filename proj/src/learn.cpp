#include "hsk/learn.hpp"
#include "hsk/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace hsk {

using nlohmann::json;

std::string to_string(LossKind kind) { return kind == LossKind::IhsRound ? "ihs-round" : "cond-number"; }
std::string to_string(Optimizer optimizer) { return optimizer == Optimizer::Sgd ? "sgd" : "adam"; }

void TrainConfig::validate() const {
  if (!(alpha >= 0.0)) throw ValidationError("train: alpha must be >= 0");
  if (!(fd_step > 0.0)) throw ValidationError("train: fd_step must be > 0");
  if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  for (const auto& o : {inner, fd_inner})
    if (o.max_iterations < 1 || !(o.tolerance > 0.0)) throw ValidationError("train: invalid inner solver options");
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"steps", c.steps},
              {"alpha", c.alpha},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"fd_step", c.fd_step},
              {"loss", to_string(c.loss)},
              {"optimizer", to_string(c.optimizer)},
              {"inner_max_iterations", c.inner.max_iterations},
              {"inner_tolerance", c.inner.tolerance},
              {"fd_inner_max_iterations", c.fd_inner.max_iterations},
              {"fd_inner_tolerance", c.fd_inner.tolerance}};
}

TrainConfig train_config_from_json(const json& r) {
  try {
    TrainConfig c;
    c.steps = r.at("steps").get<std::size_t>();
    c.alpha = r.at("alpha").get<double>();
    c.batch_size = r.at("batch_size").get<std::size_t>();
    c.seed = r.at("seed").get<std::uint64_t>();
    c.fd_step = r.at("fd_step").get<double>();
    const std::string loss = r.at("loss").get<std::string>();
    if (loss != "ihs-round" && loss != "cond-number") throw ParseError("train config: unknown loss " + loss);
    c.loss = loss == "ihs-round" ? LossKind::IhsRound : LossKind::CondNumber;
    const std::string opt = r.value("optimizer", std::string("adam"));
    if (opt != "sgd" && opt != "adam") throw ParseError("train config: unknown optimizer " + opt);
    c.optimizer = opt == "sgd" ? Optimizer::Sgd : Optimizer::Adam;
    c.inner.max_iterations = r.value("inner_max_iterations", c.inner.max_iterations);
    c.inner.tolerance = r.value("inner_tolerance", c.inner.tolerance);
    c.fd_inner.max_iterations = r.value("fd_inner_max_iterations", c.fd_inner.max_iterations);
    c.fd_inner.tolerance = r.value("fd_inner_tolerance", c.fd_inner.tolerance);
    return c;
  } catch (const json::exception& e) {
    throw ParseError(std::string("train config: ") + e.what());
  }
}

namespace {

Matrix apply_values(const CountSketchType& S, const Matrix& A) {
  if (S.cols() != A.rows()) throw DimensionError("sketch and matrix disagree in n");
  Matrix out = Matrix::Zero(S.rows, A.cols());
  for (Index i = 0; i < S.cols(); ++i) {
    const double v = S.values(i);
    if (v != 0.0) out.row(S.positions[static_cast<std::size_t>(i)]) += v * A.row(i);
  }
  return out;
}

}  // namespace

double SketchLoss::value_sketched(const Matrix&, std::size_t) {
  throw Error("this loss has no sketched-matrix evaluation");
}

IhsRoundLoss::IhsRoundLoss(std::vector<RoundContext> contexts, InnerSolverOptions options,
                           std::optional<InnerSolverOptions> fd_options)
    : options_(options), fd_options_(fd_options.value_or(options)) {
  items_.reserve(contexts.size());
  for (auto& c : contexts) {
    if (!c.task) throw ValidationError("ihs loss: missing task");
    const Task& t = *c.task;
    if (c.x_t.rows() != t.d() || c.x_t.cols() != t.targets()) throw DimensionError("ihs loss: x_t shape");
    Item item;
    item.gram = t.A.transpose() * t.A;
    item.g = t.A.transpose() * (t.b - t.A * c.x_t);
    item.context = std::move(c);
    items_.push_back(std::move(item));
  }
}

double IhsRoundLoss::evaluate(const Matrix& SA, std::size_t k, const InnerSolverOptions& options,
                              const Matrix* warm) {
  const Item& it = items_.at(k);
  const Task& t = *it.context.task;
  InnerSolveResult r;
  try {
    r = solve_quadratic_model(SA, it.g, it.context.x_t, t.constraint, options, warm);
  } catch (const RankDeficientError&) {
    return kSentinelLoss;
  }
  const Matrix dx = r.x - it.context.x_t;
  double loss = 0.5 * inner(dx, it.gram * dx) - inner(it.g, dx);
  if (const auto* l1 = std::get_if<L1Penalty>(&t.constraint)) loss += l1->lambda * r.x.cwiseAbs().sum();
  return loss;
}

double IhsRoundLoss::value(const CountSketchType& S, std::size_t k) {
  return evaluate(apply_values(S, items_.at(k).context.task->A), k, options_, nullptr);
}

double IhsRoundLoss::value_sketched(const Matrix& SA, std::size_t k) {
  const Matrix& warm = items_.at(k).warm;
  return evaluate(SA, k, fd_options_, warm.size() > 0 ? &warm : nullptr);
}

void IhsRoundLoss::prepare(const Matrix& SA, std::size_t k) {
  Item& it = items_.at(k);
  it.warm.resize(0, 0);
  try {
    it.warm = solve_quadratic_model(SA, it.g, it.context.x_t, it.context.task->constraint, fd_options_).x;
  } catch (const RankDeficientError&) {
  }
}

CondNumberLoss::CondNumberLoss(std::vector<const Matrix*> matrices) : matrices_(std::move(matrices)) {
  r_factors_.reserve(matrices_.size());
  for (const Matrix* A : matrices_) {
    if (!A || !full_column_rank(*A)) throw RankDeficientError("cond-number loss: A must have full column rank");
    r_factors_.push_back(qr_r_factor(*A));
  }
}

double CondNumberLoss::value(const CountSketchType& S, std::size_t k) {
  return value_sketched(apply_values(S, *matrices_.at(k)), k);
}

double CondNumberLoss::value_sketched(const Matrix& SA, std::size_t k) {
  if (SA.rows() < SA.cols() || !full_column_rank(SA)) return kSentinelLoss;
  const double kappa = condition_number(right_solve_upper(r_factors_.at(k), qr_r_factor(SA)));
  return std::isfinite(kappa) ? kappa : kSentinelLoss;
}

double loss_ihs_round(const SketchMatrix& S, const Task& task, const Matrix& x_t, const InnerSolverOptions& options) {
  IhsRoundLoss loss({RoundContext{&task, x_t}}, options);
  return loss.value_sketched(S.apply(task.A), 0);
}

double loss_cond_number(const SketchMatrix& S, const Matrix& A) {
  CondNumberLoss loss({&A});
  return loss.value_sketched(S.apply(A), 0);
}

GradientResult grad_values_fd(SketchLoss& loss, const CountSketchType& S, const std::vector<std::size_t>& batch,
                              double fd_step) {
  if (!(fd_step > 0.0)) throw ValidationError("fd gradient: fd_step must be > 0");
  if (batch.empty()) throw ValidationError("fd gradient: empty batch");
  const Index n = S.cols();
  GradientResult out;
  out.gradient = Vector::Zero(n);

  for (std::size_t k : batch) {
    if (const Matrix* A = loss.data(k)) {
      if (A->rows() != n) throw DimensionError("fd gradient: instance has the wrong number of rows");
      Matrix SA = apply_values(S, *A);
      loss.prepare(SA, k);
      out.loss += loss.value_sketched(SA, k);
      for (Index i = 0; i < n; ++i) {
        const double h = fd_step * std::max(1.0, std::abs(S.values(i)));
        const Index row = S.positions[static_cast<std::size_t>(i)];
        const Eigen::RowVectorXd saved = SA.row(row);
        try {
          SA.row(row) = saved + h * A->row(i);
          const double up = loss.value_sketched(SA, k);
          SA.row(row) = saved - h * A->row(i);
          const double down = loss.value_sketched(SA, k);
          out.gradient(i) += (up - down) / (2.0 * h);
        } catch (const Error&) {
          ++out.failures;
        }
        SA.row(row) = saved;
      }
    } else {
      CountSketchType probe = S;
      out.loss += loss.value(probe, k);
      for (Index i = 0; i < n; ++i) {
        const double v = S.values(i);
        const double h = fd_step * std::max(1.0, std::abs(v));
        try {
          probe.values(i) = v + h;
          const double up = loss.value(probe, k);
          probe.values(i) = v - h;
          const double down = loss.value(probe, k);
          out.gradient(i) += (up - down) / (2.0 * h);
        } catch (const Error&) {
          ++out.failures;
        }
        probe.values(i) = v;
      }
    }
  }
  out.gradient /= static_cast<double>(batch.size());
  out.loss /= static_cast<double>(batch.size());
  return out;
}

namespace {

double mean_loss(SketchLoss& loss, const CountSketchType& S) {
  double total = 0.0;
  for (std::size_t k = 0; k < loss.instances(); ++k) total += loss.value(S, k);
  return total / static_cast<double>(loss.instances());
}

}  // namespace

TrainedRound train_sketch(SketchLoss& loss, Index n, Index m, const TrainConfig& config) {
  config.validate();
  const std::size_t count = loss.instances();
  if (count == 0) throw ValidationError("train: empty training set");
  if (m < 1 || n < 1) throw ValidationError("train: sketch dimensions must be positive");

  Rng rng(config.seed);
  TrainedRound out;
  out.config = config;
  out.sketch = random_countsketch(m, n, rng);

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;
  const std::size_t batch_size = std::min(config.batch_size, count);

  Vector first = Vector::Zero(n), second = Vector::Zero(n);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  out.loss_trace.push_back(mean_loss(loss, out.sketch));
  for (std::size_t step = 1; step <= config.steps; ++step) {
    std::vector<std::size_t> batch;
    while (batch.size() < batch_size) {
      if (cursor == count) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    const GradientResult g = grad_values_fd(loss, out.sketch, batch, config.fd_step);
    out.failures += g.failures;
    if (config.optimizer == Optimizer::Sgd) {
      out.sketch.values -= config.alpha * g.gradient;
    } else {
      first = beta1 * first + (1.0 - beta1) * g.gradient;
      second = beta2 * second + (1.0 - beta2) * g.gradient.cwiseAbs2();
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      out.sketch.values.array() -=
          config.alpha * (first.array() / c1) / ((second.array() / c2).sqrt() + eps);
    }
    out.loss_trace.push_back(mean_loss(loss, out.sketch));
  }
  return out;
}

std::string to_string(TrainTask task) {
  switch (task) {
    case TrainTask::IhsLasso: return "ihs-lasso";
    case TrainTask::IhsSvm: return "ihs-svm";
    case TrainTask::IhsNuclear: return "ihs-nuclear";
    case TrainTask::FastReg: return "fastreg";
  }
  return "unknown";
}

TrainTask train_task_from_string(const std::string& name) {
  for (TrainTask t : {TrainTask::IhsLasso, TrainTask::IhsSvm, TrainTask::IhsNuclear, TrainTask::FastReg})
    if (to_string(t) == name) return t;
  throw ValidationError("unknown training task '" + name + "'");
}

const CountSketchType& TrainedSketchSequence::sketch_for_round(std::size_t t) const {
  if (rounds.empty()) throw ValidationError("trained sequence has no rounds");
  const std::size_t i = std::min(std::max<std::size_t>(t, 1), rounds.size());
  return rounds[i - 1].sketch;
}

json sequence_to_json(const TrainedSketchSequence& s) {
  json rounds = json::array();
  for (const auto& r : s.rounds) {
    json sketch = countsketch_to_json(r.sketch);
    sketch["variant"] = "learned";
    rounds.push_back(json{{"round", r.round},
                          {"sketch", std::move(sketch)},
                          {"loss_trace", r.loss_trace},
                          {"failures", r.failures},
                          {"config", train_config_to_json(r.config)}});
  }
  return json{{"task", to_string(s.task)}, {"m", s.m}, {"n", s.n}, {"shared_positions", s.shared_positions},
              {"rounds", std::move(rounds)}};
}

TrainedSketchSequence sequence_from_json(const json& r) {
  TrainedSketchSequence s;
  try {
    s.task = train_task_from_string(r.at("task").get<std::string>());
    s.m = r.at("m").get<Index>();
    s.n = r.at("n").get<Index>();
    s.shared_positions = r.value("shared_positions", false);
    std::size_t expected = 1;
    for (const json& item : r.at("rounds")) {
      TrainedRound round;
      round.round = item.at("round").get<std::size_t>();
      if (round.round != expected++) throw ParseError("trained sequence: round indices must be contiguous from 1");
      round.sketch = countsketch_from_json(item.at("sketch"));
      if (round.sketch.rows != s.m || round.sketch.cols() != s.n)
        throw ParseError("trained sequence: sketch shape differs from the sequence header");
      round.loss_trace = item.at("loss_trace").get<std::vector<double>>();
      round.failures = item.value("failures", std::size_t{0});
      round.config = train_config_from_json(item.at("config"));
      s.rounds.push_back(std::move(round));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("trained sequence: ") + e.what());
  } catch (const ValidationError& e) {
    throw ParseError(std::string("trained sequence: ") + e.what());
  }
  return s;
}

void save_sequence(const TrainedSketchSequence& sequence, const std::string& path) {
  ensure_parent_directory(path);
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << sequence_to_json(sequence).dump(1) << '\n';
}

TrainedSketchSequence load_sequence(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  json record;
  try {
    in >> record;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return sequence_from_json(record);
}

std::vector<Matrix> generate_round_data(const std::vector<Task>& tasks, const std::vector<CountSketchType>& sketches,
                                        TrainTask kind, const InnerSolverOptions& inner, double fastreg_eps) {
  std::vector<Matrix> out;
  out.reserve(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Task& task = tasks[i];
    Matrix x = prox_or_project(task.constraint, task.zero_point(), 0.0);
    for (std::size_t t = 0; t < sketches.size(); ++t) {
      const SketchMatrix S = SketchMatrix::countsketch(sketches[t]);
      if (kind == TrainTask::FastReg) {
        Rng rng(child_seed(t + 1, i));
        const Vector y = task.A.transpose() * (task.A * x.col(0) - task.b.col(0));
        x.col(0) -= fast_regression_solve(&S, nullptr, task.A, y, fastreg_eps, rng).x;
      } else {
        x = solve_sketched_subproblem(S.apply(task.A), task, x, inner).x;
      }
    }
    out.push_back(std::move(x));
  }
  return out;
}

TrainedSketchSequence train_sequence(const std::vector<Task>& tasks, TrainTask kind, std::size_t rounds, Index m,
                                     const TrainConfig& config) {
  if (tasks.empty()) throw ValidationError("train: empty training set");
  TrainedSketchSequence seq;
  seq.task = kind;
  seq.m = m;
  seq.n = tasks.front().n();
  for (const Task& t : tasks) {
    t.validate();
    if (t.n() != seq.n) throw ValidationError("train: all tasks must share n");
  }
  const bool cond = kind == TrainTask::FastReg || config.loss == LossKind::CondNumber;

  std::vector<CountSketchType> learned;
  for (std::size_t t = 1; t <= rounds; ++t) {
    TrainConfig cfg = config;
    cfg.seed = child_seed(config.seed, t);
    cfg.loss = cond ? LossKind::CondNumber : LossKind::IhsRound;
    TrainedRound round;
    if (cond) {
      std::vector<const Matrix*> matrices;
      for (const Task& task : tasks) matrices.push_back(&task.A);
      CondNumberLoss loss(std::move(matrices));
      round = train_sketch(loss, seq.n, m, cfg);
    } else {
      const std::vector<Matrix> xs = generate_round_data(tasks, learned, kind, config.inner);
      std::vector<RoundContext> contexts;
      for (std::size_t i = 0; i < tasks.size(); ++i) contexts.push_back(RoundContext{&tasks[i], xs[i]});
      IhsRoundLoss loss(std::move(contexts), config.inner, config.fd_inner);
      round = train_sketch(loss, seq.n, m, cfg);
    }
    round.round = t;
    learned.push_back(round.sketch);
    seq.rounds.push_back(std::move(round));
  }
  return seq;
}

}  // namespace hsk
