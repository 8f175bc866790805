#pragma once

#include "hsk/fastreg.hpp"
#include "hsk/ihs.hpp"
#include "hsk/sketch.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace hsk {

enum class LossKind { IhsRound, CondNumber };
enum class Optimizer { Sgd, Adam };

std::string to_string(LossKind kind);
std::string to_string(Optimizer optimizer);

struct TrainConfig {
  std::size_t steps = 200;
  double alpha = 1e-2;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  /// Central-difference half width, relative to max(1, |v_i|).
  double fd_step = 1e-4;
  LossKind loss = LossKind::IhsRound;
  /// Sgd is the plain update v <- v - alpha * g; Adam rescales it per coordinate.
  Optimizer optimizer = Optimizer::Adam;
  InnerSolverOptions inner;
  /// Inner solver used for the perturbed evaluations of the finite-difference sweep.
  InnerSolverOptions fd_inner{5000, 1e-14};

  /// Throws ValidationError.
  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& record);

/// Loss value returned for a rank-deficient S*A.
inline constexpr double kSentinelLoss = 1e12;

/// A loss over a fixed list of training instances, evaluated one instance at a time.
class SketchLoss {
 public:
  virtual ~SketchLoss() = default;
  virtual std::size_t instances() const = 0;

  /// Loss of sketch S on instance k.
  virtual double value(const CountSketchType& S, std::size_t k) = 0;

  /// Losses that see S only through S * A_k return A_k here; the gradient loop then
  /// perturbs single rows of S * A_k instead of re-applying the sketch.
  virtual const Matrix* data(std::size_t) const { return nullptr; }
  virtual double value_sketched(const Matrix& SA, std::size_t k);

  /// Called with the unperturbed S * A_k before its finite-difference sweep.
  virtual void prepare(const Matrix&, std::size_t) {}
};

/// One IHS round started from a fixed x_t.
struct RoundContext {
  const Task* task = nullptr;
  Matrix x_t;
};

/// 1/2 ||A (x' - x_t)||^2 - <A^T (b - A x_t), x' - x_t> (+ lambda ||x'||_1), where x' solves
/// the sketched subproblem. Caches A^T A and the gradient term per instance. Perturbed
/// solves (value_sketched) use `fd_options` and warm start from the unperturbed solution.
class IhsRoundLoss final : public SketchLoss {
 public:
  IhsRoundLoss(std::vector<RoundContext> contexts, InnerSolverOptions options,
               std::optional<InnerSolverOptions> fd_options = std::nullopt);
  std::size_t instances() const override { return items_.size(); }
  double value(const CountSketchType& S, std::size_t k) override;
  const Matrix* data(std::size_t k) const override { return &items_[k].context.task->A; }
  double value_sketched(const Matrix& SA, std::size_t k) override;
  void prepare(const Matrix& SA, std::size_t k) override;

 private:
  struct Item {
    RoundContext context;
    Matrix gram;
    Matrix g;
    Matrix warm;
  };
  double evaluate(const Matrix& SA, std::size_t k, const InnerSolverOptions& options, const Matrix* warm);
  std::vector<Item> items_;
  InnerSolverOptions options_;
  InnerSolverOptions fd_options_;
};

/// kappa(A R^{-1}) with R from the QR of S*A, computed as kappa(R_A R^{-1}) for the cached
/// R factor R_A of A.
class CondNumberLoss final : public SketchLoss {
 public:
  explicit CondNumberLoss(std::vector<const Matrix*> matrices);
  std::size_t instances() const override { return matrices_.size(); }
  double value(const CountSketchType& S, std::size_t k) override;
  const Matrix* data(std::size_t k) const override { return matrices_[k]; }
  double value_sketched(const Matrix& SA, std::size_t k) override;

 private:
  std::vector<const Matrix*> matrices_;
  std::vector<Matrix> r_factors_;
};

double loss_ihs_round(const SketchMatrix& S, const Task& task, const Matrix& x_t,
                      const InnerSolverOptions& options = {});
double loss_cond_number(const SketchMatrix& S, const Matrix& A);

struct GradientResult {
  Vector gradient;
  double loss = 0.0;  // mean unperturbed batch loss
  std::size_t failures = 0;
};

/// Central finite differences over the values of S, averaged over the batch. Positions are
/// never perturbed. A coordinate whose evaluation throws contributes 0 and counts a failure.
GradientResult grad_values_fd(SketchLoss& loss, const CountSketchType& S, const std::vector<std::size_t>& batch,
                              double fd_step);

struct TrainedRound {
  std::size_t round = 0;
  CountSketchType sketch;
  /// Mean loss over the whole training set before every step and after the last one.
  std::vector<double> loss_trace;
  std::size_t failures = 0;
  TrainConfig config;
};

/// Gradient descent on the values of a random CountSketch of m rows (init from config.seed).
TrainedRound train_sketch(SketchLoss& loss, Index n, Index m, const TrainConfig& config);

/// Training families accepted by the trainer and the CLI.
enum class TrainTask { IhsLasso, IhsSvm, IhsNuclear, FastReg };
std::string to_string(TrainTask task);
TrainTask train_task_from_string(const std::string& name);

struct TrainedSketchSequence {
  TrainTask task = TrainTask::IhsLasso;
  Index m = 0;
  Index n = 0;
  bool shared_positions = false;
  std::vector<TrainedRound> rounds;

  /// Learned sketch for round t; rounds past the end reuse the last one.
  const CountSketchType& sketch_for_round(std::size_t t) const;
};

nlohmann::json sequence_to_json(const TrainedSketchSequence& sequence);
TrainedSketchSequence sequence_from_json(const nlohmann::json& record);
void save_sequence(const TrainedSketchSequence& sequence, const std::string& path);
TrainedSketchSequence load_sequence(const std::string& path);

/// x_t for every task after replaying rounds 1..t with the given learned sketches
/// (t = sketches.size()). IHS tasks replay the sketched update, t = 0 gives the projected
/// zero point. For fastreg the replay is Newton with fast_regression_solve.
std::vector<Matrix> generate_round_data(const std::vector<Task>& tasks, const std::vector<CountSketchType>& sketches,
                                        TrainTask kind, const InnerSolverOptions& inner = {},
                                        double fastreg_eps = 1e-6);

/// Trains `rounds` sketches in sequence; round t + 1 trains on iterates produced by rounds 1..t.
/// Round t uses the seed child_seed(config.seed, t).
TrainedSketchSequence train_sequence(const std::vector<Task>& tasks, TrainTask kind, std::size_t rounds, Index m,
                                     const TrainConfig& config);

}  // namespace hsk
