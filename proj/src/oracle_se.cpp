#include "hsk/oracle_se.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hsk {

std::vector<Index> large_leverage_set(const Matrix& A, double nu) {
  if (!(nu > 0.0 && nu <= 1.0)) throw ValidationError("large_leverage_set: nu must lie in (0, 1]");
  const Vector tau = leverage_scores(A);
  std::vector<Index> out;
  for (Index i = 0; i < tau.size(); ++i)
    if (tau(i) >= nu) out.push_back(i);
  return out;
}

std::vector<Index> top_leverage_rows(const Matrix& A, Index k) {
  if (k < 0 || k > A.rows()) throw ValidationError("top_leverage_rows: k out of range");
  const Vector tau = leverage_scores(A);
  std::vector<Index> order(static_cast<std::size_t>(A.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return tau(a) > tau(b); });
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

SketchMatrix make_oracle_sketch(Index n, std::vector<Index> kept, Index m, Rng& rng) {
  if (m < 1) throw ValidationError("oracle sketch: m must be >= 1");
  std::sort(kept.begin(), kept.end());
  if (std::adjacent_find(kept.begin(), kept.end()) != kept.end())
    throw ValidationError("oracle sketch: duplicate kept row");
  if (!kept.empty() && (kept.front() < 0 || kept.back() >= n)) throw ValidationError("oracle sketch: kept row out of range");
  const Index rest = n - static_cast<Index>(kept.size());
  CountSketchType inner = rest > 0 ? random_countsketch(m, rest, rng) : CountSketchType{};
  return SketchMatrix::oracle_split(n, std::move(kept), std::move(inner));
}

double embedding_distortion(const SketchMatrix& S, const Matrix& A) {
  const Matrix U = orthonormal_basis(A);
  const Matrix SU = S.apply(U);
  Matrix M = SU.transpose() * SU;
  M.diagonal().array() -= 1.0;
  return Eigen::SelfAdjointEigenSolver<Matrix>(M, Eigen::EigenvaluesOnly).eigenvalues().cwiseAbs().maxCoeff();
}

double embedding_epsilon(const SketchMatrix& S, const Matrix& A) {
  const Matrix U = orthonormal_basis(A);
  const Matrix SU = S.apply(U);
  const Vector s = singular_values(SU);
  double eps = SU.rows() < U.cols() ? 1.0 : 0.0;
  for (Index i = 0; i < s.size(); ++i) eps = std::max(eps, std::abs(s(i) - 1.0));
  return eps;
}

OracleParameters oracle_parameters(Index d, double eps, double delta, double constant) {
  if (d < 1 || !(eps > 0.0 && eps < 1.0) || !(constant > 0.0)) throw ValidationError("oracle parameters: invalid input");
  OracleParameters p;
  p.nu = eps / static_cast<double>(d);
  if (delta <= 0.0) {
    const double l = std::log(static_cast<double>(d) / eps);
    delta = eps * eps / (static_cast<double>(d) * l * l);
  }
  if (!(delta < 1.0)) throw ValidationError("oracle parameters: delta must be < 1");
  p.delta = delta;
  const double le = std::log(1.0 / eps);
  p.m = static_cast<Index>(std::ceil(constant * (static_cast<double>(d) / (eps * eps)) * (le * le + std::log(1.0 / delta))));
  return p;
}

std::string to_string(OracleBudget budget) { return budget == OracleBudget::Total ? "total" : "extra"; }

OracleBudget oracle_budget_from_string(const std::string& name) {
  if (name == "total") return OracleBudget::Total;
  if (name == "extra") return OracleBudget::Extra;
  throw ValidationError("unknown oracle budget '" + name + "' (expected total or extra)");
}

RowSplit oracle_row_split(Index m, Index d, OracleBudget budget) {
  if (budget == OracleBudget::Extra) return RowSplit{m / 5, m};
  const Index kept = std::max<Index>(0, std::min(m / 5, m - d));
  return RowSplit{kept, m - kept};
}

std::vector<ExperimentRecord> table1_experiment(const std::vector<Task>& tasks, const std::vector<Index>& m_list,
                                                const Table1Options& options) {
  if (tasks.empty()) throw ValidationError("table1: empty task set");
  const Index n = tasks.front().n(), d = tasks.front().d();
  for (const Task& t : tasks) {
    if (t.n() != n || t.d() != d || t.targets() != 1) throw ValidationError("table1: tasks must share (n, d) and have vector targets");
  }
  for (Index m : m_list)
    if (m < d) throw ValidationError("table1: every m must be >= d");

  struct Cached {
    Vector lev;
    double ls_residual;
    std::vector<Index> order;  // rows by decreasing leverage
  };
  std::vector<Cached> cache;
  for (const Task& t : tasks) {
    Cached c;
    c.lev = leverage_scores(t.A);
    const Matrix x = t.A.colPivHouseholderQr().solve(t.b);
    c.ls_residual = (t.A * x - t.b).norm();
    c.order.resize(static_cast<std::size_t>(n));
    std::iota(c.order.begin(), c.order.end(), 0);
    std::stable_sort(c.order.begin(), c.order.end(), [&](Index a, Index b) { return c.lev(a) > c.lev(b); });
    cache.push_back(std::move(c));
  }

  std::vector<ExperimentRecord> out;
  for (Index m : m_list) {
    const RowSplit split = options.with_oracle ? oracle_row_split(m, d, options.budget) : RowSplit{0, m};
    for (std::size_t trial = 0; trial < options.trials; ++trial) {
      Rng rng(child_seed(options.seed, trial));
      double excess = 0.0, raw = 0.0;
      std::size_t ok = 0, failed = 0;
      for (std::size_t k = 0; k < tasks.size(); ++k) {
        const Task& t = tasks[k];
        std::vector<Index> kept;
        if (options.with_oracle)
          kept.assign(cache[k].order.begin(), cache[k].order.begin() + std::min<Index>(split.identity_rows, n));
        const SketchMatrix S = options.with_oracle ? make_oracle_sketch(n, std::move(kept), split.sketch_rows, rng)
                                                   : make_countsketch(m, n, rng);
        const Matrix SA = S.apply(t.A);
        if (SA.rows() < d || !full_column_rank(SA)) {
          ++failed;
          continue;
        }
        const Matrix x = pseudo_inverse(SA) * S.apply(t.b);
        const double residual = (t.A * x - t.b).norm();
        raw += residual;
        excess += residual - cache[k].ls_residual;
        ++ok;
      }
      ExperimentRecord r;
      r.experiment = "oracle-se";
      r.dataset = options.dataset;
      r.sketch = options.with_oracle ? "oracle" : "countsketch";
      r.m = m;
      r.round = 0;
      r.trial = trial;
      r.error = ok ? excess / static_cast<double>(ok) : std::numeric_limits<double>::quiet_NaN();
      r.extra = "budget=" + to_string(options.budget) + ";identity_rows=" + std::to_string(split.identity_rows) +
                ";countsketch_rows=" + std::to_string(split.sketch_rows) + ";failed=" + std::to_string(failed) +
                ";raw=" + format_double(ok ? raw / static_cast<double>(ok) : std::numeric_limits<double>::quiet_NaN());
      out.push_back(std::move(r));
    }
  }
  return out;
}

Dataset gen_leverage_dataset(Index n, Index d, double eps, double sigma, double tau, std::size_t count, Rng& rng) {
  if (d < 1 || !(eps > 0.0) || sigma < 0.0 || count < 1) throw ValidationError("leverage generator: invalid parameters");
  const Index r = static_cast<Index>(std::ceil(static_cast<double>(d) / eps - 1e-9));
  if (r >= n || r < d) throw ValidationError("leverage generator: need d <= ceil(d / eps) < n");
  if (tau <= 0.0) tau = static_cast<double>(r) / (10.0 * static_cast<double>(n));

  Dataset ds;
  ds.family = "leverage-synthetic";
  ds.params = nlohmann::json{{"n", n}, {"d", d}, {"eps", eps}, {"sigma", sigma}, {"tau", tau}, {"heavy_rows", r}};
  std::uniform_real_distribution<double> log_s(std::log(0.1), std::log(10.0));
  for (std::size_t k = 0; k < count; ++k) {
    Matrix stacked(n, d);
    stacked.topRows(r) = orthonormal_basis(gaussian_matrix(r, d, rng));
    stacked.bottomRows(n - r) = gaussian_matrix(n - r, d, rng, tau);
    const Matrix U = orthonormal_basis(stacked);
    const Matrix V = orthonormal_basis(gaussian_matrix(d, d, rng));
    Vector s(d);
    for (Index i = 0; i < d; ++i) s(i) = std::exp(log_s(rng));
    Task t;
    t.id = "task_" + std::to_string(k);
    t.A = U * s.asDiagonal() * V.transpose();
    const Matrix x = gaussian_matrix(d, 1, rng);
    t.b = t.A * x + gaussian_matrix(n, 1, rng, sigma);
    t.constraint = Free{};
    ds.train.push_back(std::move(t));
    ds.truth.push_back(x);
  }
  return ds;
}

}  // namespace hsk
