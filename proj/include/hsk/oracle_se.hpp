#pragma once

#include "hsk/data_io.hpp"
#include "hsk/sketch.hpp"
#include "hsk/task.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hsk {

/// Rows with exact leverage score >= nu, 0-based and sorted.
std::vector<Index> large_leverage_set(const Matrix& A, double nu);

/// The k rows of largest leverage score (ties to the lower index), returned sorted.
std::vector<Index> top_leverage_rows(const Matrix& A, Index k);

/// Identity on the rows in `kept`, a fresh m-row CountSketch on the remaining rows.
/// Output rows: kept rows in sorted order, then the CountSketch rows. When every row is
/// kept the CountSketch block is empty.
SketchMatrix make_oracle_sketch(Index n, std::vector<Index> kept, Index m, Rng& rng);

/// ||(SU)^T (SU) - I||_op for an orthonormal basis U of colspace(A).
double embedding_distortion(const SketchMatrix& S, const Matrix& A);

/// Smallest eps with (1 - eps)||Ax|| <= ||SAx|| <= (1 + eps)||Ax||, i.e. max |sigma_i(SU) - 1|.
double embedding_epsilon(const SketchMatrix& S, const Matrix& A);

struct OracleParameters {
  double nu = 0.0;
  Index m = 0;
  double delta = 0.0;
};

/// Threshold and CountSketch size for an eps-embedding with failure probability delta:
///   nu = eps / d,  m = ceil(c * (d / eps^2) * (log^2(1/eps) + log(1/delta))).
/// Passing delta <= 0 selects delta = eps^2 / (d * log^2(d / eps)).
OracleParameters oracle_parameters(Index d, double eps, double delta, double constant = 1.0);

/// Row accounting for the oracle runs: Total keeps m rows overall (|I| = min(m/5, m - d) identity
/// rows plus the rest CountSketch); Extra adds |I| = m/5 identity rows to an m-row CountSketch.
enum class OracleBudget { Total, Extra };
std::string to_string(OracleBudget budget);
OracleBudget oracle_budget_from_string(const std::string& name);

struct RowSplit {
  Index identity_rows = 0;
  Index sketch_rows = 0;
};
RowSplit oracle_row_split(Index m, Index d, OracleBudget budget);

struct Table1Options {
  bool with_oracle = false;
  OracleBudget budget = OracleBudget::Extra;
  std::size_t trials = 10;
  std::uint64_t seed = 0;
  std::string dataset = "leverage-synthetic";
};

/// Sketch-and-solve least squares on every task for each (m, trial). One record per (m, trial):
/// error is the mean over tasks of ||A x_s - b|| - ||A x_ls - b|| with x_s = (SA)^+ S b; the
/// extra field carries the raw mean residual, the row split and the failed-task count.
/// Trial t of each m uses the generator child_seed(seed, t), so oracle and plain runs pair up.
std::vector<ExperimentRecord> table1_experiment(const std::vector<Task>& tasks, const std::vector<Index>& m_list,
                                                const Table1Options& options);

/// Planted heavy rows: r = ceil(d / eps) orthonormal rows stacked on N(0, tau^2) rows,
/// orthonormalized, then A = U diag(s) V^T with s log-uniform on [0.1, 10] and
/// b = A x* + N(0, sigma^2). tau <= 0 selects r / (10 n). The heavy rows are rows 0..r-1.
Dataset gen_leverage_dataset(Index n, Index d, double eps, double sigma, double tau, std::size_t count, Rng& rng);

}  // namespace hsk
