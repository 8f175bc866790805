#pragma once

#include "hsk/ihs.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

namespace hsk {

/// A generated or ingested collection of tasks with its provenance.
struct Dataset {
  std::string family;  // gaussian-mixture-svm | lowrank-matrix | leverage-synthetic | gaussian-regression | csv-chunked
  nlohmann::json params = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::vector<Task> train;
  std::vector<Task> test;
  /// Planted solution per task (train then test) when the generator has one.
  std::vector<Matrix> truth;

  const std::vector<Task>& split(const std::string& name) const;
};

/// Two-component Gaussian mixture in R^n with means uniform in [-3, 3]^n, d samples per
/// task, assembled with build_svm_dual.
std::vector<Task> gen_gaussian_mixture_svm(Index n, Index d, double C, std::size_t count, Rng& rng);

struct LowRankSet {
  std::vector<Task> tasks;
  std::vector<Matrix> truth;
  std::vector<bool> rescaled;
};

/// B = A X* + W with A, factors of X* and W Gaussian; X* has rank <= r and is scaled onto
/// the nuclear ball of radius rho only when it lies outside.
LowRankSet gen_lowrank_matrix(Index n, Index d1, Index d2, Index r, double rho, double sigma, std::size_t count,
                              Rng& rng);

/// b = A x* + N(0, sigma^2) with Gaussian A and x*; tasks carry the given constraint.
std::vector<Task> gen_gaussian_regression(Index n, Index d, double sigma, std::size_t count, Rng& rng,
                                          const ConstraintSpec& constraint = Free{});

// ---- CSV --------------------------------------------------------------------------------

/// Numeric CSV without header, one matrix row per line, shortest round-trip formatting.
void write_matrix_csv(const Matrix& M, const std::string& path);
/// Throws ParseError naming the 1-based row and column of a bad cell or a ragged row.
Matrix read_matrix_csv(const std::string& path, bool skip_header = false);

/// Shortest decimal representation that parses back to exactly x.
std::string format_double(double x);

/// Splits a numeric CSV into contiguous chunks of rows_per_chunk rows (a trailing partial
/// chunk is dropped). The last target_cols columns form b. Chunk order is shuffled with rng
/// and the first round(train_frac * chunks) chunks (at least one, leaving one) become train.
Dataset chunk_csv(const std::string& path, Index rows_per_chunk, Index target_cols, double train_frac, Rng& rng,
                  const ConstraintSpec& constraint = Free{}, bool skip_header = false);

/// Directory layout: manifest.json plus <task id>_A.csv and <task id>_b.csv per task.
void save_dataset(const Dataset& dataset, const std::string& dir);
Dataset load_dataset(const std::string& dir);

// ---- Results ----------------------------------------------------------------------------

struct ExperimentRecord {
  std::string experiment;
  std::string dataset;
  std::string sketch;
  Index m = 0;
  std::size_t round = 0;
  std::size_t trial = 0;
  double error = 0.0;
  double time_ms = 0.0;
  std::string extra;

  bool operator==(const ExperimentRecord&) const = default;
};

inline constexpr const char* kResultsHeader = "experiment,dataset,sketch,m,round,trial,error,time_ms,extra";

/// Creates the parent directory of an output path when missing.
void ensure_parent_directory(const std::string& path);

std::string format_record(const ExperimentRecord& record);

/// Writes the header and the records, replacing the file.
void write_results(const std::vector<ExperimentRecord>& records, const std::string& path);
/// Throws ParseError on a header mismatch or a malformed line.
std::vector<ExperimentRecord> read_results(const std::string& path);

/// Line-atomic appender shared by concurrent workers. Writes the header when the file is new or empty.
class ResultWriter {
 public:
  explicit ResultWriter(const std::string& path);
  void append(const ExperimentRecord& record);
  void append(const std::vector<ExperimentRecord>& records);

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

}  // namespace hsk
