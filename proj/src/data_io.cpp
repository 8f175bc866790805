#include "hsk/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

namespace hsk {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<Task>& Dataset::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "test") return test;
  throw ValidationError("unknown split '" + name + "' (expected train or test)");
}

namespace {

constexpr int kMaxRetries = 10;

std::string task_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03zu", prefix, i);
  return buf;
}

Vector uniform_vector(Index n, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

}  // namespace

std::vector<Task> gen_gaussian_mixture_svm(Index n, Index d, double C, std::size_t count, Rng& rng) {
  if (n < 1 || d < 1 || count < 1) throw ValidationError("svm generator: n, d and count must be >= 1");
  if (!(C > 0.0)) throw ValidationError("svm generator: C must be > 0");
  std::bernoulli_distribution coin(0.5);
  std::vector<Task> tasks;
  for (std::size_t k = 0; k < count; ++k) {
    const Vector mu0 = uniform_vector(n, -3.0, 3.0, rng);
    const Vector mu1 = uniform_vector(n, -3.0, 3.0, rng);
    Matrix A(n, d);
    Vector labels(d);
    for (Index j = 0; j < d; ++j) {
      const bool one = coin(rng);
      A.col(j) = (one ? mu1 : mu0) + gaussian_matrix(n, 1, rng);
      labels(j) = one ? 1.0 : -1.0;
    }
    Task t = build_svm_dual(A, labels, C);
    t.id = task_id("task", k);
    tasks.push_back(std::move(t));
  }
  return tasks;
}

LowRankSet gen_lowrank_matrix(Index n, Index d1, Index d2, Index r, double rho, double sigma, std::size_t count,
                              Rng& rng) {
  if (r < 1 || r > std::min(d1, d2)) throw ValidationError("lowrank generator: need 1 <= r <= min(d1, d2)");
  if (n < d1) throw ValidationError("lowrank generator: need n >= d1");
  if (!(rho > 0.0) || sigma < 0.0) throw ValidationError("lowrank generator: need rho > 0 and sigma >= 0");
  LowRankSet out;
  for (std::size_t k = 0; k < count; ++k) {
    Matrix A;
    for (int attempt = 0;; ++attempt) {
      A = gaussian_matrix(n, d1, rng);
      if (full_column_rank(A)) break;
      if (attempt + 1 == kMaxRetries) throw RankDeficientError("lowrank generator: no full-rank A after retries");
    }
    Matrix X = gaussian_matrix(d1, r, rng) * gaussian_matrix(r, d2, rng);
    const double norm = nuclear_norm(X);
    const bool rescale = norm > rho;
    if (rescale) X *= rho / norm;
    Task t;
    t.id = task_id("task", k);
    t.A = A;
    t.b = A * X + gaussian_matrix(n, d2, rng, sigma);
    t.constraint = NuclearBall{rho};
    out.tasks.push_back(std::move(t));
    out.truth.push_back(std::move(X));
    out.rescaled.push_back(rescale);
  }
  return out;
}

std::vector<Task> gen_gaussian_regression(Index n, Index d, double sigma, std::size_t count, Rng& rng,
                                          const ConstraintSpec& constraint) {
  if (n < d || d < 1) throw ValidationError("regression generator: need n >= d >= 1");
  validate(constraint);
  std::vector<Task> tasks;
  for (std::size_t k = 0; k < count; ++k) {
    Matrix A;
    for (int attempt = 0;; ++attempt) {
      A = gaussian_matrix(n, d, rng);
      if (full_column_rank(A)) break;
      if (attempt + 1 == kMaxRetries) throw RankDeficientError("regression generator: no full-rank A after retries");
    }
    const Matrix x = gaussian_matrix(d, 1, rng);
    Task t;
    t.id = task_id("task", k);
    t.b = A * x + gaussian_matrix(n, 1, rng, sigma);
    t.A = std::move(A);
    t.constraint = constraint;
    tasks.push_back(std::move(t));
  }
  return tasks;
}

// ---- CSV ----------------------------------------------------------------------------------

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(std::string_view cell, std::size_t row, std::size_t col, const std::string& where) {
  while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
  while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size())
    throw ParseError(where + ": non-numeric cell at row " + std::to_string(row) + ", column " + std::to_string(col));
  return value;
}

}  // namespace

void ensure_parent_directory(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) fs::create_directories(parent, ec);
}

void write_matrix_csv(const Matrix& M, const std::string& path) {
  ensure_parent_directory(path);
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  std::string line;
  for (Index i = 0; i < M.rows(); ++i) {
    line.clear();
    for (Index j = 0; j < M.cols(); ++j) {
      if (j) line += ',';
      line += format_double(M(i, j));
    }
    line += '\n';
    out << line;
  }
  if (!out) throw Error("write failed for " + path);
}

Matrix read_matrix_csv(const std::string& path, bool skip_header) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::vector<double> values;
  std::size_t cols = 0, rows = 0, lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (skip_header && lineno == 1) continue;
    if (line.empty() || line == "\r") continue;
    std::size_t count = 0, start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string_view cell(line.data() + start, (comma == std::string::npos ? line.size() : comma) - start);
      values.push_back(parse_double(cell, lineno, count + 1, path));
      ++count;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (rows == 0) cols = count;
    if (count != cols)
      throw ParseError(path + ": ragged row " + std::to_string(lineno) + " has " + std::to_string(count) +
                       " cells, expected " + std::to_string(cols));
    ++rows;
  }
  Matrix M(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) M(static_cast<Index>(i), static_cast<Index>(j)) = values[i * cols + j];
  return M;
}

Dataset chunk_csv(const std::string& path, Index rows_per_chunk, Index target_cols, double train_frac, Rng& rng,
                  const ConstraintSpec& constraint, bool skip_header) {
  if (rows_per_chunk < 1 || target_cols < 1) throw ValidationError("chunk_csv: rows_per_chunk and target_cols must be >= 1");
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw ValidationError("chunk_csv: train_frac must lie in (0, 1)");
  validate(constraint);
  const Matrix raw = read_matrix_csv(path, skip_header);
  if (raw.cols() <= target_cols) throw ValidationError("chunk_csv: need at least one feature column");
  if (rows_per_chunk > raw.rows()) throw ValidationError("chunk_csv: rows_per_chunk exceeds the number of rows");
  const Index chunks = raw.rows() / rows_per_chunk;
  if (chunks < 2) throw ValidationError("chunk_csv: need at least two chunks for a train/test split");
  const Index features = raw.cols() - target_cols;

  std::vector<Index> order(static_cast<std::size_t>(chunks));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const Index n_train = std::clamp<Index>(static_cast<Index>(std::llround(train_frac * static_cast<double>(chunks))),
                                          1, chunks - 1);
  std::vector<Index> train_idx(order.begin(), order.begin() + n_train), test_idx(order.begin() + n_train, order.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());

  Dataset ds;
  ds.family = "csv-chunked";
  ds.params = json{{"source", path},           {"rows_per_chunk", rows_per_chunk}, {"target_cols", target_cols},
                   {"train_frac", train_frac}, {"chunks", chunks},                 {"constraint", constraint_to_json(constraint)}};
  auto make = [&](Index c) {
    Task t;
    t.id = task_id("chunk", static_cast<std::size_t>(c));
    t.A = raw.block(c * rows_per_chunk, 0, rows_per_chunk, features);
    t.b = raw.block(c * rows_per_chunk, features, rows_per_chunk, target_cols);
    t.constraint = constraint;
    return t;
  };
  for (Index c : train_idx) ds.train.push_back(make(c));
  for (Index c : test_idx) ds.test.push_back(make(c));
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  auto entries = [&](const std::vector<Task>& tasks) {
    json list = json::array();
    for (const Task& t : tasks) {
      if (t.id.empty() || t.id.find('/') != std::string::npos) throw ValidationError("dataset: invalid task id");
      write_matrix_csv(t.A, (fs::path(dir) / (t.id + "_A.csv")).string());
      write_matrix_csv(t.b, (fs::path(dir) / (t.id + "_b.csv")).string());
      list.push_back(json{{"id", t.id}, {"constraint", constraint_to_json(t.constraint)}});
    }
    return list;
  };
  json manifest{{"family", ds.family}, {"params", ds.params}, {"seed", ds.seed},
                {"train", entries(ds.train)}, {"test", entries(ds.test)}, {"truth", !ds.truth.empty()}};
  if (!ds.truth.empty()) {
    const std::size_t total = ds.train.size() + ds.test.size();
    if (ds.truth.size() != total) throw ValidationError("dataset: one planted solution per task");
    for (std::size_t i = 0; i < total; ++i) {
      const Task& t = i < ds.train.size() ? ds.train[i] : ds.test[i - ds.train.size()];
      write_matrix_csv(ds.truth[i], (fs::path(dir) / (t.id + "_truth.csv")).string());
    }
  }
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw Error("cannot write manifest in " + dir);
  out << manifest.dump(1) << '\n';
}

Dataset load_dataset(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw Error("cannot read " + manifest_path.string());
  json manifest;
  Dataset ds;
  try {
    in >> manifest;
    ds.family = manifest.at("family").get<std::string>();
    ds.params = manifest.value("params", json::object());
    ds.seed = manifest.value("seed", std::uint64_t{0});
    auto load = [&](const json& list) {
      std::vector<Task> tasks;
      for (const json& e : list) {
        Task t;
        t.id = e.at("id").get<std::string>();
        t.A = read_matrix_csv((fs::path(dir) / (t.id + "_A.csv")).string());
        t.b = read_matrix_csv((fs::path(dir) / (t.id + "_b.csv")).string());
        t.constraint = constraint_from_json(e.at("constraint"));
        t.validate();
        tasks.push_back(std::move(t));
      }
      return tasks;
    };
    ds.train = load(manifest.at("train"));
    ds.test = load(manifest.at("test"));
    if (manifest.value("truth", false)) {
      for (const auto* split : {&ds.train, &ds.test})
        for (const Task& t : *split) ds.truth.push_back(read_matrix_csv((fs::path(dir) / (t.id + "_truth.csv")).string()));
    }
  } catch (const json::exception& e) {
    throw ParseError(manifest_path.string() + ": " + e.what());
  }
  if (ds.train.empty() && ds.test.empty()) throw ValidationError("dataset " + dir + " has no tasks");
  return ds;
}

// ---- Results ------------------------------------------------------------------------------

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t lineno, const std::string& path) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (quoted) throw ParseError(path + ": unterminated quote on line " + std::to_string(lineno));
  fields.push_back(std::move(cur));
  return fields;
}

template <class T>
T parse_integer(const std::string& s, std::size_t lineno, const std::string& path) {
  T value{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError(path + ": bad integer '" + s + "' on line " + std::to_string(lineno));
  return value;
}

}  // namespace

std::string format_record(const ExperimentRecord& r) {
  std::string line;
  line += csv_field(r.experiment) + ',' + csv_field(r.dataset) + ',' + csv_field(r.sketch) + ',';
  line += std::to_string(r.m) + ',' + std::to_string(r.round) + ',' + std::to_string(r.trial) + ',';
  line += format_double(r.error) + ',' + format_double(r.time_ms) + ',' + csv_field(r.extra);
  return line;
}

void write_results(const std::vector<ExperimentRecord>& records, const std::string& path) {
  ensure_parent_directory(path);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << kResultsHeader << '\n';
  for (const auto& r : records) out << format_record(r) << '\n';
  if (!out) throw Error("write failed for " + path);
}

std::vector<ExperimentRecord> read_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty results file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kResultsHeader) throw ParseError(path + ": header does not match the results schema");
  std::vector<ExperimentRecord> records;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line, lineno, path);
    if (f.size() != 9) throw ParseError(path + ": line " + std::to_string(lineno) + " does not have 9 fields");
    ExperimentRecord r;
    r.experiment = f[0];
    r.dataset = f[1];
    r.sketch = f[2];
    r.m = parse_integer<Index>(f[3], lineno, path);
    r.round = parse_integer<std::size_t>(f[4], lineno, path);
    r.trial = parse_integer<std::size_t>(f[5], lineno, path);
    r.error = parse_double(f[6], lineno, 7, path);
    r.time_ms = parse_double(f[7], lineno, 8, path);
    r.extra = f[8];
    records.push_back(std::move(r));
  }
  return records;
}

ResultWriter::ResultWriter(const std::string& path) {
  ensure_parent_directory(path);
  std::error_code ec;
  const bool fresh = !fs::exists(path, ec) || fs::file_size(path, ec) == 0;
  out_.open(path, std::ios::app);
  if (!out_) throw Error("cannot open " + path + " for appending");
  if (fresh) out_ << kResultsHeader << '\n' << std::flush;
}

void ResultWriter::append(const ExperimentRecord& record) {
  const std::string line = format_record(record) + '\n';
  std::lock_guard lock(mutex_);
  out_ << line << std::flush;
}

void ResultWriter::append(const std::vector<ExperimentRecord>& records) {
  std::string block;
  for (const auto& r : records) block += format_record(r) + '\n';
  std::lock_guard lock(mutex_);
  out_ << block << std::flush;
}

}  // namespace hsk
