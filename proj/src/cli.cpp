#include "hsk/cli.hpp"

#include "hsk/data_io.hpp"
#include "hsk/fastreg.hpp"
#include "hsk/ihs.hpp"
#include "hsk/learn.hpp"
#include "hsk/oracle_se.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace hsk {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class NonConvergenceExit : public Error {
 public:
  using Error::Error;
};

// --config support: top-level keys set global flags or, when they are not global, flags of
// the active subcommand; an object keyed by a subcommand name scopes its flags explicitly.
class JsonConfig : public CLI::Config {
 public:
  JsonConfig(std::vector<std::string> globals, std::string active)
      : globals_(std::move(globals)), active_(std::move(active)) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        for (const auto& [k, v] : value.items()) items.push_back(item({key}, k, v));
      } else {
        const bool global = std::find(globals_.begin(), globals_.end(), key) != globals_.end();
        std::vector<std::string> parents;
        if (!global && !active_.empty()) parents.push_back(active_);
        items.push_back(item(parents, key, value));
      }
    }
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }
  static CLI::ConfigItem item(std::vector<std::string> parents, const std::string& name, const json& v) {
    CLI::ConfigItem it;
    it.parents = std::move(parents);
    it.name = name;
    if (v.is_array()) {
      for (const json& e : v) it.inputs.push_back(scalar(e));
    } else {
      it.inputs.push_back(scalar(v));
    }
    return it;
  }
  std::vector<std::string> globals_;
  std::string active_;
};

struct Globals {
  std::uint64_t seed = 0;
  std::string out;
  int threads = 1;
  std::string config;
};

void require_out(const Globals& g, const char* what) {
  if (g.out.empty()) throw ValidationError(std::string("--out is required for ") + what);
}

template <class F>
void parallel_for(std::size_t count, int threads, F&& body) {
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

ConstraintSpec constraint_from_flags(const std::string& name, double lambda, double rho) {
  if (name == "free") return Free{};
  if (name == "l1") return L1Penalty{lambda};
  if (name == "simplex") return Simplex{};
  if (name == "nuclear") return NuclearBall{rho};
  throw ValidationError("unknown constraint '" + name + "' (expected free, l1, simplex or nuclear)");
}

// ---- sketch families ----------------------------------------------------------------------

struct Family {
  enum class Kind { Gaussian, CountSketch, Sjlt, Learned } kind = Kind::CountSketch;
  Index s = 0;
  std::string label;
  std::shared_ptr<const TrainedSketchSequence> sequence;
};

Family parse_family(const std::string& spec) {
  Family f;
  f.label = spec;
  if (spec == "gaussian") {
    f.kind = Family::Kind::Gaussian;
  } else if (spec == "countsketch") {
    f.kind = Family::Kind::CountSketch;
  } else if (spec.rfind("sjlt:", 0) == 0) {
    f.kind = Family::Kind::Sjlt;
    try {
      f.s = std::stol(spec.substr(5));
    } catch (const std::exception&) {
      throw ValidationError("bad sketch family '" + spec + "'");
    }
    if (f.s < 1) throw ValidationError("sjlt needs s >= 1");
  } else if (spec.rfind("learned:", 0) == 0) {
    f.kind = Family::Kind::Learned;
    f.label = "learned";
    f.sequence = std::make_shared<TrainedSketchSequence>(load_sequence(spec.substr(8)));
  } else {
    throw ValidationError("unknown sketch family '" + spec + "' (gaussian, countsketch, sjlt:s, learned:<file>)");
  }
  return f;
}

std::vector<Family> parse_families(const std::vector<std::string>& specs) {
  std::vector<Family> out;
  for (const auto& item : specs) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ','))
      if (!part.empty()) out.push_back(parse_family(part));
  }
  if (out.empty()) throw ValidationError("no sketch family given");
  return out;
}

SketchMatrix draw_random(const Family& f, Index m, Index n, Rng& rng) {
  switch (f.kind) {
    case Family::Kind::Gaussian: return make_gaussian(m, n, rng);
    case Family::Kind::Sjlt: return make_sjlt(m, n, f.s, rng);
    default: return make_countsketch(m, n, rng);
  }
}

// ---- gen-data -----------------------------------------------------------------------------

struct GenArgs {
  std::string family = "lowrank-matrix";
  Index n = 500, d = 10, d1 = 7, d2 = 7, r = 3;
  double rho = 30.0, sigma = 1.0, C = 1.0, eps = 0.1, tau = 0.0, lambda = 1.0;
  std::size_t train = 20, test = 10;
  std::string csv, constraint = "free";
  Index rows_per_chunk = 0, target_cols = 1;
  double train_frac = 0.8;
  bool header = false;
};

void cmd_gen_data(const GenArgs& a, const Globals& g, std::ostream& out) {
  require_out(g, "gen-data");
  Rng rng(g.seed);
  Dataset ds;
  ds.seed = g.seed;
  const std::size_t total = a.train + a.test;
  if (a.family != "csv-chunked" && (a.train < 1 || a.test < 1)) throw ValidationError("--train and --test must be >= 1");
  std::vector<Task> tasks;
  if (a.family == "gaussian-mixture-svm") {
    tasks = gen_gaussian_mixture_svm(a.n, a.d, a.C, total, rng);
    ds.params = json{{"n", a.n}, {"d", a.d}, {"C", a.C}};
  } else if (a.family == "lowrank-matrix") {
    LowRankSet set = gen_lowrank_matrix(a.n, a.d1, a.d2, a.r, a.rho, a.sigma, total, rng);
    const auto rescaled = std::count(set.rescaled.begin(), set.rescaled.end(), true);
    ds.params = json{{"n", a.n}, {"d1", a.d1}, {"d2", a.d2}, {"r", a.r}, {"rho", a.rho}, {"sigma", a.sigma},
                     {"rescaled", rescaled}};
    tasks = std::move(set.tasks);
    ds.truth = std::move(set.truth);
  } else if (a.family == "leverage-synthetic") {
    Dataset gen = gen_leverage_dataset(a.n, a.d, a.eps, a.sigma, a.tau, total, rng);
    ds.params = gen.params;
    tasks = std::move(gen.train);
    ds.truth = std::move(gen.truth);
  } else if (a.family == "gaussian-regression") {
    const ConstraintSpec c = constraint_from_flags(a.constraint, a.lambda, a.rho);
    tasks = gen_gaussian_regression(a.n, a.d, a.sigma, total, rng, c);
    ds.params = json{{"n", a.n}, {"d", a.d}, {"sigma", a.sigma}, {"constraint", constraint_to_json(c)}};
  } else if (a.family == "csv-chunked") {
    if (a.csv.empty() || a.rows_per_chunk < 1) throw ValidationError("csv-chunked needs --csv and --rows-per-chunk");
    ds = chunk_csv(a.csv, a.rows_per_chunk, a.target_cols, a.train_frac, rng,
                   constraint_from_flags(a.constraint, a.lambda, a.rho), a.header);
    ds.seed = g.seed;
  } else {
    throw ValidationError("unknown family '" + a.family + "'");
  }
  if (a.family != "csv-chunked") {
    ds.family = a.family;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const bool train = i < a.train;
      char id[32];
      std::snprintf(id, sizeof id, "%s_%03zu", train ? "train" : "test", train ? i : i - a.train);
      tasks[i].id = id;
      (train ? ds.train : ds.test).push_back(std::move(tasks[i]));
    }
  }
  save_dataset(ds, g.out);
  out << "wrote " << ds.train.size() << " train / " << ds.test.size() << " test tasks to " << g.out << '\n';
}

// ---- train --------------------------------------------------------------------------------

struct TrainArgs {
  std::string task = "ihs-lasso";
  std::string data;
  std::size_t rounds = 1;
  TrainConfig config;
  std::string optimizer = "adam";
  Index m = 0;
};

void cmd_train(TrainArgs a, const Globals& g, std::ostream& out) {
  require_out(g, "train");
  const Dataset ds = load_dataset(a.data);
  if (ds.train.empty()) throw ValidationError("dataset has no training tasks");
  if (a.m < 1) throw ValidationError("--m must be >= 1");
  if (a.optimizer != "adam" && a.optimizer != "sgd") throw ValidationError("--optimizer must be adam or sgd");
  a.config.optimizer = a.optimizer == "sgd" ? Optimizer::Sgd : Optimizer::Adam;
  a.config.seed = g.seed;
  const TrainTask kind = train_task_from_string(a.task);
  const TrainedSketchSequence seq = train_sequence(ds.train, kind, a.rounds, a.m, a.config);
  save_sequence(seq, g.out);
  for (const auto& r : seq.rounds)
    out << "round " << r.round << ": loss " << format_double(r.loss_trace.front()) << " -> "
        << format_double(r.loss_trace.back()) << '\n';
}

// ---- run-ihs ------------------------------------------------------------------------------

struct IhsArgs {
  std::string data, split = "test";
  std::vector<std::string> sketches{"countsketch"};
  std::string random_family = "countsketch";
  Index m = 0;
  std::size_t rounds = 8, trials = 5, learned_trials = 3;
  bool no_safeguard = false, reuse_learned = false;
  double eta = 0.1;
  InnerSolverOptions inner;
};

std::string dataset_label(const std::string& dir) {
  const fs::path p = fs::path(dir).lexically_normal();
  const std::string name = p.filename().string();
  return name.empty() ? p.parent_path().filename().string() : name;
}

void cmd_run_ihs(const IhsArgs& a, const Globals& g, std::ostream& out) {
  require_out(g, "run-ihs");
  const Dataset ds = load_dataset(a.data);
  const std::vector<Task>& tasks = ds.split(a.split);
  if (tasks.empty()) throw ValidationError("split '" + a.split + "' is empty");
  if (a.rounds < 1) throw ValidationError("--rounds must be >= 1");
  const std::vector<Family> families = parse_families(a.sketches);
  const Family random_family = parse_family(a.random_family);
  if (random_family.kind == Family::Kind::Learned) throw ValidationError("--random-family must be a random family");
  for (const Family& f : families) {
    if (f.kind == Family::Kind::Learned) {
      if (f.sequence->n != tasks.front().n()) throw ValidationError("learned sketch does not match the task row count");
    } else if (a.m < 1) {
      throw ValidationError("--m must be >= 1");
    }
  }
  const std::string label = dataset_label(a.data);

  std::vector<Matrix> references(tasks.size());
  parallel_for(tasks.size(), g.threads, [&](std::size_t k) { references[k] = reference_solution(tasks[k]); });

  struct Unit {
    std::size_t task, family, trial;
  };
  std::vector<Unit> units;
  for (std::size_t k = 0; k < tasks.size(); ++k)
    for (std::size_t f = 0; f < families.size(); ++f) {
      const std::size_t trials = families[f].kind == Family::Kind::Learned ? a.learned_trials : a.trials;
      for (std::size_t t = 0; t < trials; ++t) units.push_back({k, f, t});
    }

  std::vector<std::vector<ExperimentRecord>> results(units.size());
  std::atomic<bool> nonconverged{false};
  parallel_for(units.size(), g.threads, [&](std::size_t u) {
    const Unit& unit = units[u];
    const Task& task = tasks[unit.task];
    const Family& fam = families[unit.family];
    const std::uint64_t seed = child_seed(child_seed(g.seed, unit.task), unit.trial);
    Rng rng(seed);
    const Index m = fam.kind == Family::Kind::Learned ? fam.sequence->m : a.m;

    SketchProvider provider = [&](std::size_t round) {
      RoundSketches s;
      if (fam.kind == Family::Kind::Learned) {
        const CountSketchType& cs = fam.sequence->sketch_for_round(a.reuse_learned ? 1 : round);
        s.learned = SketchMatrix::countsketch(cs);
        if (!a.no_safeguard) s.random = draw_random(random_family, m, task.n(), rng);
      } else {
        s.random = draw_random(fam, m, task.n(), rng);
      }
      return s;
    };
    IHSOptions opts;
    opts.inner = a.inner;
    opts.eta = a.eta;
    opts.safeguard = !a.no_safeguard;
    opts.estimator_seed = child_seed(seed, 1);
    const IHSState state = run_ihs(task, provider, a.rounds, task.zero_point(), opts, references[unit.task]);
    for (const RoundRecord& rr : state.rounds) {
      ExperimentRecord r;
      r.experiment = "ihs";
      r.dataset = label + "/" + task.id;
      r.sketch = fam.label;
      r.m = m;
      r.round = rr.round;
      r.trial = unit.trial;
      r.error = rr.error;
      r.time_ms = rr.time_ms;
      r.extra = "constraint=" + describe(task.constraint) + ";converged=" + (rr.converged ? "1" : "0");
      if (rr.chosen) r.extra += ";chosen=" + to_string(*rr.chosen);
      if (!rr.converged) nonconverged = true;
      results[u].push_back(std::move(r));
    }
  });

  std::vector<ExperimentRecord> all;
  for (auto& block : results) all.insert(all.end(), block.begin(), block.end());
  write_results(all, g.out);
  out << "wrote " << all.size() << " records to " << g.out << '\n';
  if (nonconverged) throw NonConvergenceExit("inner solver did not converge in some rounds (see converged=0 rows)");
}

// ---- run-fastreg --------------------------------------------------------------------------

struct FastRegArgs {
  std::string data, split = "test";
  Index m = 0;
  double eps = 1e-6;
  std::size_t rounds = 3, trials = 3;
  std::string learned;
  std::string random_family = "countsketch";
  double step_scale = 1.0;
  double step = 0.0;
  long iters = 0;
  bool trace = false;
};

void cmd_run_fastreg(const FastRegArgs& a, const Globals& g, std::ostream& out) {
  require_out(g, "run-fastreg");
  const Dataset ds = load_dataset(a.data);
  const std::vector<Task>& tasks = ds.split(a.split);
  if (tasks.empty()) throw ValidationError("split '" + a.split + "' is empty");
  const Family random_family = parse_family(a.random_family);
  if (random_family.kind == Family::Kind::Learned) throw ValidationError("--random-family must be a random family");
  std::shared_ptr<const TrainedSketchSequence> seq;
  if (!a.learned.empty()) {
    seq = std::make_shared<TrainedSketchSequence>(load_sequence(a.learned));
    if (seq->n != tasks.front().n()) throw ValidationError("learned sketch does not match the task row count");
  }
  const Index m = a.m > 0 ? a.m : (seq ? seq->m : 0);
  if (m < 1) throw ValidationError("--m must be >= 1");
  FastRegOptions opts;
  opts.step_scale = a.step_scale;
  if (a.step > 0.0) opts.step_override = a.step;
  if (a.iters > 0) opts.iteration_budget = a.iters;
  const std::string label = dataset_label(a.data);

  struct Unit {
    std::size_t task, trial;
    bool learned;
  };
  std::vector<Unit> units;
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    for (std::size_t t = 0; t < a.trials; ++t) units.push_back({k, t, false});
    if (seq)
      for (std::size_t t = 0; t < a.trials; ++t) units.push_back({k, t, true});
  }
  std::vector<std::vector<ExperimentRecord>> results(units.size());
  parallel_for(units.size(), g.threads, [&](std::size_t u) {
    const Unit& unit = units[u];
    const Task& task = tasks[unit.task];
    const std::uint64_t seed = child_seed(child_seed(g.seed, unit.task), unit.trial);
    Rng rng(seed);
    Rng est(child_seed(seed, 1));
    SketchProvider provider = [&](std::size_t round) {
      RoundSketches s;
      s.random = draw_random(random_family, unit.learned ? seq->m : m, task.n(), rng);
      if (unit.learned) s.learned = SketchMatrix::countsketch(seq->sketch_for_round(round));
      return s;
    };
    std::vector<NewtonRound> trace;
    try {
      trace = newton_driver(task, provider, a.rounds, a.eps, Vector::Zero(task.d()), est, opts);
    } catch (const FastRegNonConvergence& e) {
      throw NonConvergenceExit(task.id + ": " + e.what());
    }
    for (const NewtonRound& nr : trace) {
      ExperimentRecord r;
      r.experiment = "fastreg";
      r.dataset = label + "/" + task.id;
      r.sketch = unit.learned ? "learned" : random_family.label;
      r.m = unit.learned ? seq->m : m;
      r.round = nr.round;
      r.trial = unit.trial;
      r.error = nr.relative_residual;
      r.time_ms = nr.time_ms;
      r.extra = "iterations=" + std::to_string(nr.iterations) + ";chosen=" + to_string(nr.chosen);
      results[u].push_back(r);
      if (a.trace) {
        for (std::size_t t = 0; t < nr.residuals.size(); ++t) {
          ExperimentRecord tr = r;
          tr.experiment = "fastreg-trace";
          tr.error = nr.residuals[t];
          tr.time_ms = 0.0;
          tr.extra = "iter=" + std::to_string(t);
          results[u].push_back(std::move(tr));
        }
      }
    }
  });
  std::vector<ExperimentRecord> all;
  for (auto& block : results) all.insert(all.end(), block.begin(), block.end());
  write_results(all, g.out);
  out << "wrote " << all.size() << " records to " << g.out << '\n';
}

// ---- run-oracle-se ------------------------------------------------------------------------

struct OracleArgs {
  std::string data = "synthetic:eps=0.1";
  std::string m_list = "5d,7d,10d";
  bool with_oracle = false, no_oracle = false;
  std::string budget = "extra";
  std::size_t trials = 10;
};

std::vector<Index> parse_m_list(const std::string& text, Index d) {
  std::vector<Index> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    try {
      if (part.back() == 'd') {
        const std::string k = part.substr(0, part.size() - 1);
        out.push_back(static_cast<Index>(std::llround((k.empty() ? 1.0 : std::stod(k)) * static_cast<double>(d))));
      } else {
        std::size_t pos = 0;
        out.push_back(std::stol(part, &pos));
        if (pos != part.size()) throw std::invalid_argument(part);
      }
    } catch (const std::exception&) {
      throw ValidationError("bad --m-list entry '" + part + "'");
    }
  }
  if (out.empty()) throw ValidationError("--m-list is empty");
  return out;
}

void cmd_run_oracle_se(const OracleArgs& a, const Globals& g, std::ostream& out) {
  require_out(g, "run-oracle-se");
  std::vector<Task> tasks;
  std::string label;
  if (a.data.rfind("synthetic", 0) == 0) {
    std::map<std::string, double> p{{"eps", 0.1}, {"n", 1000}, {"d", 10}, {"sigma", 0.1}, {"tau", 0}, {"count", 100}};
    const auto colon = a.data.find(':');
    if (colon != std::string::npos) {
      std::stringstream ss(a.data.substr(colon + 1));
      std::string kv;
      while (std::getline(ss, kv, ',')) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || !p.count(kv.substr(0, eq)))
          throw ValidationError("bad synthetic parameter '" + kv + "' (eps, n, d, sigma, tau, count)");
        try {
          p[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
        } catch (const std::exception&) {
          throw ValidationError("bad synthetic parameter '" + kv + "'");
        }
      }
    }
    Rng rng(g.seed);
    tasks = gen_leverage_dataset(static_cast<Index>(p["n"]), static_cast<Index>(p["d"]), p["eps"], p["sigma"],
                                 p["tau"], static_cast<std::size_t>(p["count"]), rng)
                .train;
    label = "synthetic-eps" + format_double(p["eps"]);
  } else {
    const Dataset ds = load_dataset(a.data);
    tasks = ds.train;
    tasks.insert(tasks.end(), ds.test.begin(), ds.test.end());
    label = dataset_label(a.data);
  }
  const std::vector<Index> ms = parse_m_list(a.m_list, tasks.front().d());
  std::vector<bool> modes;
  if (a.no_oracle || !a.with_oracle) modes.push_back(false);
  if (a.with_oracle || !a.no_oracle) modes.push_back(true);

  std::vector<std::vector<ExperimentRecord>> results(modes.size() * ms.size());
  parallel_for(results.size(), g.threads, [&](std::size_t u) {
    Table1Options o;
    o.with_oracle = modes[u / ms.size()];
    o.budget = oracle_budget_from_string(a.budget);
    o.trials = a.trials;
    o.seed = g.seed;
    o.dataset = label;
    results[u] = table1_experiment(tasks, {ms[u % ms.size()]}, o);
  });
  std::vector<ExperimentRecord> all;
  for (auto& block : results) all.insert(all.end(), block.begin(), block.end());
  write_results(all, g.out);
  out << "wrote " << all.size() << " records to " << g.out << '\n';
}

// ---- report -------------------------------------------------------------------------------

struct ReportArgs {
  std::string input;
  std::string cumulative;
};

struct Stats {
  std::size_t count = 0;
  double mean = 0.0, stddev = 0.0, time = 0.0;
};

Stats summarize(const std::vector<double>& xs, const std::vector<double>& ts) {
  Stats s;
  s.count = xs.size();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    s.mean += xs[i];
    s.time += ts[i];
  }
  s.mean /= static_cast<double>(s.count);
  s.time /= static_cast<double>(s.count);
  if (s.count > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(s.count - 1));
  }
  return s;
}

void cmd_report(const ReportArgs& a, const Globals& g, std::ostream& out) {
  const std::vector<ExperimentRecord> records = read_results(a.input);
  using Key = std::tuple<std::string, std::string, Index, std::size_t>;
  std::map<Key, std::pair<std::vector<double>, std::vector<double>>> groups;
  // Cumulative time along each run, a run being (experiment, dataset, sketch, m, trial).
  std::map<std::tuple<std::string, std::string, std::string, Index, std::size_t>, std::map<std::size_t, const ExperimentRecord*>>
      runs;
  for (const auto& r : records) {
    auto& grp = groups[{r.experiment, r.sketch, r.m, r.round}];
    grp.first.push_back(r.error);
    grp.second.push_back(r.time_ms);
    runs[{r.experiment, r.dataset, r.sketch, r.m, r.trial}][r.round] = &r;
  }
  std::map<Key, std::pair<std::vector<double>, std::vector<double>>> cumulative;
  for (const auto& [key, by_round] : runs) {
    double elapsed = 0.0;
    for (const auto& [round, rec] : by_round) {
      elapsed += rec->time_ms;
      auto& c = cumulative[{std::get<0>(key), std::get<2>(key), std::get<3>(key), round}];
      c.first.push_back(rec->error);
      c.second.push_back(elapsed);
    }
  }

  std::ostringstream table;
  table << "experiment,sketch,m,round,count,mean_error,std_error,mean_time_ms\n";
  for (const auto& [key, v] : groups) {
    const Stats s = summarize(v.first, v.second);
    table << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ',' << std::get<3>(key) << ','
          << s.count << ',' << format_double(s.mean) << ',' << format_double(s.stddev) << ',' << format_double(s.time)
          << '\n';
  }
  std::ostringstream cum;
  cum << "experiment,sketch,m,round,count,mean_cumulative_time_ms,mean_error\n";
  for (const auto& [key, v] : cumulative) {
    const Stats s = summarize(v.first, v.second);
    cum << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ',' << std::get<3>(key) << ','
        << s.count << ',' << format_double(s.time) << ',' << format_double(s.mean) << '\n';
  }

  auto write = [](const std::string& path, const std::string& text) {
    ensure_parent_directory(path);
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    f << text;
  };
  if (g.out.empty()) {
    out << table.str() << '\n' << cum.str();
    return;
  }
  write(g.out, table.str());
  const std::string cum_path =
      !a.cumulative.empty() ? a.cumulative
                            : (fs::path(g.out).parent_path() / (fs::path(g.out).stem().string() + "_cumulative.csv")).string();
  write(cum_path, cum.str());
  out << "wrote " << g.out << " and " << cum_path << '\n';
}

std::string active_subcommand(const std::vector<std::string>& args, const std::vector<std::string>& names) {
  for (const auto& a : args)
    if (std::find(names.begin(), names.end(), a) != names.end()) return a;
  return {};
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learned and classical sketches for second-order least-squares solvers", "hsk"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Expand all help");

  Globals g;
  app.add_option("--seed", g.seed, "Root seed for every generator")->capture_default_str();
  app.add_option("--out", g.out, "Output path (dataset dir, sequence JSON or results CSV)");
  app.add_option("--threads", g.threads, "Worker threads for independent trials")->capture_default_str()->check(CLI::PositiveNumber);
  app.set_config("--config", "", "JSON file mirroring the flags");
  app.config_formatter(std::make_shared<JsonConfig>(
      std::vector<std::string>{"seed", "out", "threads"},
      active_subcommand(args, {"gen-data", "train", "run-ihs", "run-fastreg", "run-oracle-se", "report"})));

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate a synthetic dataset or chunk a CSV");
  c_gen->add_option("--family", gen.family,
                    "gaussian-mixture-svm | lowrank-matrix | leverage-synthetic | gaussian-regression | csv-chunked")
      ->capture_default_str();
  c_gen->add_option("--n", gen.n, "Rows (features for the SVM family)")->capture_default_str();
  c_gen->add_option("--d", gen.d, "Columns (samples for the SVM family)")->capture_default_str();
  c_gen->add_option("--d1", gen.d1)->capture_default_str();
  c_gen->add_option("--d2", gen.d2)->capture_default_str();
  c_gen->add_option("--r", gen.r, "Rank of the planted matrix")->capture_default_str();
  c_gen->add_option("--rho", gen.rho, "Nuclear-ball radius")->capture_default_str();
  c_gen->add_option("--sigma", gen.sigma, "Noise level")->capture_default_str();
  c_gen->add_option("--C", gen.C, "SVM margin parameter")->capture_default_str();
  c_gen->add_option("--eps", gen.eps, "Heavy-row parameter of the leverage family")->capture_default_str();
  c_gen->add_option("--tau", gen.tau, "Light-row scale (0 = r/(10n))")->capture_default_str();
  c_gen->add_option("--lambda", gen.lambda, "L1 penalty weight")->capture_default_str();
  c_gen->add_option("--constraint", gen.constraint, "free | l1 | simplex | nuclear")->capture_default_str();
  c_gen->add_option("--train", gen.train, "Training tasks")->capture_default_str();
  c_gen->add_option("--test", gen.test, "Test tasks")->capture_default_str();
  c_gen->add_option("--csv", gen.csv, "Numeric CSV to chunk");
  c_gen->add_option("--rows-per-chunk", gen.rows_per_chunk);
  c_gen->add_option("--target-cols", gen.target_cols)->capture_default_str();
  c_gen->add_option("--train-frac", gen.train_frac)->capture_default_str();
  c_gen->add_flag("--header", gen.header, "Skip the first CSV line");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Learn per-round sketch values");
  c_train->add_option("--task", tr.task, "ihs-lasso | ihs-svm | ihs-nuclear | fastreg")->capture_default_str();
  c_train->add_option("--data", tr.data, "Dataset directory")->required();
  c_train->add_option("--rounds", tr.rounds)->capture_default_str();
  c_train->add_option("--steps", tr.config.steps)->capture_default_str();
  c_train->add_option("--lr", tr.config.alpha, "Learning rate")->capture_default_str();
  c_train->add_option("--batch", tr.config.batch_size)->capture_default_str();
  c_train->add_option("--fd-step", tr.config.fd_step)->capture_default_str();
  c_train->add_option("--optimizer", tr.optimizer, "adam | sgd")->capture_default_str();
  c_train->add_option("--inner-iters", tr.config.inner.max_iterations)->capture_default_str();
  c_train->add_option("--inner-tol", tr.config.inner.tolerance)->capture_default_str();
  c_train->add_option("--m", tr.m, "Sketch rows")->required();

  IhsArgs ihs;
  auto* c_ihs = app.add_subcommand("run-ihs", "Iterative Hessian sketch benchmark");
  c_ihs->add_option("--data", ihs.data, "Dataset directory")->required();
  c_ihs->add_option("--split", ihs.split)->capture_default_str();
  c_ihs->add_option("--sketch", ihs.sketches, "gaussian | countsketch | sjlt:s | learned:<file>, comma separated")
      ->capture_default_str();
  c_ihs->add_option("--random-family", ihs.random_family, "Random side of the safeguarded selection")
      ->capture_default_str();
  c_ihs->add_option("--m", ihs.m, "Sketch rows of random families");
  c_ihs->add_option("--rounds", ihs.rounds)->capture_default_str();
  c_ihs->add_option("--trials", ihs.trials, "Trials per random family")->capture_default_str();
  c_ihs->add_option("--learned-trials", ihs.learned_trials)->capture_default_str();
  c_ihs->add_option("--eta", ihs.eta, "Estimator tolerance")->capture_default_str();
  c_ihs->add_option("--inner-iters", ihs.inner.max_iterations)->capture_default_str();
  c_ihs->add_option("--inner-tol", ihs.inner.tolerance)->capture_default_str();
  c_ihs->add_flag("--no-safeguard", ihs.no_safeguard, "Use learned sketches directly");
  c_ihs->add_flag("--reuse-learned", ihs.reuse_learned, "Use the first learned sketch in every round");

  FastRegArgs fr;
  auto* c_fr = app.add_subcommand("run-fastreg", "Newton iterations with the sketch-preconditioned solver");
  c_fr->add_option("--data", fr.data, "Dataset directory")->required();
  c_fr->add_option("--split", fr.split)->capture_default_str();
  c_fr->add_option("--m", fr.m, "Sketch rows");
  c_fr->add_option("--eps", fr.eps)->capture_default_str();
  c_fr->add_option("--rounds", fr.rounds)->capture_default_str();
  c_fr->add_option("--trials", fr.trials)->capture_default_str();
  c_fr->add_option("--sketch-learned", fr.learned, "Trained sequence JSON");
  c_fr->add_option("--random-family", fr.random_family)->capture_default_str();
  c_fr->add_option("--step-scale", fr.step_scale)->capture_default_str();
  c_fr->add_option("--step", fr.step, "Fixed step size (0 = estimated)")->capture_default_str();
  c_fr->add_option("--iters", fr.iters, "Fixed iteration budget per call (0 = run to --eps)")->capture_default_str();
  c_fr->add_flag("--trace", fr.trace, "Also emit the residual after every iteration");

  OracleArgs os;
  auto* c_os = app.add_subcommand("run-oracle-se", "Sketch-and-solve with and without a leverage oracle");
  c_os->add_option("--data", os.data, "Dataset dir or synthetic:eps=..,n=..,d=..,sigma=..,tau=..,count=..")
      ->capture_default_str();
  c_os->add_option("--m-list", os.m_list)->capture_default_str();
  c_os->add_flag("--with-oracle", os.with_oracle);
  c_os->add_flag("--no-oracle", os.no_oracle);
  c_os->add_option("--budget", os.budget, "total | extra")->capture_default_str();
  c_os->add_option("--trials", os.trials)->capture_default_str();

  ReportArgs rep;
  auto* c_rep = app.add_subcommand("report", "Aggregate a results CSV");
  c_rep->add_option("input,--in", rep.input, "Results CSV")->required();
  c_rep->add_option("--cumulative", rep.cumulative, "Cumulative-time table path");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (c_gen->parsed()) cmd_gen_data(gen, g, out);
    if (c_train->parsed()) cmd_train(tr, g, out);
    if (c_ihs->parsed()) cmd_run_ihs(ihs, g, out);
    if (c_fr->parsed()) cmd_run_fastreg(fr, g, out);
    if (c_os->parsed()) cmd_run_oracle_se(os, g, out);
    if (c_rep->parsed()) cmd_report(rep, g, out);
  } catch (const NonConvergenceExit& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const NonConvergenceError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace hsk
