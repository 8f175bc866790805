// Acceptance gate. Prints one PASS/FAIL line per criterion; exit status 0 only when every
// selected criterion passes. Usage: hsk_acceptance [--criterion N]...

#include "hsk/cli.hpp"
#include "hsk/constraints.hpp"
#include "hsk/data_io.hpp"
#include "hsk/estimate.hpp"
#include "hsk/fastreg.hpp"
#include "hsk/ihs.hpp"
#include "hsk/learn.hpp"
#include "hsk/oracle_se.hpp"
#include "oracles.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

using namespace hsk;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream ss;
  ss.precision(precision);
  ss << v;
  return ss.str();
}

Task regression(Index n, Index d, Rng& rng, ConstraintSpec c = Free{}) {
  Task t;
  t.id = "t";
  t.A = gaussian_matrix(n, d, rng);
  t.b = t.A * gaussian_matrix(d, 1, rng) + 0.5 * gaussian_matrix(n, 1, rng);
  t.constraint = c;
  return t;
}

SketchProvider fixed(const SketchMatrix& S) {
  return [S](std::size_t) {
    RoundSketches r;
    r.random = S;
    return r;
  };
}

// ---- 1 ------------------------------------------------------------------------------------

Outcome identity_contracts() {
  constexpr double kSuboptimality = 1e-8;
  Rng rng(1);
  std::vector<Task> tasks;
  for (int k = 0; k < 5; ++k) tasks.push_back(regression(200, 8, rng));
  for (int k = 0; k < 5; ++k) tasks.push_back(regression(200, 8, rng, L1Penalty{2.0}));
  for (Task& t : gen_gaussian_mixture_svm(20, 30, 1.0, 5, rng)) tasks.push_back(std::move(t));
  for (Task& t : gen_lowrank_matrix(150, 5, 4, 2, 10.0, 1.0, 5, rng).tasks) tasks.push_back(std::move(t));

  double worst = 0.0;
  for (const Task& t : tasks) {
    const IHSState st = run_ihs(t, fixed(SketchMatrix::identity(t.n())), 1, t.zero_point());
    const double rel = st.rounds.front().error / std::max(std::abs(st.reference_objective), 1e-300);
    worst = std::max(worst, std::abs(rel));
  }

  // Solver contract over mixed sizes, tolerances and sketch pairs, including degenerate ones.
  std::size_t calls = 0, violations = 0;
  std::uniform_int_distribution<Index> dims(2, 12);
  for (int k = 0; k < 300; ++k) {
    const Index d = dims(rng), n = 20 * d + 10 * dims(rng);
    const Matrix A = k % 3 == 0 ? oracle::with_spectrum(n, Vector::LinSpaced(d, 1.0, 1.0 + 3.0 * (k % 7)), rng)
                                : gaussian_matrix(n, d, rng);
    const Vector y = gaussian_matrix(d, 1, rng);
    const double eps = std::pow(10.0, -3.0 - (k % 7));
    const SketchMatrix learned = make_countsketch(std::max<Index>(1, d * (1 + k % 4) - 1), n, rng);
    const SketchMatrix random = k % 2 ? make_gaussian(4 * d, n, rng) : make_countsketch(d * d, n, rng);
    ++calls;
    try {
      const FastRegResult r = fast_regression_solve(k % 5 ? &learned : nullptr, &random, A, y, eps, rng);
      if (!((A.transpose() * (A * r.x) - y).norm() <= eps * y.norm())) ++violations;
    } catch (const std::exception&) {
      ++violations;
    }
  }
  return {worst <= kSuboptimality && violations == 0,
          "worst round-1 relative suboptimality " + fmt(worst) + " over " + std::to_string(tasks.size()) +
              " tasks (<= 1e-8); residual contract violated " + std::to_string(violations) + "/" +
              std::to_string(calls)};
}

// ---- 2 ------------------------------------------------------------------------------------

Outcome estimator_intervals() {
  constexpr double kEta = 0.1;
  constexpr int kRequired = 95;
  int good = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(child_seed(2, s));
    const Matrix A = gaussian_matrix(200, 5, rng);
    const SketchMatrix S = make_countsketch(25, 200, rng);
    const auto z = oracle::exact_z(S, A);
    const SpectralEstimates e = estimate_z(S, A, kEta, rng);
    const bool z1 = e.z1_hat >= z.z1 / (1 + kEta) && e.z1_hat <= z.z1 / (1 - kEta);
    const bool z2 = e.z2_hat >= z.z2 / ((1 + kEta) * (1 + kEta)) - 3 * kEta &&
                    e.z2_hat <= z.z2 / ((1 - kEta) * (1 - kEta)) + 3 * kEta;
    if (z1 && z2) ++good;
  }
  return {good >= kRequired, std::to_string(good) + "/100 pairs inside both intervals (>= 95)"};
}

// ---- 3 ------------------------------------------------------------------------------------

Outcome safeguard() {
  constexpr double kEta = 0.1;
  constexpr int kRequired = 95;
  int good = 0, random_chosen = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(child_seed(3, s));
    const Task t = regression(200, 5, rng);
    CountSketchType zero = random_countsketch(25, 200, rng);
    zero.values.setZero();
    const SketchMatrix random = make_countsketch(25, 200, rng);
    const SelectionResult r =
        hessian_sketch_select(SketchMatrix::countsketch(zero), random, t, t.zero_point(), kEta, rng);
    const SpectralEstimates& used = r.chosen == SketchChoice::Random ? r.random : r.learned;
    const Matrix xs = reference_solution(t);
    const double bound = std::pow(1 + kEta, 4) * (used.ratio() + 4 * kEta);
    if (r.chosen == SketchChoice::Random) ++random_chosen;
    if (r.chosen == SketchChoice::Random && (t.A * (r.x - xs)).norm() <= bound * (t.A * xs).norm()) ++good;
  }
  return {good >= kRequired, std::to_string(good) + "/100 within the bound on the random branch (>= 95); random chosen " +
                                 std::to_string(random_chosen) + "/100"};
}

// ---- 4 ------------------------------------------------------------------------------------

Outcome embedding_statistics() {
  constexpr double kEps = 0.5;
  constexpr int kRequired = 90;
  int good = 0, gram_good = 0;
  double worst_gap = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(child_seed(4, s));
    const Matrix A = gaussian_matrix(2000, 10, rng);
    const SketchMatrix S = make_countsketch(100, 2000, rng);
    const double eps = embedding_epsilon(S, A);
    worst_gap = std::max(worst_gap, std::abs(eps - oracle::norm_distortion(S, A)));
    if (eps <= kEps) ++good;
    if (embedding_distortion(S, A) <= kEps) ++gram_good;
  }
  return {good >= kRequired && worst_gap <= 1e-10,
          std::to_string(good) + "/100 with (1 +- 0.5) norm distortion (>= 90); oracle gap " + fmt(worst_gap) +
              "; Gram-form bound met in " + std::to_string(gram_good) + "/100 (informational)"};
}

// ---- 5 ------------------------------------------------------------------------------------

Outcome preconditioner_quality() {
  constexpr double kKappa = 1.5;
  constexpr int kRequired = 95;
  constexpr double kSlope = 2.3;
  int good = 0;
  std::vector<double> kappas_seen;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(child_seed(5, s));
    const Matrix A = gaussian_matrix(500, 10, rng);
    const Preconditioner P = build_preconditioner(make_gaussian(200, 500, rng), A, rng);
    const double kappa = oracle::dense_condition(A * upper_inverse(P.R));
    kappas_seen.push_back(kappa);
    if (kappa <= kKappa) ++good;
  }
  std::sort(kappas_seen.begin(), kappas_seen.end());

  std::vector<double> ks, iterations;
  for (double kappa : {1.5, 5.0, 20.0}) {
    double total = 0.0;
    for (std::uint64_t s = 0; s < 5; ++s) {
      Rng rng(child_seed(50, s));
      const Matrix A = oracle::with_spectrum(400, Vector::LinSpaced(8, 1.0, kappa), rng);
      const Vector y = gaussian_matrix(8, 1, rng);
      const EigEstimates est = eig_via_sketch(A, Matrix::Identity(8, 8), 0.1, rng);
      const Preconditioner P = Preconditioner::identity(8, preconditioned_step(est, {}), est);
      total += static_cast<double>(preconditioned_solve(A, y, P, 1e-6).iterations);
    }
    ks.push_back(kappa);
    iterations.push_back(total / 5.0);
  }
  const double slope = oracle::loglog_slope(ks, iterations);
  return {good >= kRequired && slope <= kSlope,
          std::to_string(good) + "/100 with kappa(A R^-1) <= 1.5 (>= 95), median kappa " + fmt(kappas_seen[50]) +
              "; iteration slope " + fmt(slope) + " (<= 2.3), mean iterations " + fmt(iterations[0]) + "/" +
              fmt(iterations[1]) + "/" + fmt(iterations[2])};
}

// ---- 6 ------------------------------------------------------------------------------------

Outcome projection_oracles() {
  constexpr double kSimplexTol = 1e-10;
  constexpr double kNuclearTol = 1e-8;
  Rng rng(6);
  double simplex_err = 0.0, nuclear_err = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Vector x = gaussian_matrix(4, 1, rng, 1.5);
    simplex_err = std::max(simplex_err, (project_simplex(x) - oracle::simplex_active_set(x)).cwiseAbs().maxCoeff());
  }
  for (int k = 0; k < 100; ++k) {
    const Matrix X = gaussian_matrix(5, 5, rng, 2.0);
    nuclear_err =
        std::max(nuclear_err, (project_nuclear_ball(X, 3.0) - oracle::nuclear_bisection(X, 3.0)).cwiseAbs().maxCoeff());
  }
  Matrix outside = Matrix::Zero(2, 2), expected = Matrix::Zero(2, 2);
  outside.diagonal() << 8, 6;
  expected.diagonal() << 6, 4;
  const double example = (project_nuclear_ball(outside, 10.0) - expected).cwiseAbs().maxCoeff();
  return {simplex_err <= kSimplexTol && nuclear_err <= kNuclearTol && example <= 1e-12,
          "simplex max error " + fmt(simplex_err) + " (<= 1e-10), nuclear max error " + fmt(nuclear_err) +
              " (<= 1e-8), diag(8,6) example error " + fmt(example)};
}

// ---- 7 ------------------------------------------------------------------------------------

Outcome ihs_contraction() {
  constexpr int kRequired = 90;
  int decreasing = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(child_seed(7, s));
    const Task t = regression(300, 9, rng);
    const SketchProvider provider = [&rng](std::size_t) {
      RoundSketches r;
      r.random = make_gaussian(90, 300, rng);
      return r;
    };
    const IHSState st = run_ihs(t, provider, 5, t.zero_point());
    bool ok = true;
    for (std::size_t k = 1; k < st.rounds.size(); ++k) ok = ok && st.rounds[k].error < st.rounds[k - 1].error;
    if (ok) ++decreasing;
  }
  return {decreasing >= kRequired, std::to_string(decreasing) + "/100 strictly decreasing over 5 rounds (>= 90)"};
}

// ---- 8 ------------------------------------------------------------------------------------

Outcome learned_improvement() {
  constexpr double kRatio = 0.8;
  constexpr Index kRows = 35;
  constexpr std::size_t kTrain = 60, kTest = 20, kRandomTrials = 5;
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Rng rng(seed);
    LowRankSet set = gen_lowrank_matrix(500, 7, 7, 3, 30.0, 1.0, kTrain + kTest, rng);
    const std::vector<Task> train(set.tasks.begin(), set.tasks.begin() + kTrain);
    const std::vector<Task> test(set.tasks.begin() + kTrain, set.tasks.end());
    TrainConfig cfg;
    cfg.seed = seed;
    const TrainedSketchSequence seq = train_sequence(train, TrainTask::IhsNuclear, 1, kRows, cfg);
    const SketchMatrix learned = SketchMatrix::countsketch(seq.rounds.front().sketch);

    double learned_error = 0.0, random_error = 0.0;
    for (std::size_t k = 0; k < test.size(); ++k) {
      const Task& t = test[k];
      const Matrix xs = reference_solution(t);
      IHSOptions direct;
      direct.safeguard = false;
      const SketchProvider use_learned = [&learned](std::size_t) {
        RoundSketches r;
        r.learned = learned;
        return r;
      };
      learned_error += run_ihs(t, use_learned, 1, t.zero_point(), direct, xs).rounds.front().error;
      for (std::size_t trial = 0; trial < kRandomTrials; ++trial) {
        Rng trial_rng(child_seed(child_seed(seed, k), trial));
        const IHSState st = run_ihs(t, fixed(make_countsketch(kRows, t.n(), trial_rng)), 1, t.zero_point(), {}, xs);
        random_error += st.rounds.front().error / static_cast<double>(kRandomTrials);
      }
    }
    const double ratio = learned_error / random_error;
    if (ratio <= kRatio) ++wins;
    detail += (detail.empty() ? "" : ", ") + std::string("seed ") + std::to_string(seed) + " ratio " + fmt(ratio) +
              " (train loss " + fmt(seq.rounds.front().loss_trace.front()) + " -> " +
              fmt(seq.rounds.front().loss_trace.back()) + ")";
  }
  return {wins >= 2, std::to_string(wins) + "/3 seeds with learned <= 0.8 x random: " + detail};
}

// ---- 9 ------------------------------------------------------------------------------------

Outcome table1_direction() {
  constexpr double kRatio = 0.75;
  Rng rng(9);
  const Dataset ds = gen_leverage_dataset(1000, 10, 0.1, 0.1, 0.0, 100, rng);
  const std::vector<Index> ms{50, 70, 100};
  bool pass = true;
  std::string detail;
  for (OracleBudget budget : {OracleBudget::Extra, OracleBudget::Total}) {
    Table1Options plain;
    plain.seed = 99;
    plain.budget = budget;
    Table1Options with = plain;
    with.with_oracle = true;
    const auto a = table1_experiment(ds.train, ms, plain);
    const auto b = table1_experiment(ds.train, ms, with);
    detail += (detail.empty() ? "" : "; ") + to_string(budget) + ":";
    for (Index m : ms) {
      double ea = 0.0, eb = 0.0;
      for (const auto& r : a)
        if (r.m == m) ea += r.error;
      for (const auto& r : b)
        if (r.m == m) eb += r.error;
      const double ratio = eb / ea;
      if (budget == OracleBudget::Extra && !(ratio <= kRatio)) pass = false;
      detail += " m=" + std::to_string(m) + " " + fmt(ratio);
    }
  }
  return {pass, "with/without mean error ratio (<= 0.75 under the default extra budget; total shown for reference) " +
                    detail};
}

// ---- 10 -----------------------------------------------------------------------------------

// File contents below root with every *time_ms column blanked.
std::map<std::string, std::string> normalized_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream text;
    std::vector<std::size_t> drop;
    bool first = true;
    for (std::string line; std::getline(in, line);) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
      if (first && e.path().extension() == ".csv") {
        for (std::size_t i = 0; i < cells.size(); ++i)
          if (cells[i].size() >= 7 && cells[i].compare(cells[i].size() - 7, 7, "time_ms") == 0) drop.push_back(i);
      }
      first = false;
      for (std::size_t i : drop)
        if (i < cells.size()) cells[i].clear();
      for (std::size_t i = 0; i < cells.size(); ++i) text << (i ? "," : "") << cells[i];
      text << '\n';
    }
    out[fs::relative(e.path(), root).string()] = text.str();
  }
  return out;
}

Outcome reproducibility() {
  const fs::path root = fs::temp_directory_path() / "hsk_acceptance_repro";
  fs::remove_all(root);
  std::string failure;
  auto run = [&](const fs::path& base, std::vector<std::string> args) {
    for (auto& a : args)
      for (std::size_t at = a.find("@/"); at != std::string::npos; at = a.find("@/"))
        a.replace(at, 2, base.string() + "/");
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    if (code != 0 && failure.empty()) failure = args.front() + " exited " + std::to_string(code) + ": " + err.str();
  };
  // Shared input: the chunked dataset records its source path.
  fs::create_directories(root);
  const std::string raw = (root / "raw.csv").string();
  {
    std::ofstream csv(raw);
    Rng rng(10);
    const Matrix M = gaussian_matrix(400, 5, rng);
    for (Index i = 0; i < M.rows(); ++i)
      for (Index j = 0; j < M.cols(); ++j) csv << format_double(M(i, j)) << (j + 1 < M.cols() ? "," : "\n");
  }
  for (const char* copy : {"a", "b"}) {
    const fs::path base = root / copy;
    fs::create_directories(base / "results");
    run(base, {"gen-data", "--family", "lowrank-matrix", "--n", "80", "--d1", "4", "--d2", "3", "--r", "2", "--rho",
               "8", "--train", "3", "--test", "2", "--seed", "11", "--out", "@/lowrank"});
    run(base, {"gen-data", "--family", "gaussian-mixture-svm", "--n", "10", "--d", "20", "--train", "2", "--test", "2",
               "--seed", "12", "--out", "@/svm"});
    run(base, {"gen-data", "--family", "gaussian-regression", "--n", "120", "--d", "5", "--constraint", "l1", "--train",
               "3", "--test", "2", "--seed", "13", "--out", "@/lasso"});
    run(base, {"gen-data", "--family", "leverage-synthetic", "--n", "200", "--d", "4", "--eps", "0.2", "--train", "2",
               "--test", "1", "--seed", "14", "--out", "@/leverage"});
    run(base, {"gen-data", "--family", "csv-chunked", "--csv", raw, "--rows-per-chunk", "50", "--train-frac",
               "0.75", "--seed", "15", "--out", "@/chunks"});
    run(base, {"train", "--task", "ihs-lasso", "--data", "@/lasso", "--m", "20", "--rounds", "2", "--steps", "3",
               "--seed", "16", "--out", "@/lasso_seq.json"});
    run(base, {"train", "--task", "ihs-nuclear", "--data", "@/lowrank", "--m", "20", "--steps", "2", "--seed", "17",
               "--out", "@/nuclear_seq.json"});
    run(base, {"train", "--task", "fastreg", "--data", "@/chunks", "--m", "12", "--steps", "2", "--seed", "18",
               "--out", "@/fastreg_seq.json"});
    run(base, {"run-ihs", "--data", "@/lasso", "--sketch", "gaussian,countsketch,sjlt:2,learned:@/lasso_seq.json",
               "--m", "20", "--rounds", "3", "--trials", "2", "--threads", "3", "--seed", "19", "--out",
               "@/results/ihs.csv"});
    run(base, {"run-ihs", "--data", "@/svm", "--sketch", "countsketch", "--m", "30", "--rounds", "2", "--trials", "2",
               "--seed", "20", "--out", "@/results/svm.csv"});
    run(base, {"run-fastreg", "--data", "@/chunks", "--m", "12", "--sketch-learned", "@/fastreg_seq.json", "--rounds",
               "2", "--trials", "2", "--trace", "--threads", "2", "--seed", "21", "--out", "@/results/fastreg.csv"});
    run(base, {"run-oracle-se", "--data", "synthetic:eps=0.2,n=200,d=4,count=5", "--m-list", "5d,10d", "--trials", "3",
               "--threads", "2", "--seed", "22", "--out", "@/results/oracle.csv"});
    run(base, {"run-oracle-se", "--data", "@/leverage", "--m-list", "20", "--budget", "total", "--trials", "2",
               "--seed", "23", "--out", "@/results/oracle_dir.csv"});
    run(base, {"report", "@/results/ihs.csv", "--out", "@/report.csv"});
  }
  const auto a = fs::exists(root / "a") ? normalized_tree(root / "a") : std::map<std::string, std::string>{};
  const auto b = fs::exists(root / "b") ? normalized_tree(root / "b") : std::map<std::string, std::string>{};
  std::size_t differing = 0;
  std::string first_diff;
  for (const auto& [path, text] : a)
    if (!b.count(path) || b.at(path) != text) {
      if (first_diff.empty()) first_diff = path;
      ++differing;
    }
  if (a.size() != b.size()) ++differing;
  fs::remove_all(root);
  const bool pass = failure.empty() && differing == 0 && a.size() > 10;
  return {pass, std::to_string(a.size()) + " output files compared, " + std::to_string(differing) + " differing" +
                    (first_diff.empty() ? "" : " (first: " + first_diff + ")") +
                    (failure.empty() ? "" : "; " + failure.substr(0, failure.find('\n')))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance gate"};
  std::vector<int> selected;
  app.add_option("--criterion", selected, "Criterion number (repeatable); all when omitted")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"identity contracts", identity_contracts},
      {"estimator intervals", estimator_intervals},
      {"selection safeguard", safeguard},
      {"subspace embedding", embedding_statistics},
      {"preconditioner quality", preconditioner_quality},
      {"projection oracles", projection_oracles},
      {"IHS contraction", ihs_contraction},
      {"learned sketch improvement", learned_improvement},
      {"oracle direction", table1_direction},
      {"reproducibility", reproducibility},
  };
  if (selected.empty())
    for (int i = 1; i <= 10; ++i) selected.push_back(i);

  bool all = true;
  for (int id : selected) {
    const auto& [name, run] = criteria[static_cast<std::size_t>(id - 1)];
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "criterion " << id << " (" << name << "): " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  ["
              << fmt(secs, 3) << " s]" << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
