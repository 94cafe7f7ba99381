// Acceptance gate: one PASS/FAIL/SKIP line per criterion.
//
//   nnqf_acceptance            all criteria
//   nnqf_acceptance 4 5        selected criteria
//
// Exit status: 0 all pass, 1 any failure, 77 when every selected criterion skipped.
// Criteria that need the Ausgrid data read a run config from NNQF_AUSGRID_CONFIG.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nnqf/config.hpp"
#include "nnqf/evaluation.hpp"
#include "nnqf/features.hpp"
#include "nnqf/knn_quantile.hpp"
#include "nnqf/pipeline.hpp"
#include "nnqf/regression.hpp"
#include "nnqf/synthetic.hpp"
#include "oracles.hpp"

using namespace nnqf;
namespace fs = std::filesystem;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome pass_if(bool ok, std::string detail) { return {ok ? Status::Pass : Status::Fail, std::move(detail)}; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("nnqf_accept_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream b;
  b << in.rdbuf();
  return b.str();
}

std::size_t workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// Published Ausgrid results (percent), Poly1..Poly3 per k_NN = 50, 70, 100, 120.
const std::map<std::size_t, std::array<double, 3>> kTable1{
    {50, {5.93, 5.66, 5.89}}, {70, {5.95, 5.68, 5.95}}, {100, {5.95, 5.67, 5.93}}, {120, {5.94, 5.66, 5.91}}};
const std::map<std::size_t, std::array<double, 3>> kTable2{
    {50, {4.21, 4.21, 4.22}}, {70, {4.21, 4.21, 4.22}}, {100, {4.21, 4.21, 4.22}}, {120, {4.21, 4.21, 4.22}}};
const std::map<std::size_t, std::array<double, 3>> kTable3{
    {50, {4.57, 4.51, 4.76}}, {70, {4.24, 4.21, 4.47}}, {100, {3.98, 3.99, 4.26}}, {120, {3.86, 3.90, 4.19}}};
const std::map<std::size_t, std::array<double, 3>> kTable4{
    {50, {38.56, 38.54, 38.66}}, {70, {38.54, 38.53, 38.65}}, {100, {38.53, 38.52, 38.64}}, {120, {38.53, 38.51, 38.64}}};

// Largest |ours - reference| in percentage points over the cells both tables have.
struct TableComparison {
  double worst = 0.0;
  std::size_t cells = 0;
};
TableComparison compare(const SummaryTable& t, const std::map<std::size_t, std::array<double, 3>>& reference,
                        double SummaryRow::*metric) {
  TableComparison c;
  for (const auto& row : t.rows) {
    const auto it = reference.find(row.knn);
    if (it == reference.end() || row.technique.rfind("Poly", 0) != 0) continue;
    const int d = std::stoi(row.technique.substr(4));
    if (d < 1 || d > 3) continue;
    c.worst = std::max(c.worst, std::abs(100.0 * (row.*metric) - it->second[static_cast<std::size_t>(d - 1)]));
    ++c.cells;
  }
  return c;
}

// --- full-dataset run, shared by criteria 1a, 2a, 3a -------------------------

struct DatasetRun {
  RunConfig config;
  SummaryTable table;
  std::vector<TimeSeriesFrame> frames;
  double seconds = 0.0;
};

std::optional<DatasetRun>& dataset_run() {
  static std::optional<DatasetRun> run;
  static bool attempted = false;
  if (attempted) return run;
  attempted = true;
  const char* env = std::getenv("NNQF_AUSGRID_CONFIG");
  if (!env || !*env) return run;
  DatasetRun r;
  r.config = load_config(env);
  r.config.workers = std::max(r.config.workers, workers());
  const auto t0 = std::chrono::steady_clock::now();
  auto p = Pipeline::create(r.config, [](const std::string& s) { std::cerr << "  " << s << '\n'; });
  p.run();
  r.seconds = seconds_since(t0);
  r.table = aggregate(p.reports());
  r.frames = p.frames();
  run = std::move(r);
  return run;
}

Outcome skip_without_dataset() { return {Status::Skip, "NNQF_AUSGRID_CONFIG not set; the Ausgrid dataset is not available"}; }

Outcome criterion_1a() {
  auto& run = dataset_run();
  if (!run) return skip_without_dataset();
  const auto t1 = compare(run->table, kTable1, &SummaryRow::quantile_reliability);
  const auto t2 = compare(run->table, kTable2, &SummaryRow::quantile_pinball);
  return pass_if(t1.cells > 0 && t2.cells > 0 && t1.worst <= 2.0 && t2.worst <= 1.0,
                 "table 1 worst cell off by " + fmt("%.2f", t1.worst) + " pp (tol 2.0), table 2 by " +
                     fmt("%.2f", t2.worst) + " pp (tol 1.0) over " + std::to_string(t1.cells) + " cells");
}

Outcome criterion_2a() {
  auto& run = dataset_run();
  if (!run) return skip_without_dataset();
  const auto t3 = compare(run->table, kTable3, &SummaryRow::interval_reliability);
  const auto t4 = compare(run->table, kTable4, &SummaryRow::interval_pinball);
  double worst_signed = -1e300;
  for (const auto& row : run->table.rows) worst_signed = std::max(worst_signed, row.interval_reliability_signed);
  return pass_if(t3.cells > 0 && t3.worst <= 2.0 && t4.worst <= 2.0 && worst_signed <= 0.0,
                 "table 3 worst cell off by " + fmt("%.2f", t3.worst) + " pp, table 4 by " + fmt("%.2f", t4.worst) +
                     " pp (tol 2.0); max mean signed interval deviation " + fmt("%.4f", worst_signed) + " (must be <= 0)");
}

NightAccuracy pooled_night_accuracy(const std::vector<TimeSeriesFrame>& frames, const FeatureSpec& geometry, double tau) {
  NightAccuracy total{0, 0, 0.0, 0.0};
  std::size_t flagged_ok = 0, agree = 0;
  for (const auto& f : frames) {
    FeatureSpec spec = geometry;
    spec.selected = {0};
    const SeriesBundle bundle(f, spec);
    const auto ls = assemble(bundle, spec);
    const auto mask = night_mask(f, ls.origins, spec, tau);
    const auto acc = night_accuracy(f, ls.origins, mask, spec);
    total.pairs += acc.pairs;
    total.flagged += acc.flagged;
    flagged_ok += static_cast<std::size_t>(std::llround(acc.precision * static_cast<double>(acc.flagged)));
    agree += static_cast<std::size_t>(std::llround(acc.accuracy * static_cast<double>(acc.pairs)));
  }
  total.precision = total.flagged ? static_cast<double>(flagged_ok) / static_cast<double>(total.flagged) : 1.0;
  total.accuracy = total.pairs ? static_cast<double>(agree) / static_cast<double>(total.pairs) : 1.0;
  return total;
}

Outcome night_outcome(const NightAccuracy& a) {
  return pass_if(a.precision >= 0.97 && a.accuracy >= 0.97,
                 "flagged pairs truly night " + fmt("%.4f", a.precision) + ", agreement with the target test " +
                     fmt("%.4f", a.accuracy) + " over " + std::to_string(a.pairs) + " pairs (tol 0.97)");
}

Outcome criterion_3a() {
  auto& run = dataset_run();
  if (!run) return skip_without_dataset();
  return night_outcome(pooled_night_accuracy(run->frames, run->config.features, run->config.night_threshold));
}

// --- desk-scale and synthetic criteria ---------------------------------------

Outcome criterion_1b() {
  const auto dir = scratch("desk");
  SyntheticPvOptions o;
  o.households = 5;
  o.days = 548;  // K = 52608
  o.seed = 2016;
  write_wide_csv(dir / "pv.csv", synthetic_pv(o));
  RunConfig c;
  c.data_path = dir / "pv.csv";
  c.out = dir / "out";
  c.workers = workers();
  const auto t0 = std::chrono::steady_clock::now();
  auto p = Pipeline::create(c);
  p.run();
  const double secs = seconds_since(t0);
  const auto table = aggregate(p.reports());
  const bool shape = table.techniques() == std::vector<std::string>{"Poly1", "Poly2", "Poly3"} &&
                     table.knns() == std::vector<std::size_t>{50, 70, 100, 120};
  std::string detail = "5 households x K=" + std::to_string(p.frames().front().size()) + ", 4 k_NN x 3 degrees in " +
                       fmt("%.1f", secs) + " s (limit 900 s); synthetic table 1 Poly1..3 at k=50:";
  for (const char* t : {"Poly1", "Poly2", "Poly3"})
    if (const auto* r = table.find(t, 50)) detail += " " + fmt("%.2f", 100 * r->quantile_reliability);
  fs::remove_all(dir);
  return pass_if(shape && secs < 900.0, detail);
}

Outcome criterion_2b() {
  const auto grid = QuantileGrid::standard();
  const auto pairs = build_intervals(grid);
  bool ok = pairs.size() == 49;
  for (std::size_t i = 0; ok && i < pairs.size(); ++i) {
    const int upper = static_cast<int>(std::lround(grid[pairs[i].upper] * 100));
    const int lower = static_cast<int>(std::lround(grid[pairs[i].lower] * 100));
    const int cov = static_cast<int>(std::lround(pairs[i].coverage * 100));
    ok = upper == 51 + static_cast<int>(i) && lower == 49 - static_cast<int>(i) && cov == 2 * static_cast<int>(i + 1) &&
         std::abs(pairs[i].coverage - (grid[pairs[i].upper] - grid[pairs[i].lower])) < 1e-12;
  }
  return pass_if(ok, std::to_string(pairs.size()) + " intervals, (" + fmt("%.2f", grid[pairs.front().upper]) + ", " +
                         fmt("%.2f", grid[pairs.front().lower]) + ") .. (" + fmt("%.2f", grid[pairs.back().upper]) + ", " +
                         fmt("%.2f", grid[pairs.back().lower]) + "), coverage " + fmt("%.2f", pairs.front().coverage) +
                         " .. " + fmt("%.2f", pairs.back().coverage) + " step 0.02");
}

Outcome criterion_3b() {
  SyntheticPvOptions o;
  o.households = 5;
  o.days = 548;
  o.seed = 2016;
  std::vector<TimeSeriesFrame> frames;
  for (const auto& f : synthetic_pv(o)) frames.push_back(normalize(f));
  auto r = night_outcome(pooled_night_accuracy(frames, FeatureSpec{}, 1e-4));
  r.detail = "synthetic proxy: " + r.detail;
  return r;
}

Outcome criterion_4() {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> size(1, 120);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto grid = QuantileGrid::standard();
  double worst = 0.0;
  const int cases = 10000;
  const auto t0 = std::chrono::steady_clock::now();
  double elapsed_ours = 0.0;
  for (int c = 0; c < cases; ++c) {
    std::vector<double> v(static_cast<std::size_t>(size(rng)));
    for (auto& x : v) x = c % 3 == 0 ? std::floor(u(rng) * 5) / 4 : u(rng);  // some inputs repeat values
    std::sort(v.begin(), v.end());
    const double q = c % 2 ? grid[static_cast<std::size_t>(c) % 99] : 0.01 + 0.98 * u(rng);
    const auto t1 = std::chrono::steady_clock::now();
    const double ours = empirical_quantile(v, q);
    elapsed_ours += seconds_since(t1);
    worst = std::max(worst, std::abs(ours - oracle::plotting_position_quantile(v, q)));
  }
  const double secs = seconds_since(t0);
  return pass_if(worst <= 1e-12 && secs < 5.0,
                 std::to_string(cases) + " cases, max |diff| " + fmt("%.3g", worst) + " (tol 1e-12), " + fmt("%.3f", secs) +
                     " s including the oracle (limit 5 s), " + fmt("%.4f", elapsed_ours) + " s in empirical_quantile");
}

Outcome criterion_5() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto t0 = std::chrono::steady_clock::now();
  double worst_rel = 0.0, worst_kkt = 0.0, worse_than_ref = 0.0, solver_secs = 0.0;
  std::size_t solves = 0, active = 0;
  const int instances = 200;
  for (int inst = 0; inst < instances; ++inst) {
    const int N = 5 + static_cast<int>(u(rng) * 46);  // 5..50
    const int degree = 1 + inst % 3;
    const int max_s = std::max(1, 5 / degree);
    const int S = 1 + static_cast<int>(u(rng) * max_s);  // width 1 + S*d <= 6
    Eigen::MatrixXd X(N, S);
    for (int i = 0; i < N; ++i)
      for (int s = 0; s < S; ++s) X(i, s) = u(rng);
    const Eigen::MatrixXd A = expand(X, {degree});

    TransformedTargets targets;
    if (inst % 2 == 0) {
      // Neighbor-transformed targets on the full grid.
      Eigen::VectorXd y(N);
      for (int i = 0; i < N; ++i) y(i) = std::max(0.0, X(i, 0) - 0.3 + 0.4 * (u(rng) - 0.5));
      const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(N), 3 + inst % 12);
      targets = transform_targets(y, pairwise_neighbors(X, compute_weights(X), k), QuantileGrid::standard());
    } else {
      // Unordered random targets on a coarse grid: many binding constraints.
      targets.grid = QuantileGrid({0.1, 0.3, 0.5, 0.7, 0.9});
      targets.k = 1;
      targets.values.resize(N, 5);
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < 5; ++j) targets.values(i, j) = u(rng) - 0.2;
    }

    const FitOptions options;
    const auto ts = std::chrono::steady_clock::now();
    const auto fit = fit_sequential(A, targets, options);
    solver_secs += seconds_since(ts);
    Eigen::VectorXd prev = Eigen::VectorXd::Zero(A.cols());
    for (std::size_t j = 0; j < targets.grid.size(); ++j) {
      const Eigen::VectorXd y = targets.level(j);
      const Eigen::VectorXd lower = j == 0 ? Eigen::VectorXd::Zero(N) : Eigen::VectorXd(A * prev);
      Eigen::VectorXd start = prev;
      start(0) += std::max(1.0, y.cwiseAbs().maxCoeff());
      const auto ref = oracle::barrier_qp(A, y, lower, options.ridge, start);
      const double ours = fit.diagnostics[j].objective;
      const double denom = std::max(std::abs(ref.objective), 1e-6);
      worst_rel = std::max(worst_rel, std::abs(ours - ref.objective) / denom);
      worse_than_ref = std::max(worse_than_ref, (ours - ref.objective) / denom);
      worst_kkt = std::max(worst_kkt, fit.diagnostics[j].kkt_residual);
      active += fit.diagnostics[j].active_constraints;
      prev = fit.coefficients[j];
      ++solves;
    }
  }
  const double secs = seconds_since(t0);
  // The limit covers solver and reference together.
  return pass_if(worst_rel <= 1e-6 && worst_kkt <= 1e-6 && secs < 60.0,
                 std::to_string(instances) + " instances, " + std::to_string(solves) + " solves (" + std::to_string(active) +
                     " active constraints in total): max relative objective gap " + fmt("%.3g", worst_rel) +
                     " (tol 1e-6; largest excess over the reference " + fmt("%.3g", worse_than_ref) + "), max KKT residual " +
                     fmt("%.3g", worst_kkt) + " (tol 1e-6), solver " + fmt("%.2f", solver_secs) + " s + " +
                     fmt("%.1f", secs - solver_secs) + " s in the barrier reference (limit 60 s)");
}

RunConfig sample_config(const fs::path& out) {
  RunConfig c = load_config(fs::path(NNQF_SOURCE_DIR) / "data" / "sample.ini");
  c.out = out;
  c.workers = workers();
  return c;
}

Outcome criterion_6() {
  const auto dir = scratch("monotone");
  auto p = Pipeline::create(sample_config(dir));
  p.ingest();
  p.train();
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  std::size_t violations = 0, curves = 0;
  for (const auto& m : p.models()) {
    std::vector<double> x(m.features.size());
    for (int draw = 0; draw < 1000; ++draw) {
      for (auto& v : x) v = u(rng);
      const auto c = m.predict(x);
      ++curves;
      if (c.front() < 0.0) ++violations;
      for (std::size_t j = 1; j < c.size(); ++j)
        if (c[j] < c[j - 1]) ++violations;
    }
  }
  fs::remove_all(dir);
  return pass_if(violations == 0 && !p.models().empty(),
                 std::to_string(p.models().size()) + " fitted model sets x 1000 random inputs: " + std::to_string(violations) +
                     " violations in " + std::to_string(curves) + " curves");
}

Outcome criterion_7() {
  HeteroscedasticOptions o;
  o.period = 96;
  FeatureSpec spec;
  spec.horizon = 96;
  spec.max_lag = 0;
  spec.period = 96;
  spec.window_days = 0;
  spec.num_features = 1;
  spec.exogenous_channels = {"profile"};
  spec.selected = {3};  // profile[k-0]
  const std::size_t test_pairs = 10000;
  // Each half must hold test_pairs + H samples.
  o.length = 2 * (test_pairs + 96);
  const auto frame = synthetic_heteroscedastic(o);
  const auto [train, test] = split(frame, {}, 97);
  const SeriesBundle train_bundle(train, spec), test_bundle(test, spec);
  const auto train_set = day_rows(assemble(train_bundle, spec), night_mask(train, assemble(train_bundle, spec).origins, spec, 1e-4));
  const auto test_all = assemble(test_bundle, spec);
  const auto test_set = day_rows(test_all, night_mask(test, test_all.origins, spec, 1e-4));

  const auto grid = QuantileGrid::standard();
  const auto table = pairwise_neighbors(train_set.X, compute_weights(train_set.X), 100);
  const auto targets = transform_targets(train_set.y, table, grid);
  bool ok = test_set.rows() == test_pairs;
  std::string detail = std::to_string(test_set.rows()) + " test pairs, k_NN=100:";
  for (int d = 1; d <= 3; ++d) {
    QuantileModelSet m;
    m.polynomial = {d};
    m.knn = 100;
    m.feature_spec = spec;
    m.features = spec.selected_descriptors();
    m.grid = grid;
    m.coefficients = fit_sequential(expand(train_set.X, m.polynomial), targets).coefficients;
    const auto pred = m.predict(test_set.X, std::vector<std::uint8_t>(test_set.rows(), 0));
    const auto report = evaluate(test_set.y, pred, grid);
    double worst_truth = 0.0;
    detail += " Poly" + std::to_string(d) + " |dRl|";
    for (double q : {0.1, 0.5, 0.9}) {
      const auto j = grid.find(q);
      const double dev = report.quantile_reliability[j];
      ok = ok && std::abs(dev) <= 0.03;
      detail += " " + fmt("%.4f", std::abs(dev));
      for (Eigen::Index n = 0; n < test_set.X.rows(); n += 97) {
        worst_truth = std::max(worst_truth, std::abs(pred(n, static_cast<Eigen::Index>(j)) -
                                                     heteroscedastic_quantile(test_set.X(n, 0), q)));
      }
    }
    detail += " (max gap to analytic quantile " + fmt("%.4f", worst_truth) + ");";
  }
  detail += " tol 0.03";
  return pass_if(ok, detail);
}

Outcome criterion_8() {
  const auto dir = scratch("determinism");
  auto a = Pipeline::create(sample_config(dir / "a"));
  a.run();
  auto b = Pipeline::create(sample_config(dir / "b"));
  b.run();
  std::size_t compared = 0, differing = 0;
  for (const char* sub : {"models", "evaluation", "report"}) {
    for (const auto& e : fs::directory_iterator(a.run_dir() / sub)) {
      ++compared;
      const auto other = b.run_dir() / sub / e.path().filename();
      if (!fs::exists(other) || slurp(e.path()) != slurp(other)) ++differing;
    }
  }
  auto c = Pipeline::create(sample_config(dir / "a"));
  c.run();
  std::size_t recomputed = 0;
  for (const auto& [stage, s] : c.stage_status()) recomputed += s.misses;
  fs::remove_all(dir);
  return pass_if(compared > 0 && differing == 0 && recomputed == 0,
                 std::to_string(compared) + " model/evaluation/report files compared across two fresh runs, " +
                     std::to_string(differing) + " differ; repeated run recomputed " + std::to_string(recomputed) +
                     " artifacts");
}

struct Criterion {
  std::string id;
  std::string title;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {"1a", "tables 1-2 on the Ausgrid dataset", criterion_1a},
      {"1b", "desk-scale run time", criterion_1b},
      {"2a", "tables 3-4 and interval sign pattern on the Ausgrid dataset", criterion_2a},
      {"2b", "49-interval construction", criterion_2b},
      {"3a", "night filter accuracy on the Ausgrid dataset", criterion_3a},
      {"3b", "night filter accuracy on synthetic PV", criterion_3b},
      {"4", "quantile transform oracle", criterion_4},
      {"5", "QP optimality", criterion_5},
      {"6", "monotonicity suite", criterion_6},
      {"7", "synthetic recovery", criterion_7},
      {"8", "determinism", criterion_8},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> wanted(argv + 1, argv + argc);
  bool any_fail = false, all_skip = true;
  for (const auto& c : criteria()) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Status::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
    std::cout << tag << "  [" << c.id << "] " << c.title << ": " << o.detail << " (" << fmt("%.1f", seconds_since(t0))
              << " s)" << std::endl;
    any_fail = any_fail || o.status == Status::Fail;
    all_skip = all_skip && o.status == Status::Skip;
  }
  if (any_fail) return 1;
  return all_skip ? 77 : 0;
}
