#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "nnqf/evaluation.hpp"

using namespace nnqf;

TEST_CASE("reliability deviation of a quantile") {
  std::vector<double> y(10, 0.5), p(10, 0.4);
  for (int i = 0; i < 3; ++i) p[static_cast<std::size_t>(i)] = 0.6;
  CHECK(reliability_deviation_quantile(y, p, 0.5) == doctest::Approx(-0.2));
  std::vector<double> above(10, 2.0);
  CHECK(reliability_deviation_quantile(y, above, 0.9) == doctest::Approx(0.1));
  CHECK(reliability_deviation_quantile(y, y, 0.5) == doctest::Approx(-0.5));
  CHECK_THROWS(reliability_deviation_quantile(std::span<const double>{}, std::span<const double>{}, 0.5));
}

TEST_CASE("pinball loss of a quantile") {
  std::vector<double> one{1}, zero{0};
  CHECK(pinball_quantile(one, zero, 0.9) == doctest::Approx(0.9));
  CHECK(pinball_quantile(zero, one, 0.9) == doctest::Approx(0.1));
  CHECK(pinball_quantile(one, one, 0.9) == 0.0);
  CHECK_THROWS(pinball_quantile(std::span<const double>{}, std::span<const double>{}, 0.5));
}

TEST_CASE("interval reliability deviation") {
  std::vector<double> y{0.2, 0.5, 0.7};
  std::vector<double> lo(3, 0.0), hi(3, 1.0);
  CHECK(reliability_deviation_interval(y, {0.9, 0.1, hi, lo}) == doctest::Approx(0.2));
  std::vector<double> lo2(3, 0.8), hi2(3, 0.9);
  CHECK(reliability_deviation_interval(y, {0.9, 0.1, hi2, lo2}) == doctest::Approx(-0.8));
  std::vector<double> t{0.3}, l{0.3}, u{0.5}, uu{0.3};
  CHECK(reliability_deviation_interval(t, {0.9, 0.1, u, l}) == doctest::Approx(1.0 - 0.8));
  // Upper bound is exclusive.
  CHECK(reliability_deviation_interval(t, {0.9, 0.1, uu, l}) == doctest::Approx(-0.8));
  CHECK_THROWS(reliability_deviation_interval(std::span<const double>{}, {0.9, 0.1, {}, {}}));
}

TEST_CASE("interval pinball loss") {
  std::vector<double> y{0.5}, lo{0.2}, hi{0.8};
  CHECK(pinball_interval(y, {0.8, 0.2, hi, lo}) == doctest::Approx(0.6));
  std::vector<double> y2{0.9};
  CHECK(pinball_interval(y2, {0.8, 0.2, hi, lo}) == doctest::Approx(1.1));
  std::vector<double> same{0.4};
  CHECK(pinball_interval(same, {0.7, 0.3, same, same}) == doctest::Approx(0.0));
  CHECK_THROWS(pinball_interval(y, {0.8, 0.1, hi, lo}));
}

TEST_CASE("49 intervals with coverage 0.02 to 0.98") {
  const auto grid = QuantileGrid::standard();
  const auto pairs = build_intervals(grid);
  REQUIRE(pairs.size() == 49);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(grid[pairs[i].upper] == doctest::Approx(0.51 + 0.01 * static_cast<double>(i)));
    CHECK(grid[pairs[i].lower] == doctest::Approx(0.49 - 0.01 * static_cast<double>(i)));
    CHECK(pairs[i].coverage == doctest::Approx(0.02 * static_cast<double>(i + 1)));
    CHECK(grid[pairs[i].upper] + grid[pairs[i].lower] == doctest::Approx(1.0));
  }
  CHECK(pairs.front().coverage == doctest::Approx(0.02));
  CHECK(pairs.back().coverage == doctest::Approx(0.98));
  std::vector<double> partial;
  for (std::size_t j = 0; j < grid.size(); ++j)
    if (j != 36) partial.push_back(grid[j]);
  CHECK_THROWS(build_intervals(QuantileGrid(partial)));
}

namespace {

struct Sample {
  std::vector<double> y;
  Eigen::MatrixXd pred;
};

Sample random_sample(std::mt19937_64& rng, int N) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Sample s;
  s.y.resize(static_cast<std::size_t>(N));
  s.pred.resize(N, 99);
  for (int n = 0; n < N; ++n) {
    s.y[static_cast<std::size_t>(n)] = u(rng);
    std::vector<double> c(99);
    for (auto& v : c) v = u(rng);
    std::sort(c.begin(), c.end());
    for (int j = 0; j < 99; ++j) s.pred(n, j) = c[static_cast<std::size_t>(j)];
  }
  return s;
}

}  // namespace

TEST_CASE("metric properties") {
  std::mt19937_64 rng(71);
  const auto grid = QuantileGrid::standard();
  const auto s = random_sample(rng, 200);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(s.y.data(), 200);
  const auto r = evaluate(y, s.pred, grid);
  CHECK(r.day_pairs == 200);
  for (std::size_t j = 0; j < 99; ++j) {
    CHECK(r.quantile_reliability[j] >= -grid[j] - 1e-12);
    CHECK(r.quantile_reliability[j] <= 1 - grid[j] + 1e-12);
    CHECK(r.quantile_pinball[j] >= 0.0);
  }
  const auto pairs = build_intervals(grid);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double cov = pairs[i].coverage;
    CHECK(r.interval_reliability[i] >= -cov - 1e-12);
    CHECK(r.interval_reliability[i] <= 1 - cov + 1e-12);
    const Eigen::VectorXd width = s.pred.col(static_cast<Eigen::Index>(pairs[i].upper)) - s.pred.col(static_cast<Eigen::Index>(pairs[i].lower));
    CHECK(r.interval_pinball[i] >= width.mean() - 1e-12);
  }
  // Aggregates are recomputable from the entries.
  double sum = 0;
  for (double v : r.quantile_reliability) sum += std::abs(v);
  CHECK(r.mean_abs_quantile_reliability() == doctest::Approx(sum / 99));

  // q = 0.5 pinball is half the mean absolute error.
  std::vector<double> med(200);
  for (int n = 0; n < 200; ++n) med[static_cast<std::size_t>(n)] = s.pred(n, 49);
  double mae = 0;
  for (int n = 0; n < 200; ++n) mae += std::abs(s.y[static_cast<std::size_t>(n)] - med[static_cast<std::size_t>(n)]);
  CHECK(pinball_quantile(s.y, med, 0.5) == doctest::Approx(0.5 * mae / 200));

  // Joint permutation leaves every metric unchanged.
  std::vector<int> perm(200);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::VectorXd yp(200);
  Eigen::MatrixXd pp(200, 99);
  for (int n = 0; n < 200; ++n) {
    yp(n) = y(perm[static_cast<std::size_t>(n)]);
    pp.row(n) = s.pred.row(perm[static_cast<std::size_t>(n)]);
  }
  const auto rp = evaluate(yp, pp, grid);
  for (std::size_t j = 0; j < 99; ++j) {
    CHECK(rp.quantile_reliability[j] == doctest::Approx(r.quantile_reliability[j]));
    CHECK(rp.quantile_pinball[j] == doctest::Approx(r.quantile_pinball[j]));
  }
  for (std::size_t i = 0; i < 49; ++i) CHECK(rp.interval_pinball[i] == doctest::Approx(r.interval_pinball[i]));
}

TEST_CASE("pinball zero iff exact, interval pinball equals width iff all inside") {
  std::vector<double> y{0.1, 0.4, 0.9};
  CHECK(pinball_quantile(y, y, 0.3) == 0.0);
  std::vector<double> off{0.1, 0.41, 0.9};
  CHECK(pinball_quantile(y, off, 0.3) > 0.0);
  std::vector<double> lo{0.0, 0.0, 0.0}, hi{1.0, 1.0, 1.0};
  CHECK(pinball_interval(y, {0.6, 0.4, hi, lo}) == doctest::Approx(1.0));
  std::vector<double> hi2{1.0, 1.0, 0.5};
  CHECK(pinball_interval(y, {0.6, 0.4, hi2, lo}) > (1.0 + 1.0 + 0.5) / 3);
}

namespace {

EvalReport report_with(const std::string& hh, const std::string& tech, std::size_t k, double dq, double lq) {
  EvalReport r;
  r.household_id = hh;
  r.technique = tech;
  r.knn = k;
  r.day_pairs = 10;
  r.levels = {0.5};
  r.quantile_reliability = {dq};
  r.quantile_pinball = {lq};
  return r;
}

}  // namespace

TEST_CASE("aggregate") {
  SUBCASE("single entry") {
    const auto t = aggregate({report_with("a", "Poly1", 50, -0.02, 0.04)});
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0].quantile_reliability == doctest::Approx(0.02));
    CHECK(t.rows[0].quantile_pinball == doctest::Approx(0.04));
  }
  SUBCASE("mean of absolute values") {
    const auto t = aggregate({report_with("a", "Poly1", 50, 0.02, 0.0), report_with("b", "Poly1", 50, -0.04, 0.0)});
    CHECK(t.rows[0].quantile_reliability == doctest::Approx(0.03));
  }
  SUBCASE("table shape") {
    std::vector<EvalReport> rs;
    for (const char* tech : {"Poly1", "Poly2", "Poly3"})
      for (std::size_t k : {50, 70, 100, 120}) rs.push_back(report_with("a", tech, k, 0.01, 0.01));
    const auto t = aggregate(rs);
    CHECK(t.knns() == std::vector<std::size_t>{50, 70, 100, 120});
    CHECK(t.techniques() == std::vector<std::string>{"Poly1", "Poly2", "Poly3"});
    const auto path = std::filesystem::temp_directory_path() / "nnqf_table_test.csv";
    write_table_csv(path, t, TableMetric::QuantileReliability);
    std::ifstream in(path);
    std::string header, line;
    std::getline(in, header);
    CHECK(header == "k_NN,Poly1,Poly2,Poly3");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 4);
    std::filesystem::remove(path);
  }
  SUBCASE("empty") { CHECK_THROWS(aggregate({})); }
}

TEST_CASE("reports csv round-trip") {
  std::mt19937_64 rng(73);
  const auto s = random_sample(rng, 50);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(s.y.data(), 50);
  auto r = evaluate(y, s.pred, QuantileGrid::standard());
  r.household_id = "h1";
  r.technique = "Poly2";
  r.knn = 70;
  const auto path = std::filesystem::temp_directory_path() / "nnqf_reports_test.csv";
  write_reports_csv(path, {r});
  const auto back = read_reports_csv(path);
  REQUIRE(back.size() == 1);
  CHECK(back[0].household_id == "h1");
  CHECK(back[0].knn == 70);
  CHECK(back[0].day_pairs == 50);
  CHECK(back[0].quantile_reliability == r.quantile_reliability);
  CHECK(back[0].interval_pinball == r.interval_pinball);
  CHECK(back[0].coverages == r.coverages);
  std::filesystem::remove(path);
}
