#include "doctest.h"

#include <random>

#include "nnqf/features.hpp"

using namespace nnqf;

namespace {

TimeSeriesFrame frame_of(std::vector<double> v) {
  TimeSeriesFrame f;
  f.household_id = "h";
  f.values = std::move(v);
  return f;
}

// Series where sample k - j*Hp of the index k under test takes a given value.
std::vector<double> daily_samples(const std::vector<double>& per_day, int period) {
  std::vector<double> p(per_day.size() * static_cast<std::size_t>(period), 0.9);
  // Day j (0 = most recent) lands at k - j*Hp with k the last index.
  const std::size_t k = p.size() - 1;
  for (std::size_t j = 0; j < per_day.size(); ++j) p[k - j * static_cast<std::size_t>(period)] = per_day[j];
  return p;
}

}  // namespace

TEST_CASE("rolling max and mean over eight days") {
  const int Hp = 4;
  SUBCASE("one outlier") {
    std::vector<double> d(8, 0.5);
    d[5] = 0.7;
    const auto p = daily_samples(d, Hp);
    CHECK(rolling_max(p, Hp, 7).values.back() == 0.7);
  }
  SUBCASE("equal samples") {
    const auto p = daily_samples(std::vector<double>(8, 0.3), Hp);
    CHECK(rolling_max(p, Hp, 7).values.back() == doctest::Approx(0.3));
    CHECK(rolling_mean(p, Hp, 7).values.back() == doctest::Approx(0.3));
  }
  SUBCASE("ramp 0..0.7") {
    std::vector<double> d;
    for (int j = 0; j < 8; ++j) d.push_back(0.1 * j);
    const auto p = daily_samples(d, Hp);
    // Enumerate the eight lags directly.
    double mx = 0, sum = 0;
    for (int j = 0; j <= 7; ++j) {
      mx = std::max(mx, p[p.size() - 1 - static_cast<std::size_t>(j * Hp)]);
      sum += p[p.size() - 1 - static_cast<std::size_t>(j * Hp)];
    }
    CHECK(rolling_max(p, Hp, 7).values.back() == doctest::Approx(mx));
    CHECK(mx == doctest::Approx(0.7));
    CHECK(rolling_mean(p, Hp, 7).values.back() == doctest::Approx(sum / 8));
    CHECK(sum / 8 == doctest::Approx(0.35));
  }
  SUBCASE("alternating 0 and 0.8") {
    std::vector<double> d{0, 0.8, 0, 0.8, 0, 0.8, 0, 0.8};
    CHECK(rolling_mean(daily_samples(d, Hp), Hp, 7).values.back() == doctest::Approx(0.4));
  }
  SUBCASE("availability") {
    const std::vector<double> p(100, 0.2);
    const auto m = rolling_max(p, Hp, 7);
    CHECK(m.first_available == 28);
    CHECK_FALSE(m.available(27));
    CHECK(m.available(28));
  }
}

TEST_CASE("rolling series properties") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(600);
  for (auto& v : p) v = u(rng);
  const auto mx = rolling_max(p, 12, 7);
  const auto mean = rolling_mean(p, 12, 7);
  for (std::size_t k = mx.first_available; k < p.size(); ++k) {
    CHECK(mx.values[k] >= mean.values[k] - 1e-15);
    CHECK(mean.values[k] >= 0.0);
    CHECK(mx.values[k] >= p[k]);
  }
}

TEST_CASE("candidate pool and descriptors") {
  FeatureSpec spec;
  const auto pool = spec.candidates();
  CHECK(pool.size() == 291);
  CHECK(pool[0].name() == "P[k-0]");
  CHECK(pool[97].name() == "Pmax[k-0]");
  CHECK(pool[290].name() == "Pmean[k-96]");
  for (const auto& d : pool) CHECK(FeatureDescriptor::parse(d.name()) == d);
  spec.exogenous_channels = {"u"};
  CHECK(spec.candidates().size() == 388);
  CHECK(FeatureDescriptor::parse("u:u[k-3]") == FeatureDescriptor{Source::Exogenous, 3, "u"});
  spec.selected = {1, 1};
  CHECK_THROWS(spec.validate());
  spec.selected = {400};
  CHECK_THROWS(spec.validate());
}

TEST_CASE("assemble") {
  FeatureSpec spec;
  spec.period = 96;
  spec.window_days = 0;  // derived series available from the start
  SUBCASE("K=300, H=H1=96 gives 108 rows") {
    std::vector<double> p(300);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = 0.001 * static_cast<double>(i);
    const auto f = frame_of(p);
    spec.selected = {0};
    const SeriesBundle b(f, spec);
    const auto ls = assemble(b, spec);
    CHECK(ls.rows() == 108);
    CHECK(ls.dropped_unavailable == 0);
    for (std::size_t n = 0; n < ls.rows(); ++n) {
      CHECK(ls.origins[n] >= 96);
      // Lag 0 of P equals the aligned series; target is H steps later.
      CHECK(ls.X(static_cast<Eigen::Index>(n), 0) == p[ls.origins[n]]);
      CHECK(ls.y(static_cast<Eigen::Index>(n)) == p[ls.origins[n] + 96]);
    }
  }
  SUBCASE("constant series") {
    const auto f = frame_of(std::vector<double>(1000, 0.5));
    spec.window_days = 7;
    spec.selected = {0, 5, 100, 250};
    const SeriesBundle b(f, spec);
    const auto ls = assemble(b, spec);
    CHECK((ls.X.array() == 0.5).all());
    CHECK((ls.y.array() == 0.5).all());
  }
  SUBCASE("availability drops are counted") {
    const auto f = frame_of(std::vector<double>(1000, 0.5));
    spec.window_days = 7;
    spec.selected = {97};  // Pmax lag 0, defined from k = 672
    const SeriesBundle b(f, spec);
    const auto ls = assemble(b, spec);
    CHECK(ls.rows() + ls.dropped_unavailable == 1000 - 96 - 96);
    CHECK(ls.origins.front() == 672);
  }
  SUBCASE("deterministic") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(1500);
    for (auto& v : p) v = u(rng);
    const auto f = frame_of(p);
    spec.window_days = 7;
    spec.selected = {3, 120, 200, 45};
    const SeriesBundle b(f, spec);
    const auto a = assemble(b, spec);
    const auto c = assemble(b, spec);
    CHECK(a.X == c.X);
    CHECK(a.y == c.y);
    CHECK(a.origins == c.origins);
  }
  SUBCASE("too short") {
    const auto f = frame_of(std::vector<double>(100, 0.5));
    spec.selected = {0};
    const SeriesBundle b(f, spec);
    CHECK_THROWS(assemble(b, spec));
  }
}

TEST_CASE("night mask") {
  FeatureSpec spec;
  std::vector<double> p(400, 0.3);
  auto check = [&](double now, double day_before) {
    p[200] = now;
    p[200 - 96] = day_before;
    const auto mask = night_mask(frame_of(p), {200}, spec, 1e-4);
    REQUIRE(mask.size() == 1);
    return mask.is_night[0] != 0;
  };
  CHECK(check(0.0, 0.0));
  CHECK(check(0.00005, 0.0001));
  CHECK_FALSE(check(0.2, 0.0));
  CHECK_FALSE(check(0.0, 0.2));
  // Without an observation one period back the pair is day.
  CHECK(night_mask(frame_of(std::vector<double>(400, 0.0)), {50}, spec, 1e-4).is_night[0] == 0);
}

TEST_CASE("night filtering keeps day rows only") {
  FeatureSpec spec;
  spec.window_days = 0;
  spec.selected = {0};
  std::vector<double> p(600);
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = (k % 96) < 40 ? 0.0 : 0.5;
  const auto f = frame_of(p);
  const SeriesBundle b(f, spec);
  const auto all = assemble(b, spec);
  const auto mask = night_mask(f, all.origins, spec, 1e-4);
  CHECK(mask.size() == all.rows());
  const auto day = day_rows(all, mask);
  CHECK(day.rows() == all.rows() - mask.night_count());
  for (std::size_t n = 0; n < day.rows(); ++n) CHECK(p[day.origins[n]] > 1e-4);
  const auto acc = night_accuracy(f, all.origins, mask, spec);
  CHECK(acc.precision == 1.0);
  CHECK(acc.accuracy == 1.0);
}
