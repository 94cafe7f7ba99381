#include "nnqf/synthetic.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include "nnqf/csv.hpp"

namespace nnqf {

namespace {

enum class Sky { Clear, Broken, Overcast };

Sky next_sky(Sky current, std::mt19937_64& rng) {
  // Row-stochastic transitions; the diagonal carries the day-to-day persistence.
  static constexpr double table[3][3] = {{0.70, 0.22, 0.08}, {0.35, 0.45, 0.20}, {0.25, 0.35, 0.40}};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  const auto& row = table[static_cast<int>(current)];
  if (r < row[0]) return Sky::Clear;
  if (r < row[0] + row[1]) return Sky::Broken;
  return Sky::Overcast;
}

struct Household {
  double capacity;
  double noon_shift_hours;
  double shade_start, shade_end, shade_depth;
};

}  // namespace

std::vector<TimeSeriesFrame> synthetic_pv(const SyntheticPvOptions& options) {
  if (options.resolution_minutes <= 0 || 1440 % options.resolution_minutes != 0) {
    throw std::invalid_argument("resolution must divide a day");
  }
  const int steps = 1440 / options.resolution_minutes;
  const std::int64_t start = options.start_minutes != 0 ? options.start_minutes : parse_timestamp("2010-07-01 00:00");
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<Household> homes;
  for (std::size_t h = 0; h < options.households; ++h) {
    Household home;
    home.capacity = 1.0 + 4.0 * uni(rng);
    home.noon_shift_hours = -0.5 + uni(rng);
    home.shade_depth = uni(rng) < 0.5 ? 0.2 + 0.4 * uni(rng) : 0.0;
    home.shade_start = 7.0 + 2.0 * uni(rng);
    home.shade_end = home.shade_start + 0.75 + uni(rng);
    homes.push_back(home);
  }

  std::vector<TimeSeriesFrame> frames(options.households);
  for (std::size_t h = 0; h < options.households; ++h) {
    frames[h].household_id = "H" + std::to_string(h + 1);
    frames[h].start_minutes = start;
    frames[h].resolution_minutes = options.resolution_minutes;
    frames[h].values.assign(options.days * static_cast<std::size_t>(steps), 0.0);
  }

  const double two_pi = 2.0 * std::numbers::pi;
  const std::int64_t start_day = start / 1440;
  Sky sky = Sky::Clear;
  std::vector<double> cloud(options.households, 0.0);
  for (std::size_t d = 0; d < options.days; ++d) {
    sky = next_sky(sky, rng);
    // Days since 1970-01-01 modulo the tropical year; December solstice in the southern hemisphere.
    const double year_phase = two_pi * (std::fmod(static_cast<double>(start_day + static_cast<std::int64_t>(d)) - 354.0, 365.2422) / 365.2422);
    const double season = std::cos(year_phase);
    const double day_length = 12.15 + 2.25 * season;
    const double peak = 0.78 + 0.22 * season;
    double level = 0.0, spread = 0.0;
    switch (sky) {
      case Sky::Clear: level = 0.93 + 0.07 * uni(rng); spread = 0.03; break;
      case Sky::Broken: level = 0.45 + 0.35 * uni(rng); spread = 0.30; break;
      case Sky::Overcast: level = 0.12 + 0.20 * uni(rng); spread = 0.10; break;
    }
    for (std::size_t h = 0; h < options.households; ++h) {
      const auto& home = homes[h];
      const double noon = 12.0 + home.noon_shift_hours;
      const double sunrise = noon - day_length / 2.0;
      for (int s = 0; s < steps; ++s) {
        const double hour = (s + 0.5) * options.resolution_minutes / 60.0;
        const std::size_t k = d * static_cast<std::size_t>(steps) + static_cast<std::size_t>(s);
        // AR(1) cloud field, also evolving through the night so mornings differ.
        cloud[h] = 0.85 * cloud[h] + std::sqrt(1.0 - 0.85 * 0.85) * gauss(rng);
        const double t = (hour - sunrise) / day_length;
        if (t <= 0.0 || t >= 1.0) continue;
        double clear = peak * std::pow(std::sin(std::numbers::pi * t), 1.25);
        if (home.shade_depth > 0.0 && hour > home.shade_start && hour < home.shade_end) clear *= 1.0 - home.shade_depth;
        const double factor = std::clamp(level + spread * cloud[h], 0.03, 1.08);
        const double noise = 1.0 + 0.01 * gauss(rng);
        frames[h].values[k] = std::max(0.0, home.capacity * clear * factor * noise);
      }
    }
  }
  return frames;
}

TimeSeriesFrame synthetic_heteroscedastic(const HeteroscedasticOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  TimeSeriesFrame f;
  f.household_id = "synthetic";
  f.start_minutes = parse_timestamp("2020-01-01 00:00");
  f.resolution_minutes = 1440 / options.period;
  f.values.resize(options.length);
  auto& profile = f.exogenous["profile"];
  profile.resize(options.length);
  for (std::size_t k = 0; k < options.length; ++k) {
    const double b = 0.5 + 0.3 * std::sin(2.0 * std::numbers::pi * static_cast<double>(k % static_cast<std::size_t>(options.period)) / options.period);
    profile[k] = b;
    const double sigma = 0.02 + 0.06 * b;
    f.values[k] = std::clamp(b + sigma * gauss(rng), 0.0, 1.0);
  }
  return f;
}

double heteroscedastic_quantile(double profile, double q) {
  const boost::math::normal standard;
  return profile + (0.02 + 0.06 * profile) * boost::math::quantile(standard, q);
}

void write_wide_csv(const std::filesystem::path& path, const std::vector<TimeSeriesFrame>& frames) {
  if (frames.empty()) throw std::invalid_argument("no frames to write");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "timestamp";
  const auto& ref = frames.front();
  for (const auto& f : frames) out << ',' << f.household_id;
  for (const auto& [name, series] : ref.exogenous) out << ',' << name;
  out << '\n';
  char buf[32];
  for (std::size_t k = 0; k < ref.size(); ++k) {
    out << format_timestamp(ref.timestamp(k));
    for (const auto& f : frames) {
      if (f.size() != ref.size() || f.start_minutes != ref.start_minutes) {
        throw std::invalid_argument("wide layout needs aligned frames");
      }
      std::snprintf(buf, sizeof buf, "%.4f", f.values[k]);
      out << ',' << buf;
    }
    for (const auto& [name, series] : ref.exogenous) {
      std::snprintf(buf, sizeof buf, "%.6f", series[k]);
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace nnqf
