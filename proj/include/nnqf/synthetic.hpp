#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "nnqf/dataset.hpp"

namespace nnqf {

/// Rooftop-PV-like series: seasonal day length and peak, a shared
/// Markov weather regime (clear / broken / overcast) with per-household
/// intraday variability, per-household capacity, orientation and shading.
/// Values are raw (kW), zero at night.
struct SyntheticPvOptions {
  std::size_t households = 2;
  std::size_t days = 1096;
  int resolution_minutes = 15;
  std::uint64_t seed = 1;
  std::int64_t start_minutes = 0;  // defaults to 2010-07-01 00:00 when 0
};

std::vector<TimeSeriesFrame> synthetic_pv(const SyntheticPvOptions& options);

/// Series with a known conditional distribution: an exogenous channel
/// "profile" carries b[k] = 0.5 + 0.3 sin(2 pi k / period) and the power is
/// P[k] = b[k] + sigma(b[k]) e[k] with e ~ N(0, 1) and sigma(b) = 0.02 + 0.06 b.
/// Since b is periodic, P[k + H] given profile[k] has q-quantile
/// b + sigma(b) z_q whenever H is a multiple of the period.
struct HeteroscedasticOptions {
  std::size_t length = 20000;
  int period = 96;
  std::uint64_t seed = 7;
};
TimeSeriesFrame synthetic_heteroscedastic(const HeteroscedasticOptions& options);
double heteroscedastic_quantile(double profile, double q);

/// Wide layout: timestamp column, one column per household, then the first
/// frame's exogenous channels.
void write_wide_csv(const std::filesystem::path& path, const std::vector<TimeSeriesFrame>& frames);

}  // namespace nnqf
