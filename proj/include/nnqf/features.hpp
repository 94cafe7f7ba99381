#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nnqf/dataset.hpp"

namespace nnqf {

enum class Source { Power, RollingMax, RollingMean, Exogenous };

/// One candidate input: a source series sampled `lag` steps before the origin.
struct FeatureDescriptor {
  Source source = Source::Power;
  int lag = 0;
  std::string channel;  // exogenous channel name, empty otherwise

  std::string name() const;
  static FeatureDescriptor parse(const std::string& name);
  friend bool operator==(const FeatureDescriptor&, const FeatureDescriptor&) = default;
};

/// Forecast geometry and the feature selection for one model.
///
/// Defaults are the 15-minute, 24-hour-ahead setting: H = H1 = Hp = 96 and an
/// eight-day rolling window (m = 7).
struct FeatureSpec {
  int horizon = 96;      // H
  int max_lag = 96;      // H1
  int period = 96;       // Hp, steps per day
  int window_days = 7;   // m
  std::size_t num_features = 4;  // S
  std::vector<std::string> exogenous_channels;
  /// Indices into candidates(); empty until selection has run.
  std::vector<std::size_t> selected;

  /// All lags 0..H1 of P, P_max, P_mean, then of each exogenous channel.
  std::vector<FeatureDescriptor> candidates() const;
  std::vector<FeatureDescriptor> selected_descriptors() const;
  void validate() const;
};

/// A series whose entries before `first_available` are undefined.
struct DerivedSeries {
  std::vector<double> values;
  std::size_t first_available = 0;

  bool available(std::size_t k) const { return k >= first_available && k < values.size(); }
};

/// P_max[k] = max{P[k], P[k - Hp], ..., P[k - m Hp]}.
DerivedSeries rolling_max(const std::vector<double>& power, int period, int window_days);
/// P_mean[k] = mean{P[k], P[k - Hp], ..., P[k - m Hp]}.
DerivedSeries rolling_mean(const std::vector<double>& power, int period, int window_days);

/// The source series of one frame, ready for lag lookups.
class SeriesBundle {
public:
  SeriesBundle(const TimeSeriesFrame& frame, const FeatureSpec& spec);

  const TimeSeriesFrame& frame() const { return *frame_; }
  const DerivedSeries& series(const FeatureDescriptor& d) const;
  bool available(const FeatureDescriptor& d, std::size_t origin) const;
  double value(const FeatureDescriptor& d, std::size_t origin) const;

private:
  const TimeSeriesFrame* frame_;
  DerivedSeries power_;
  DerivedSeries max_;
  DerivedSeries mean_;
  std::vector<std::pair<std::string, DerivedSeries>> exogenous_;
};

struct NightMask {
  std::vector<std::uint8_t> is_night;
  double threshold = 1e-4;

  std::size_t size() const { return is_night.size(); }
  std::size_t night_count() const;
};

/// Learning pairs (X, y) for one household. Row n was formed at origin
/// `origins[n]` (0-based k) and targets P[k + H].
struct LearningSet {
  std::string household_id;
  std::vector<FeatureDescriptor> descriptors;
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::size_t> origins;
  std::size_t dropped_unavailable = 0;

  std::size_t rows() const { return origins.size(); }
};

/// Materializes the spec's selected features. Origins run over k = H1 .. K-H-1;
/// rows whose inputs reach before the start of a derived series are dropped and
/// counted. Throws if no row remains.
LearningSet assemble(const SeriesBundle& bundle, const FeatureSpec& spec);
LearningSet assemble(const SeriesBundle& bundle, const FeatureSpec& spec,
                     const std::vector<FeatureDescriptor>& descriptors);

/// A pair is night iff P[k] <= tau and P[k - Hp] <= tau. Pairs with k < Hp
/// lack the second observation and are classified as day.
NightMask night_mask(const TimeSeriesFrame& frame, const std::vector<std::size_t>& origins,
                     const FeatureSpec& spec, double threshold);

/// Keeps the rows with keep[n] != 0.
LearningSet filter_rows(const LearningSet& set, const std::vector<std::uint8_t>& keep);
LearningSet day_rows(const LearningSet& set, const NightMask& mask);

/// Share of night-flagged pairs whose target is <= tau, and share of all pairs
/// whose flag agrees with the direct threshold test on the target.
struct NightAccuracy {
  std::size_t pairs = 0;
  std::size_t flagged = 0;
  double precision = 1.0;
  double accuracy = 1.0;
};
NightAccuracy night_accuracy(const TimeSeriesFrame& frame, const std::vector<std::size_t>& origins,
                             const NightMask& mask, const FeatureSpec& spec);

/// Lazily materialized candidate columns over the rows where every candidate is defined.
class CandidatePool {
public:
  CandidatePool(const SeriesBundle& bundle, const FeatureSpec& spec, double night_threshold);

  std::size_t size() const { return candidates_.size(); }
  std::size_t rows() const { return origins_.size(); }
  const std::vector<FeatureDescriptor>& candidates() const { return candidates_; }
  const std::vector<std::size_t>& origins() const { return origins_; }
  Eigen::VectorXd column(std::size_t candidate) const;
  const Eigen::VectorXd& target() const { return target_; }

private:
  const SeriesBundle* bundle_;
  std::vector<FeatureDescriptor> candidates_;
  std::vector<std::size_t> origins_;
  Eigen::VectorXd target_;
};

/// Columns: origin_k, one per feature, y, is_night.
void write_learning_set_csv(const std::filesystem::path& path, const LearningSet& set, const NightMask& mask);

}  // namespace nnqf
