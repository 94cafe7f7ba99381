#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace nnqf {

/// Raised for malformed or inconsistent input files.
class IngestError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A regularly sampled power series for one household.
///
/// `values[k]` is the (normalized) power at `start_minutes + k * resolution_minutes`.
/// Timestamps are timezone-naive minutes since 1970-01-01 00:00; downstream code
/// only uses the index k. `scale` is the factor that maps stored values back to
/// the raw units (1 for raw or all-zero series).
struct TimeSeriesFrame {
  std::string household_id;
  std::int64_t start_minutes = 0;
  int resolution_minutes = 15;
  std::vector<double> values;
  std::map<std::string, std::vector<double>> exogenous;
  double scale = 1.0;

  std::size_t size() const { return values.size(); }
  std::int64_t timestamp(std::size_t k) const {
    return start_minutes + static_cast<std::int64_t>(k) * resolution_minutes;
  }
};

enum class Layout { Wide, Long };

/// Column mapping for delimiter-separated input.
///
/// Wide layout: one timestamp column plus one value column per household (the
/// column header is the household id). Long layout: timestamp, household and
/// value columns, one observation per row.
struct IngestSchema {
  Layout layout = Layout::Wide;
  std::string timestamp_column = "timestamp";
  std::string household_column = "household";
  std::string value_column = "value";
  char delimiter = ',';
  int resolution_minutes = 15;
  /// Longest run of missing grid points that is filled by linear interpolation.
  int max_gap_steps = 0;
  /// Names of wide-layout columns that are exogenous channels shared by all
  /// households instead of household power columns.
  std::vector<std::string> exogenous_columns;
};

struct SplitSpec {
  double train_fraction = 0.5;

  std::size_t boundary_index(std::size_t length) const;
};

/// Parses "YYYY-MM-DD HH:MM[:SS]" (or with 'T'), or a bare integer of minutes.
std::int64_t parse_timestamp(const std::string& text);
std::string format_timestamp(std::int64_t minutes);

std::vector<TimeSeriesFrame> ingest(const std::filesystem::path& path, const IngestSchema& schema);
std::vector<TimeSeriesFrame> ingest_stream(std::istream& in, const IngestSchema& schema);

/// Divides by the maximum over the whole series. Negative inputs are rejected.
TimeSeriesFrame normalize(const TimeSeriesFrame& frame);
TimeSeriesFrame denormalize(const TimeSeriesFrame& frame);

/// A contiguous sub-range [begin, begin + length) of a frame.
TimeSeriesFrame slice(const TimeSeriesFrame& frame, std::size_t begin, std::size_t length);

/// Splits into contiguous train/test halves. `min_length` is the shortest half
/// that can still form a learning pair, typically H + H1 + 1.
std::pair<TimeSeriesFrame, TimeSeriesFrame> split(const TimeSeriesFrame& frame, const SplitSpec& spec,
                                                  std::size_t min_length);

/// Cache format: `household,k,value` rows plus a JSON sidecar with the per
/// household metadata (start, resolution, scale).
void write_frames_csv(const std::filesystem::path& path, const std::vector<TimeSeriesFrame>& frames);
std::vector<TimeSeriesFrame> read_frames_csv(const std::filesystem::path& path);

}  // namespace nnqf
