#include "nnqf/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include "nnqf/csv.hpp"
#include "json.hpp"

namespace nnqf {

namespace {

struct Observation {
  std::size_t row;
  std::int64_t ts;
  std::vector<std::string> cells;  // power first, then exogenous channels
};

std::optional<double> parse_cell(const std::string& cell, std::size_t row, const std::string& household,
                                 const std::string& column) {
  const std::string text = csv::trim(cell);
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw IngestError("row " + std::to_string(row) + ", household '" + household + "': unparsable number '" +
                      text + "' in column '" + column + "'");
  }
  return value;
}

// Places observations on a uniform grid and fills short gaps linearly.
TimeSeriesFrame build_frame(const std::string& household, std::vector<Observation>& obs,
                            const std::vector<std::string>& channel_names, const IngestSchema& schema) {
  const std::int64_t res = schema.resolution_minutes;
  for (std::size_t i = 1; i < obs.size(); ++i) {
    if (obs[i].ts == obs[i - 1].ts) {
      throw IngestError("row " + std::to_string(obs[i].row) + ", household '" + household +
                        "': duplicate timestamp " + format_timestamp(obs[i].ts));
    }
    if (obs[i].ts < obs[i - 1].ts) {
      throw IngestError("row " + std::to_string(obs[i].row) + ", household '" + household +
                        "': non-monotone timestamp " + format_timestamp(obs[i].ts));
    }
  }

  const std::size_t channels = channel_names.size();
  // Per channel values parsed, trimmed to the first/last row with a power value.
  std::vector<std::vector<std::optional<double>>> parsed(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    parsed[c].reserve(obs.size());
    for (const auto& o : obs) parsed[c].push_back(parse_cell(o.cells[c], o.row, household, channel_names[c]));
  }
  std::size_t first = 0;
  while (first < obs.size() && !parsed[0][first]) ++first;
  std::size_t last = obs.size();
  while (last > first && !parsed[0][last - 1]) --last;
  if (first == last) throw IngestError("household '" + household + "': no values");

  const std::int64_t t0 = obs[first].ts;
  const std::int64_t t1 = obs[last - 1].ts;
  for (std::size_t i = first; i < last; ++i) {
    if ((obs[i].ts - t0) % res != 0) {
      throw IngestError("row " + std::to_string(obs[i].row) + ", household '" + household + "': timestamp " +
                        format_timestamp(obs[i].ts) + " is off the " + std::to_string(res) + "-minute grid");
    }
  }
  const auto length = static_cast<std::size_t>((t1 - t0) / res + 1);

  TimeSeriesFrame frame;
  frame.household_id = household;
  frame.start_minutes = t0;
  frame.resolution_minutes = schema.resolution_minutes;

  for (std::size_t c = 0; c < channels; ++c) {
    std::vector<std::optional<double>> grid(length);
    std::vector<std::size_t> grid_row(length, 0);
    for (std::size_t i = first; i < last; ++i) {
      const auto k = static_cast<std::size_t>((obs[i].ts - t0) / res);
      grid[k] = parsed[c][i];
      grid_row[k] = obs[i].row;
    }
    std::vector<double> values(length, 0.0);
    std::size_t k = 0;
    std::size_t last_row = obs[first].row;
    while (k < length) {
      if (grid[k]) {
        values[k] = *grid[k];
        last_row = grid_row[k];
        ++k;
        continue;
      }
      std::size_t end = k;
      while (end < length && !grid[end]) ++end;
      const std::size_t gap = end - k;
      if (k == 0 || end == length || gap > static_cast<std::size_t>(schema.max_gap_steps)) {
        throw IngestError("row " + std::to_string(last_row) + ", household '" + household + "': gap of " +
                          std::to_string(gap) + " steps in '" + channel_names[c] + "' after " +
                          format_timestamp(t0 + static_cast<std::int64_t>(k) * res) + " exceeds the limit of " +
                          std::to_string(schema.max_gap_steps));
      }
      const double lo = values[k - 1];
      const double hi = *grid[end];
      for (std::size_t j = k; j < end; ++j) {
        const double t = static_cast<double>(j - k + 1) / static_cast<double>(gap + 1);
        values[j] = lo + t * (hi - lo);
      }
      k = end;
    }
    if (c == 0) {
      frame.values = std::move(values);
    } else {
      frame.exogenous[channel_names[c]] = std::move(values);
    }
  }
  return frame;
}

}  // namespace

std::size_t SplitSpec::boundary_index(std::size_t length) const {
  return static_cast<std::size_t>(std::floor(static_cast<double>(length) * train_fraction));
}

std::int64_t parse_timestamp(const std::string& raw) {
  const std::string text = csv::trim(raw);
  if (text.empty()) throw IngestError("missing timestamp");
  if (std::all_of(text.begin(), text.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)) || ch == '-'; }) &&
      text.find('-', 1) == std::string::npos) {
    return std::stoll(text);
  }
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = ' ';
  const int n = std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &s);
  if (n != 3 && n < 6) throw IngestError("unparsable timestamp '" + text + "'");
  if (n >= 4 && sep != ' ' && sep != 'T') throw IngestError("unparsable timestamp '" + text + "'");
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 59) {
    throw IngestError("invalid timestamp '" + text + "'");
  }
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 1440 + h * 60 + mi;
}

std::string format_timestamp(std::int64_t minutes) {
  using namespace std::chrono;
  std::int64_t days = minutes >= 0 ? minutes / 1440 : -((-minutes + 1439) / 1440);
  const std::int64_t rem = minutes - days * 1440;
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 60),
                static_cast<int>(rem % 60));
  return buf;
}

std::vector<TimeSeriesFrame> ingest_stream(std::istream& in, const IngestSchema& schema) {
  if (schema.resolution_minutes <= 0) throw IngestError("resolution must be positive");
  csv::Reader reader(in, schema.delimiter);
  std::vector<std::string> header;
  if (!reader.next(header)) throw IngestError("empty file: header row required");
  for (auto& h : header) h = csv::trim(h);

  auto column_of = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw IngestError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t ts_col = column_of(schema.timestamp_column);
  std::vector<std::size_t> exo_cols;
  for (const auto& name : schema.exogenous_columns) exo_cols.push_back(column_of(name));
  std::vector<std::string> channel_names{"power"};
  channel_names.insert(channel_names.end(), schema.exogenous_columns.begin(), schema.exogenous_columns.end());

  std::vector<std::string> households;
  std::map<std::string, std::vector<Observation>> by_household;

  std::vector<std::size_t> power_cols;
  std::size_t hh_col = 0, value_col = 0;
  if (schema.layout == Layout::Wide) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == ts_col || std::find(exo_cols.begin(), exo_cols.end(), c) != exo_cols.end()) continue;
      if (by_household.count(header[c])) throw IngestError("duplicate household column '" + header[c] + "'");
      power_cols.push_back(c);
      households.push_back(header[c]);
      by_household[header[c]];
    }
    if (power_cols.empty()) throw IngestError("no household columns");
  } else {
    hh_col = column_of(schema.household_column);
    value_col = column_of(schema.value_column);
  }

  std::vector<std::string> cells;
  std::size_t row = 1;
  while (reader.next(cells)) {
    ++row;
    if (cells.size() == 1 && csv::trim(cells[0]).empty()) continue;
    if (cells.size() != header.size()) {
      throw IngestError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                        " fields, found " + std::to_string(cells.size()));
    }
    std::int64_t ts = 0;
    try {
      ts = parse_timestamp(cells[ts_col]);
    } catch (const IngestError& e) {
      throw IngestError("row " + std::to_string(row) + ": " + e.what());
    }
    std::vector<std::string> exo;
    for (auto c : exo_cols) exo.push_back(cells[c]);
    if (schema.layout == Layout::Wide) {
      for (std::size_t i = 0; i < power_cols.size(); ++i) {
        Observation o{row, ts, {cells[power_cols[i]]}};
        o.cells.insert(o.cells.end(), exo.begin(), exo.end());
        by_household[households[i]].push_back(std::move(o));
      }
    } else {
      const std::string hh = csv::trim(cells[hh_col]);
      if (hh.empty()) throw IngestError("row " + std::to_string(row) + ": missing household");
      if (!by_household.count(hh)) households.push_back(hh);
      Observation o{row, ts, {cells[value_col]}};
      o.cells.insert(o.cells.end(), exo.begin(), exo.end());
      by_household[hh].push_back(std::move(o));
    }
  }

  std::vector<TimeSeriesFrame> frames;
  frames.reserve(households.size());
  for (const auto& hh : households) frames.push_back(build_frame(hh, by_household[hh], channel_names, schema));
  return frames;
}

std::vector<TimeSeriesFrame> ingest(const std::filesystem::path& path, const IngestSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open '" + path.string() + "'");
  return ingest_stream(in, schema);
}

TimeSeriesFrame normalize(const TimeSeriesFrame& frame) {
  double peak = 0.0;
  for (std::size_t k = 0; k < frame.values.size(); ++k) {
    const double v = frame.values[k];
    if (v < 0.0) {
      throw IngestError("household '" + frame.household_id + "': negative value " + std::to_string(v) +
                        " at k=" + std::to_string(k));
    }
    peak = std::max(peak, v);
  }
  TimeSeriesFrame out = frame;
  if (peak == 0.0) return out;
  for (auto& v : out.values) v /= peak;
  out.scale = frame.scale * peak;
  return out;
}

TimeSeriesFrame denormalize(const TimeSeriesFrame& frame) {
  TimeSeriesFrame out = frame;
  for (auto& v : out.values) v *= frame.scale;
  out.scale = 1.0;
  return out;
}

TimeSeriesFrame slice(const TimeSeriesFrame& frame, std::size_t begin, std::size_t length) {
  if (begin + length > frame.size()) throw std::out_of_range("slice beyond end of series");
  TimeSeriesFrame out;
  out.household_id = frame.household_id;
  out.resolution_minutes = frame.resolution_minutes;
  out.start_minutes = frame.timestamp(begin);
  out.scale = frame.scale;
  const auto first = frame.values.begin() + static_cast<std::ptrdiff_t>(begin);
  out.values.assign(first, first + static_cast<std::ptrdiff_t>(length));
  for (const auto& [name, series] : frame.exogenous) {
    const auto f = series.begin() + static_cast<std::ptrdiff_t>(begin);
    out.exogenous[name].assign(f, f + static_cast<std::ptrdiff_t>(length));
  }
  return out;
}

std::pair<TimeSeriesFrame, TimeSeriesFrame> split(const TimeSeriesFrame& frame, const SplitSpec& spec,
                                                  std::size_t min_length) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must lie in (0, 1)");
  }
  const std::size_t K = frame.size();
  const std::size_t boundary = spec.boundary_index(K);
  if (boundary < min_length || K - boundary < min_length) {
    throw std::invalid_argument("household '" + frame.household_id + "': series of length " + std::to_string(K) +
                                " is too short to split into halves of at least " + std::to_string(min_length));
  }
  return {slice(frame, 0, boundary), slice(frame, boundary, K - boundary)};
}

void write_frames_csv(const std::filesystem::path& path, const std::vector<TimeSeriesFrame>& frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write '" + path.string() + "'");
  out << "household,k,value\n";
  nlohmann::json meta = nlohmann::json::array();
  for (const auto& f : frames) {
    for (std::size_t k = 0; k < f.size(); ++k) out << f.household_id << ',' << k << ',' << csv::format_double(f.values[k]) << '\n';
    nlohmann::json m;
    m["household"] = f.household_id;
    m["start"] = f.start_minutes;
    m["resolution_minutes"] = f.resolution_minutes;
    m["scale"] = f.scale;
    m["length"] = f.size();
    m["exogenous"] = f.exogenous;
    meta.push_back(std::move(m));
  }
  std::ofstream side(path.string() + ".json", std::ios::binary);
  side << meta.dump(1) << '\n';
}

std::vector<TimeSeriesFrame> read_frames_csv(const std::filesystem::path& path) {
  std::ifstream side(path.string() + ".json");
  if (!side) throw IngestError("missing metadata for '" + path.string() + "'");
  const auto meta = nlohmann::json::parse(side);
  std::vector<TimeSeriesFrame> frames;
  std::map<std::string, std::size_t> index;
  for (const auto& m : meta) {
    TimeSeriesFrame f;
    f.household_id = m.at("household").get<std::string>();
    f.start_minutes = m.at("start").get<std::int64_t>();
    f.resolution_minutes = m.at("resolution_minutes").get<int>();
    f.scale = m.at("scale").get<double>();
    f.values.assign(m.at("length").get<std::size_t>(), 0.0);
    f.exogenous = m.at("exogenous").get<std::map<std::string, std::vector<double>>>();
    index[f.household_id] = frames.size();
    frames.push_back(std::move(f));
  }
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open '" + path.string() + "'");
  csv::Reader reader(in, ',');
  std::vector<std::string> cells;
  reader.next(cells);
  std::size_t row = 1;
  while (reader.next(cells)) {
    ++row;
    if (cells.size() != 3) throw IngestError("cache row " + std::to_string(row) + ": expected 3 fields");
    auto it = index.find(cells[0]);
    if (it == index.end()) throw IngestError("cache row " + std::to_string(row) + ": unknown household");
    auto& f = frames[it->second];
    const auto k = static_cast<std::size_t>(std::stoull(cells[1]));
    if (k >= f.size()) throw IngestError("cache row " + std::to_string(row) + ": index out of range");
    f.values[k] = std::stod(cells[2]);
  }
  return frames;
}

}  // namespace nnqf
