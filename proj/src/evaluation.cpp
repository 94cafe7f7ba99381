#include "nnqf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>
#include <tuple>

#include "nnqf/csv.hpp"

namespace nnqf {

namespace {

void check_lengths(std::span<const double> truth, std::size_t n) {
  if (truth.empty()) throw std::invalid_argument("evaluation on an empty set");
  if (truth.size() != n) throw std::invalid_argument("truth and prediction lengths differ");
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double mean_abs(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

double reliability_deviation_quantile(std::span<const double> truth, std::span<const double> predicted, double q) {
  check_lengths(truth, predicted.size());
  std::size_t below = 0;
  for (std::size_t n = 0; n < truth.size(); ++n) {
    if (truth[n] < predicted[n]) ++below;
  }
  return static_cast<double>(below) / static_cast<double>(truth.size()) - q;
}

double pinball_quantile(std::span<const double> truth, std::span<const double> predicted, double q) {
  check_lengths(truth, predicted.size());
  double sum = 0.0;
  for (std::size_t n = 0; n < truth.size(); ++n) {
    const double diff = truth[n] - predicted[n];
    sum += diff * (q - (truth[n] < predicted[n] ? 1.0 : 0.0));
  }
  return sum / static_cast<double>(truth.size());
}

double reliability_deviation_interval(std::span<const double> truth, const IntervalPair& pair) {
  check_lengths(truth, pair.upper.size());
  check_lengths(truth, pair.lower.size());
  if (!(pair.upper_level > pair.lower_level)) throw std::invalid_argument("interval needs q_u > q_l");
  std::size_t inside = 0;
  for (std::size_t n = 0; n < truth.size(); ++n) {
    if (pair.lower[n] <= truth[n] && truth[n] < pair.upper[n]) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(truth.size()) - pair.coverage();
}

double pinball_interval(std::span<const double> truth, const IntervalPair& pair) {
  check_lengths(truth, pair.upper.size());
  check_lengths(truth, pair.lower.size());
  if (!(pair.upper_level > pair.lower_level)) throw std::invalid_argument("interval needs q_u > q_l");
  if (std::abs(pair.upper_level - (1.0 - pair.lower_level)) > 1e-9) {
    throw std::invalid_argument("interval pinball loss requires q_u = 1 - q_l");
  }
  const double weight = 2.0 / (1.0 - pair.coverage());
  double sum = 0.0;
  for (std::size_t n = 0; n < truth.size(); ++n) {
    const double y = truth[n];
    double term = pair.upper[n] - pair.lower[n];
    if (y > pair.upper[n]) term += weight * (y - pair.upper[n]);
    if (y < pair.lower[n]) term += weight * (pair.lower[n] - y);
    sum += term;
  }
  return sum / static_cast<double>(truth.size());
}

std::vector<IntervalLevels> build_intervals(const QuantileGrid& grid) {
  std::vector<IntervalLevels> out;
  for (int i = 1; i <= 49; ++i) {
    const double upper = (50 + i) / 100.0;
    const double lower = (50 - i) / 100.0;
    const std::size_t u = grid.find(upper);
    const std::size_t l = grid.find(lower);
    if (u == grid.size() || l == grid.size()) {
      throw std::invalid_argument("quantile grid lacks level " + csv::format_double(u == grid.size() ? upper : lower) +
                                  " needed for the interval pairs");
    }
    out.push_back({u, l, (2 * i) / 100.0});
  }
  return out;
}

double EvalReport::mean_abs_quantile_reliability() const { return mean_abs(quantile_reliability); }
double EvalReport::mean_quantile_pinball() const { return mean(quantile_pinball); }
double EvalReport::mean_abs_interval_reliability() const { return mean_abs(interval_reliability); }
double EvalReport::mean_signed_interval_reliability() const { return mean(interval_reliability); }
double EvalReport::mean_interval_pinball() const { return mean(interval_pinball); }

EvalReport evaluate(const Eigen::VectorXd& truth, const Eigen::MatrixXd& predictions, const QuantileGrid& grid) {
  if (predictions.rows() != truth.size()) throw std::invalid_argument("prediction rows do not match truths");
  if (static_cast<std::size_t>(predictions.cols()) != grid.size()) throw std::invalid_argument("prediction grid mismatch");
  EvalReport r;
  r.day_pairs = static_cast<std::size_t>(truth.size());
  r.levels = grid.levels();
  std::vector<std::vector<double>> cols(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const Eigen::VectorXd c = predictions.col(static_cast<Eigen::Index>(j));
    cols[j].assign(c.data(), c.data() + c.size());
  }
  const std::span<const double> y(truth.data(), static_cast<std::size_t>(truth.size()));
  for (std::size_t j = 0; j < grid.size(); ++j) {
    r.quantile_reliability.push_back(reliability_deviation_quantile(y, cols[j], grid[j]));
    r.quantile_pinball.push_back(pinball_quantile(y, cols[j], grid[j]));
  }
  for (const auto& iv : build_intervals(grid)) {
    const IntervalPair pair{grid[iv.upper], grid[iv.lower], cols[iv.upper], cols[iv.lower]};
    r.coverages.push_back(iv.coverage);
    r.interval_reliability.push_back(reliability_deviation_interval(y, pair));
    r.interval_pinball.push_back(pinball_interval(y, pair));
  }
  return r;
}

std::vector<std::string> SummaryTable::techniques() const {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (std::find(out.begin(), out.end(), r.technique) == out.end()) out.push_back(r.technique);
  }
  return out;
}

std::vector<std::size_t> SummaryTable::knns() const {
  std::set<std::size_t> s;
  for (const auto& r : rows) s.insert(r.knn);
  return {s.begin(), s.end()};
}

const SummaryRow* SummaryTable::find(const std::string& technique, std::size_t knn) const {
  for (const auto& r : rows) {
    if (r.technique == technique && r.knn == knn) return &r;
  }
  return nullptr;
}

SummaryTable aggregate(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("nothing to aggregate");
  struct Acc {
    std::size_t reports = 0;
    double qr = 0, qp = 0, ir = 0, ip = 0, irs = 0;
    std::size_t nq = 0, ni = 0;
  };
  std::map<std::pair<std::string, std::size_t>, Acc> acc;
  for (const auto& r : reports) {
    auto& a = acc[{r.technique, r.knn}];
    ++a.reports;
    for (double v : r.quantile_reliability) a.qr += std::abs(v);
    for (double v : r.quantile_pinball) a.qp += v;
    a.nq += r.quantile_reliability.size();
    for (double v : r.interval_reliability) {
      a.ir += std::abs(v);
      a.irs += v;
    }
    for (double v : r.interval_pinball) a.ip += v;
    a.ni += r.interval_reliability.size();
  }
  SummaryTable table;
  for (const auto& [key, a] : acc) {
    SummaryRow row;
    row.technique = key.first;
    row.knn = key.second;
    row.reports = a.reports;
    const double nq = static_cast<double>(std::max<std::size_t>(a.nq, 1));
    const double ni = static_cast<double>(std::max<std::size_t>(a.ni, 1));
    row.quantile_reliability = a.qr / nq;
    row.quantile_pinball = a.qp / nq;
    row.interval_reliability = a.ir / ni;
    row.interval_pinball = a.ip / ni;
    row.interval_reliability_signed = a.irs / ni;
    table.rows.push_back(row);
  }
  return table;
}

std::vector<LevelCurves> level_curves(const std::vector<EvalReport>& reports) {
  std::map<std::pair<std::string, std::size_t>, std::vector<const EvalReport*>> groups;
  for (const auto& r : reports) groups[{r.technique, r.knn}].push_back(&r);
  std::vector<LevelCurves> out;
  for (const auto& [key, members] : groups) {
    LevelCurves c;
    c.technique = key.first;
    c.knn = key.second;
    const auto& first = *members.front();
    c.levels = first.levels;
    c.coverages = first.coverages;
    c.quantile_reliability.assign(c.levels.size(), 0.0);
    c.quantile_pinball.assign(c.levels.size(), 0.0);
    c.interval_reliability.assign(c.coverages.size(), 0.0);
    c.interval_pinball.assign(c.coverages.size(), 0.0);
    for (const auto* r : members) {
      if (r->levels.size() != c.levels.size()) throw std::invalid_argument("reports use different grids");
      for (std::size_t j = 0; j < c.levels.size(); ++j) {
        c.quantile_reliability[j] += r->quantile_reliability[j];
        c.quantile_pinball[j] += r->quantile_pinball[j];
      }
      for (std::size_t j = 0; j < c.coverages.size(); ++j) {
        c.interval_reliability[j] += r->interval_reliability[j];
        c.interval_pinball[j] += r->interval_pinball[j];
      }
    }
    const double n = static_cast<double>(members.size());
    for (auto* v : {&c.quantile_reliability, &c.quantile_pinball, &c.interval_reliability, &c.interval_pinball}) {
      for (auto& x : *v) x /= n;
    }
    out.push_back(std::move(c));
  }
  return out;
}

void write_summary_csv(const std::filesystem::path& path, const SummaryTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "technique,k_NN,metric,value_percent\n";
  for (const auto& r : table.rows) {
    const std::pair<const char*, double> metrics[] = {
        {"quantile_reliability_abs", r.quantile_reliability},
        {"quantile_pinball", r.quantile_pinball},
        {"interval_reliability_abs", r.interval_reliability},
        {"interval_pinball", r.interval_pinball},
        {"interval_reliability_signed", r.interval_reliability_signed},
    };
    for (const auto& [name, value] : metrics) {
      out << r.technique << ',' << r.knn << ',' << name << ',' << csv::format_double(100.0 * value) << '\n';
    }
  }
}

void write_per_level_csv(const std::filesystem::path& path, const std::vector<LevelCurves>& curves) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "technique,k_NN,level_or_coverage,metric,value\n";
  for (const auto& c : curves) {
    for (std::size_t j = 0; j < c.levels.size(); ++j) {
      out << c.technique << ',' << c.knn << ',' << csv::format_double(c.levels[j]) << ",quantile_reliability,"
          << csv::format_double(c.quantile_reliability[j]) << '\n';
      out << c.technique << ',' << c.knn << ',' << csv::format_double(c.levels[j]) << ",quantile_pinball,"
          << csv::format_double(c.quantile_pinball[j]) << '\n';
    }
    for (std::size_t j = 0; j < c.coverages.size(); ++j) {
      out << c.technique << ',' << c.knn << ',' << csv::format_double(c.coverages[j]) << ",interval_reliability,"
          << csv::format_double(c.interval_reliability[j]) << '\n';
      out << c.technique << ',' << c.knn << ',' << csv::format_double(c.coverages[j]) << ",interval_pinball,"
          << csv::format_double(c.interval_pinball[j]) << '\n';
    }
  }
}

void write_reports_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "household,technique,k_NN,day_pairs,kind,level,reliability_deviation,pinball\n";
  for (const auto& r : reports) {
    const std::string prefix = r.household_id + ',' + r.technique + ',' + std::to_string(r.knn) + ',' +
                               std::to_string(r.day_pairs) + ',';
    for (std::size_t j = 0; j < r.levels.size(); ++j) {
      out << prefix << "quantile," << csv::format_double(r.levels[j]) << ','
          << csv::format_double(r.quantile_reliability[j]) << ',' << csv::format_double(r.quantile_pinball[j]) << '\n';
    }
    for (std::size_t j = 0; j < r.coverages.size(); ++j) {
      out << prefix << "interval," << csv::format_double(r.coverages[j]) << ','
          << csv::format_double(r.interval_reliability[j]) << ',' << csv::format_double(r.interval_pinball[j]) << '\n';
    }
  }
}

std::vector<EvalReport> read_reports_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  csv::Reader reader(in, ',');
  std::vector<std::string> f;
  reader.next(f);
  std::vector<EvalReport> out;
  std::map<std::tuple<std::string, std::string, std::size_t>, std::size_t> index;
  while (reader.next(f)) {
    if (f.size() != 8) throw std::runtime_error("malformed evaluation row in '" + path.string() + "'");
    const auto key = std::make_tuple(f[0], f[1], static_cast<std::size_t>(std::stoull(f[2])));
    auto it = index.find(key);
    if (it == index.end()) {
      EvalReport r;
      r.household_id = f[0];
      r.technique = f[1];
      r.knn = std::get<2>(key);
      r.day_pairs = static_cast<std::size_t>(std::stoull(f[3]));
      it = index.emplace(key, out.size()).first;
      out.push_back(std::move(r));
    }
    auto& r = out[it->second];
    if (f[4] == "quantile") {
      r.levels.push_back(std::stod(f[5]));
      r.quantile_reliability.push_back(std::stod(f[6]));
      r.quantile_pinball.push_back(std::stod(f[7]));
    } else {
      r.coverages.push_back(std::stod(f[5]));
      r.interval_reliability.push_back(std::stod(f[6]));
      r.interval_pinball.push_back(std::stod(f[7]));
    }
  }
  return out;
}

void write_table_csv(const std::filesystem::path& path, const SummaryTable& table, TableMetric metric) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  const auto techniques = table.techniques();
  out << "k_NN";
  for (const auto& t : techniques) out << ',' << t;
  out << '\n';
  char buf[32];
  for (auto knn : table.knns()) {
    out << knn;
    for (const auto& t : techniques) {
      const SummaryRow* r = table.find(t, knn);
      out << ',';
      if (!r) continue;
      double v = 0.0;
      switch (metric) {
        case TableMetric::QuantileReliability: v = r->quantile_reliability; break;
        case TableMetric::QuantilePinball: v = r->quantile_pinball; break;
        case TableMetric::IntervalReliability: v = r->interval_reliability; break;
        case TableMetric::IntervalPinball: v = r->interval_pinball; break;
      }
      std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace nnqf
