#include "nnqf/features.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "nnqf/csv.hpp"

namespace nnqf {

namespace {

const char* source_prefix(Source s) {
  switch (s) {
    case Source::Power: return "P";
    case Source::RollingMax: return "Pmax";
    case Source::RollingMean: return "Pmean";
    case Source::Exogenous: return "u";
  }
  return "?";
}

template <typename Reduce>
DerivedSeries rolling(const std::vector<double>& power, int period, int window_days, Reduce reduce) {
  if (period < 1 || window_days < 0) throw std::invalid_argument("rolling window needs period >= 1 and m >= 0");
  DerivedSeries out;
  out.values.assign(power.size(), 0.0);
  const auto reach = static_cast<std::size_t>(period) * static_cast<std::size_t>(window_days);
  out.first_available = std::min(reach, power.size());
  for (std::size_t k = reach; k < power.size(); ++k) {
    out.values[k] = reduce(k);
  }
  return out;
}

}  // namespace

std::string FeatureDescriptor::name() const {
  std::string base = source_prefix(source);
  if (source == Source::Exogenous) base += ":" + channel;
  return base + "[k-" + std::to_string(lag) + "]";
}

FeatureDescriptor FeatureDescriptor::parse(const std::string& name) {
  const auto open = name.find("[k-");
  if (open == std::string::npos || name.back() != ']') throw std::invalid_argument("bad feature name '" + name + "'");
  FeatureDescriptor d;
  d.lag = std::stoi(name.substr(open + 3, name.size() - open - 4));
  const std::string base = name.substr(0, open);
  if (base == "P") {
    d.source = Source::Power;
  } else if (base == "Pmax") {
    d.source = Source::RollingMax;
  } else if (base == "Pmean") {
    d.source = Source::RollingMean;
  } else if (base.rfind("u:", 0) == 0) {
    d.source = Source::Exogenous;
    d.channel = base.substr(2);
  } else {
    throw std::invalid_argument("bad feature name '" + name + "'");
  }
  return d;
}

std::vector<FeatureDescriptor> FeatureSpec::candidates() const {
  std::vector<FeatureDescriptor> out;
  for (Source s : {Source::Power, Source::RollingMax, Source::RollingMean}) {
    for (int lag = 0; lag <= max_lag; ++lag) out.push_back({s, lag, {}});
  }
  for (const auto& ch : exogenous_channels) {
    for (int lag = 0; lag <= max_lag; ++lag) out.push_back({Source::Exogenous, lag, ch});
  }
  return out;
}

std::vector<FeatureDescriptor> FeatureSpec::selected_descriptors() const {
  const auto pool = candidates();
  std::vector<FeatureDescriptor> out;
  for (auto i : selected) out.push_back(pool.at(i));
  return out;
}

void FeatureSpec::validate() const {
  if (horizon < 1) throw std::invalid_argument("horizon H must be >= 1");
  if (max_lag < 0) throw std::invalid_argument("max lag H1 must be >= 0");
  if (period < 1) throw std::invalid_argument("period Hp must be >= 1");
  if (window_days < 0) throw std::invalid_argument("window m must be >= 0");
  const std::size_t pool = candidates().size();
  std::set<std::size_t> seen;
  for (auto i : selected) {
    if (i >= pool) throw std::invalid_argument("selected feature index out of range");
    if (!seen.insert(i).second) throw std::invalid_argument("selected feature indices must be distinct");
  }
}

DerivedSeries rolling_max(const std::vector<double>& power, int period, int window_days) {
  return rolling(power, period, window_days, [&](std::size_t k) {
    double m = power[k];
    for (int j = 1; j <= window_days; ++j) m = std::max(m, power[k - static_cast<std::size_t>(j * period)]);
    return m;
  });
}

DerivedSeries rolling_mean(const std::vector<double>& power, int period, int window_days) {
  return rolling(power, period, window_days, [&](std::size_t k) {
    double sum = 0.0;
    for (int j = 0; j <= window_days; ++j) sum += power[k - static_cast<std::size_t>(j * period)];
    return sum / static_cast<double>(window_days + 1);
  });
}

SeriesBundle::SeriesBundle(const TimeSeriesFrame& frame, const FeatureSpec& spec)
    : frame_(&frame),
      power_{frame.values, 0},
      max_(rolling_max(frame.values, spec.period, spec.window_days)),
      mean_(rolling_mean(frame.values, spec.period, spec.window_days)) {
  for (const auto& ch : spec.exogenous_channels) {
    auto it = frame.exogenous.find(ch);
    if (it == frame.exogenous.end()) {
      throw std::invalid_argument("household '" + frame.household_id + "' has no exogenous channel '" + ch + "'");
    }
    exogenous_.push_back({ch, DerivedSeries{it->second, 0}});
  }
}

const DerivedSeries& SeriesBundle::series(const FeatureDescriptor& d) const {
  switch (d.source) {
    case Source::Power: return power_;
    case Source::RollingMax: return max_;
    case Source::RollingMean: return mean_;
    case Source::Exogenous:
      for (const auto& [name, s] : exogenous_) {
        if (name == d.channel) return s;
      }
      throw std::invalid_argument("unknown exogenous channel '" + d.channel + "'");
  }
  throw std::logic_error("unreachable");
}

bool SeriesBundle::available(const FeatureDescriptor& d, std::size_t origin) const {
  if (origin < static_cast<std::size_t>(d.lag)) return false;
  return series(d).available(origin - static_cast<std::size_t>(d.lag));
}

double SeriesBundle::value(const FeatureDescriptor& d, std::size_t origin) const {
  return series(d).values[origin - static_cast<std::size_t>(d.lag)];
}

std::size_t NightMask::night_count() const {
  return static_cast<std::size_t>(std::count(is_night.begin(), is_night.end(), std::uint8_t{1}));
}

LearningSet assemble(const SeriesBundle& bundle, const FeatureSpec& spec) {
  spec.validate();
  return assemble(bundle, spec, spec.selected_descriptors());
}

LearningSet assemble(const SeriesBundle& bundle, const FeatureSpec& spec,
                     const std::vector<FeatureDescriptor>& descriptors) {
  const auto& frame = bundle.frame();
  const std::size_t K = frame.size();
  const auto H = static_cast<std::size_t>(spec.horizon);
  const auto H1 = static_cast<std::size_t>(spec.max_lag);

  LearningSet out;
  out.household_id = frame.household_id;
  out.descriptors = descriptors;
  if (K < H + H1 + 1) {
    throw std::invalid_argument("household '" + frame.household_id + "': series of length " + std::to_string(K) +
                                " forms no learning pair");
  }
  for (std::size_t k = H1; k + H < K; ++k) {
    const bool ok = std::all_of(descriptors.begin(), descriptors.end(),
                                [&](const FeatureDescriptor& d) { return bundle.available(d, k); });
    if (ok) {
      out.origins.push_back(k);
    } else {
      ++out.dropped_unavailable;
    }
  }
  if (out.origins.empty()) {
    throw std::invalid_argument("household '" + frame.household_id + "': no learning pair has all inputs available");
  }
  const auto N = static_cast<Eigen::Index>(out.origins.size());
  out.X.resize(N, static_cast<Eigen::Index>(descriptors.size()));
  out.y.resize(N);
  for (Eigen::Index n = 0; n < N; ++n) {
    const std::size_t k = out.origins[static_cast<std::size_t>(n)];
    for (std::size_t s = 0; s < descriptors.size(); ++s) {
      out.X(n, static_cast<Eigen::Index>(s)) = bundle.value(descriptors[s], k);
    }
    out.y(n) = frame.values[k + H];
  }
  return out;
}

NightMask night_mask(const TimeSeriesFrame& frame, const std::vector<std::size_t>& origins, const FeatureSpec& spec,
                     double threshold) {
  NightMask mask;
  mask.threshold = threshold;
  mask.is_night.reserve(origins.size());
  const auto Hp = static_cast<std::size_t>(spec.period);
  for (auto k : origins) {
    const bool night = k >= Hp && frame.values.at(k) <= threshold && frame.values[k - Hp] <= threshold;
    mask.is_night.push_back(night ? 1 : 0);
  }
  return mask;
}

LearningSet filter_rows(const LearningSet& set, const std::vector<std::uint8_t>& keep) {
  if (keep.size() != set.rows()) throw std::invalid_argument("row filter length mismatch");
  LearningSet out;
  out.household_id = set.household_id;
  out.descriptors = set.descriptors;
  out.dropped_unavailable = set.dropped_unavailable;
  const auto n = static_cast<Eigen::Index>(std::count_if(keep.begin(), keep.end(), [](auto v) { return v != 0; }));
  out.X.resize(n, set.X.cols());
  out.y.resize(n);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (!keep[i]) continue;
    out.X.row(row) = set.X.row(static_cast<Eigen::Index>(i));
    out.y(row) = set.y(static_cast<Eigen::Index>(i));
    out.origins.push_back(set.origins[i]);
    ++row;
  }
  return out;
}

LearningSet day_rows(const LearningSet& set, const NightMask& mask) {
  std::vector<std::uint8_t> keep(mask.size());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = mask.is_night[i] ? 0 : 1;
  return filter_rows(set, keep);
}

NightAccuracy night_accuracy(const TimeSeriesFrame& frame, const std::vector<std::size_t>& origins,
                             const NightMask& mask, const FeatureSpec& spec) {
  if (mask.size() != origins.size()) throw std::invalid_argument("night mask length mismatch");
  NightAccuracy acc;
  acc.pairs = origins.size();
  std::size_t agree = 0, night_true = 0;
  for (std::size_t i = 0; i < origins.size(); ++i) {
    const bool below = frame.values.at(origins[i] + static_cast<std::size_t>(spec.horizon)) <= mask.threshold;
    const bool flagged = mask.is_night[i] != 0;
    if (flagged) {
      ++acc.flagged;
      if (below) ++night_true;
    }
    if (flagged == below) ++agree;
  }
  if (acc.flagged > 0) acc.precision = static_cast<double>(night_true) / static_cast<double>(acc.flagged);
  if (acc.pairs > 0) acc.accuracy = static_cast<double>(agree) / static_cast<double>(acc.pairs);
  return acc;
}

CandidatePool::CandidatePool(const SeriesBundle& bundle, const FeatureSpec& spec, double night_threshold)
    : bundle_(&bundle), candidates_(spec.candidates()) {
  const auto& frame = bundle.frame();
  const std::size_t K = frame.size();
  const auto H = static_cast<std::size_t>(spec.horizon);
  std::vector<std::size_t> all;
  for (std::size_t k = static_cast<std::size_t>(spec.max_lag); k + H < K; ++k) {
    const bool ok = std::all_of(candidates_.begin(), candidates_.end(),
                                [&](const FeatureDescriptor& d) { return bundle.available(d, k); });
    if (ok) all.push_back(k);
  }
  const NightMask mask = night_mask(frame, all, spec, night_threshold);
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (!mask.is_night[i]) origins_.push_back(all[i]);
  }
  target_.resize(static_cast<Eigen::Index>(origins_.size()));
  for (std::size_t n = 0; n < origins_.size(); ++n) target_(static_cast<Eigen::Index>(n)) = frame.values[origins_[n] + H];
}

Eigen::VectorXd CandidatePool::column(std::size_t candidate) const {
  const auto& d = candidates_.at(candidate);
  Eigen::VectorXd col(static_cast<Eigen::Index>(origins_.size()));
  for (std::size_t n = 0; n < origins_.size(); ++n) col(static_cast<Eigen::Index>(n)) = bundle_->value(d, origins_[n]);
  return col;
}

void write_learning_set_csv(const std::filesystem::path& path, const LearningSet& set, const NightMask& mask) {
  if (mask.size() != set.rows()) throw std::invalid_argument("night mask length mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "origin_k";
  for (const auto& d : set.descriptors) out << ',' << d.name();
  out << ",y,is_night\n";
  for (std::size_t n = 0; n < set.rows(); ++n) {
    const auto row = static_cast<Eigen::Index>(n);
    out << set.origins[n];
    for (Eigen::Index s = 0; s < set.X.cols(); ++s) out << ',' << csv::format_double(set.X(row, s));
    out << ',' << csv::format_double(set.y(row)) << ',' << static_cast<int>(mask.is_night[n]) << '\n';
  }
}

}  // namespace nnqf
