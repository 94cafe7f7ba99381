#include "nnqf/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "nnqf/csv.hpp"

namespace nnqf {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"data",
       {"path", "layout", "timestamp_column", "household_column", "value_column", "delimiter", "resolution_minutes",
        "max_gap_steps", "exogenous_columns", "households"}},
      {"features",
       {"horizon", "max_lag", "period", "window_days", "num_features", "night_threshold", "exogenous_channels"}},
      {"split", {"train_fraction"}},
      {"knn", {"k", "include_self", "epsilon"}},
      {"regression", {"degrees", "ridge", "quantile_levels"}},
      {"selection", {"holdout_fraction", "holdout", "seed"}},
      {"run", {"out", "workers", "write_predictions", "export_learning_sets", "dump_transformed_targets"}},
      {"report", {"fan_household", "fan_day", "fan_degree", "fan_knn"}},
  };
  return keys;
}

template <typename T>
T number(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  in >> value;
  if (!in || !(in >> std::ws).eof()) throw ConfigError("'" + key + "': cannot parse '" + text + "'");
  return value;
}

bool boolean(const std::string& key, std::string text) {
  std::transform(text.begin(), text.end(), text.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (text == "true" || text == "yes" || text == "1" || text == "on") return true;
  if (text == "false" || text == "no" || text == "0" || text == "off") return false;
  throw ConfigError("'" + key + "': expected a boolean, got '" + text + "'");
}

template <typename T>
std::string join(const std::vector<T>& items) {
  std::ostringstream out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out << ',';
    if constexpr (std::is_floating_point_v<T>) {
      out << csv::format_double(items[i]);
    } else {
      out << items[i];
    }
  }
  return out.str();
}

}  // namespace

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = csv::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void RunConfig::validate() const {
  if (data_path.empty()) throw ConfigError("[data] path is required");
  if (schema.resolution_minutes <= 0) throw ConfigError("[data] resolution_minutes must be positive");
  if (schema.max_gap_steps < 0) throw ConfigError("[data] max_gap_steps must be >= 0");
  try {
    features.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("[features] ") + e.what());
  }
  if (features.num_features == 0) throw ConfigError("[features] num_features must be >= 1");
  if (features.num_features > features.candidates().size()) {
    throw ConfigError("[features] num_features exceeds the candidate pool");
  }
  if (!(night_threshold >= 0.0)) throw ConfigError("[features] night_threshold must be >= 0");
  if (!(split.train_fraction > 0.0 && split.train_fraction < 1.0)) throw ConfigError("[split] train_fraction must lie in (0, 1)");
  if (knn.empty()) throw ConfigError("[knn] k needs at least one value");
  if (std::find(knn.begin(), knn.end(), std::size_t{0}) != knn.end()) throw ConfigError("[knn] k values must be positive");
  if (!(weight_epsilon > 0.0)) throw ConfigError("[knn] epsilon must be positive");
  if (degrees.empty()) throw ConfigError("[regression] degrees needs at least one value");
  for (int d : degrees) {
    if (d < 1) throw ConfigError("[regression] degrees must be >= 1");
  }
  if (!(ridge >= 0.0)) throw ConfigError("[regression] ridge must be >= 0");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw ConfigError("[selection] holdout_fraction must lie in (0, 1)");
  if (workers == 0) throw ConfigError("[run] workers must be >= 1");
  if (fan_degree != 0 && std::find(degrees.begin(), degrees.end(), fan_degree) == degrees.end()) {
    throw ConfigError("[report] fan_degree is not among the configured degrees");
  }
  if (fan_knn != 0 && std::find(knn.begin(), knn.end(), fan_knn) == knn.end()) {
    throw ConfigError("[report] fan_knn is not among the configured k values");
  }
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const auto& known = known_keys();
  for (const auto& [section, node] : tree) {
    auto it = known.find(section);
    if (it == known.end()) throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, value] : node) {
      if (!it->second.count(key)) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
    }
  }
  auto get = [&](const std::string& section, const std::string& key) -> std::optional<std::string> {
    auto v = tree.get_optional<std::string>(pt::ptree::path_type(section + "." + key, '.'));
    if (!v) return std::nullopt;
    return csv::trim(*v);
  };

  RunConfig c;
  if (auto v = get("data", "path")) {
    std::filesystem::path p(*v);
    c.data_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  }
  if (auto v = get("data", "layout")) {
    if (*v == "wide") c.schema.layout = Layout::Wide;
    else if (*v == "long") c.schema.layout = Layout::Long;
    else throw ConfigError("[data] layout must be 'wide' or 'long'");
  }
  if (auto v = get("data", "timestamp_column")) c.schema.timestamp_column = *v;
  if (auto v = get("data", "household_column")) c.schema.household_column = *v;
  if (auto v = get("data", "value_column")) c.schema.value_column = *v;
  if (auto v = get("data", "delimiter")) {
    if (*v == "tab" || *v == "\\t") c.schema.delimiter = '\t';
    else if (v->size() == 1) c.schema.delimiter = (*v)[0];
    else throw ConfigError("[data] delimiter must be a single character or 'tab'");
  }
  if (auto v = get("data", "resolution_minutes")) c.schema.resolution_minutes = number<int>("resolution_minutes", *v);
  if (auto v = get("data", "max_gap_steps")) c.schema.max_gap_steps = number<int>("max_gap_steps", *v);
  if (auto v = get("data", "exogenous_columns")) c.schema.exogenous_columns = split_list(*v);
  if (auto v = get("data", "households")) c.households = split_list(*v);

  if (auto v = get("features", "horizon")) c.features.horizon = number<int>("horizon", *v);
  if (auto v = get("features", "max_lag")) c.features.max_lag = number<int>("max_lag", *v);
  if (auto v = get("features", "period")) c.features.period = number<int>("period", *v);
  if (auto v = get("features", "window_days")) c.features.window_days = number<int>("window_days", *v);
  if (auto v = get("features", "num_features")) c.features.num_features = number<std::size_t>("num_features", *v);
  if (auto v = get("features", "night_threshold")) c.night_threshold = number<double>("night_threshold", *v);
  if (auto v = get("features", "exogenous_channels")) c.features.exogenous_channels = split_list(*v);

  if (auto v = get("split", "train_fraction")) c.split.train_fraction = number<double>("train_fraction", *v);

  if (auto v = get("knn", "k")) {
    c.knn.clear();
    for (const auto& item : split_list(*v)) c.knn.push_back(number<std::size_t>("k", item));
  }
  if (auto v = get("knn", "include_self")) c.include_self = boolean("include_self", *v);
  if (auto v = get("knn", "epsilon")) c.weight_epsilon = number<double>("epsilon", *v);

  if (auto v = get("regression", "degrees")) {
    c.degrees.clear();
    for (const auto& item : split_list(*v)) c.degrees.push_back(number<int>("degrees", item));
  }
  if (auto v = get("regression", "ridge")) c.ridge = number<double>("ridge", *v);
  if (auto v = get("regression", "quantile_levels")) {
    std::vector<double> levels;
    for (const auto& item : split_list(*v)) levels.push_back(number<double>("quantile_levels", item));
    try {
      c.grid = QuantileGrid(std::move(levels));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("[regression] quantile_levels: ") + e.what());
    }
  }

  if (auto v = get("selection", "holdout_fraction")) c.holdout_fraction = number<double>("holdout_fraction", *v);
  if (auto v = get("selection", "holdout")) {
    if (*v == "chronological") c.holdout = HoldoutMode::Chronological;
    else if (*v == "random") c.holdout = HoldoutMode::Random;
    else throw ConfigError("[selection] holdout must be 'chronological' or 'random'");
  }
  if (auto v = get("selection", "seed")) c.seed = number<std::uint64_t>("seed", *v);

  if (auto v = get("run", "out")) {
    std::filesystem::path p(*v);
    c.out = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  }
  if (auto v = get("run", "workers")) c.workers = number<std::size_t>("workers", *v);
  if (auto v = get("run", "write_predictions")) c.write_predictions = boolean("write_predictions", *v);
  if (auto v = get("run", "export_learning_sets")) c.export_learning_sets = boolean("export_learning_sets", *v);
  if (auto v = get("run", "dump_transformed_targets")) c.dump_transformed_targets = boolean("dump_transformed_targets", *v);

  if (auto v = get("report", "fan_household")) c.fan_household = *v;
  if (auto v = get("report", "fan_day")) c.fan_day = number<std::size_t>("fan_day", *v);
  if (auto v = get("report", "fan_degree")) c.fan_degree = number<int>("fan_degree", *v);
  if (auto v = get("report", "fan_knn")) c.fan_knn = number<std::size_t>("fan_knn", *v);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

std::string to_ini(const RunConfig& c) {
  std::ostringstream o;
  auto delimiter = [&]() -> std::string {
    if (c.schema.delimiter == '\t') return "tab";
    return std::string(1, c.schema.delimiter);
  };
  o << "[data]\n"
    << "path = " << c.data_path.string() << '\n'
    << "layout = " << (c.schema.layout == Layout::Wide ? "wide" : "long") << '\n'
    << "timestamp_column = " << c.schema.timestamp_column << '\n'
    << "household_column = " << c.schema.household_column << '\n'
    << "value_column = " << c.schema.value_column << '\n'
    << "delimiter = " << delimiter() << '\n'
    << "resolution_minutes = " << c.schema.resolution_minutes << '\n'
    << "max_gap_steps = " << c.schema.max_gap_steps << '\n'
    << "exogenous_columns = " << join(c.schema.exogenous_columns) << '\n'
    << "households = " << join(c.households) << '\n'
    << "\n[features]\n"
    << "horizon = " << c.features.horizon << '\n'
    << "max_lag = " << c.features.max_lag << '\n'
    << "period = " << c.features.period << '\n'
    << "window_days = " << c.features.window_days << '\n'
    << "num_features = " << c.features.num_features << '\n'
    << "night_threshold = " << csv::format_double(c.night_threshold) << '\n'
    << "exogenous_channels = " << join(c.features.exogenous_channels) << '\n'
    << "\n[split]\n"
    << "train_fraction = " << csv::format_double(c.split.train_fraction) << '\n'
    << "\n[knn]\n"
    << "k = " << join(c.knn) << '\n'
    << "include_self = " << (c.include_self ? "true" : "false") << '\n'
    << "epsilon = " << csv::format_double(c.weight_epsilon) << '\n'
    << "\n[regression]\n"
    << "degrees = " << join(c.degrees) << '\n'
    << "ridge = " << csv::format_double(c.ridge) << '\n'
    << "quantile_levels = " << join(c.grid.levels()) << '\n'
    << "\n[selection]\n"
    << "holdout_fraction = " << csv::format_double(c.holdout_fraction) << '\n'
    << "holdout = " << (c.holdout == HoldoutMode::Chronological ? "chronological" : "random") << '\n'
    << "seed = " << c.seed << '\n'
    << "\n[run]\n"
    << "out = " << c.out.string() << '\n'
    << "workers = " << c.workers << '\n'
    << "write_predictions = " << (c.write_predictions ? "true" : "false") << '\n'
    << "export_learning_sets = " << (c.export_learning_sets ? "true" : "false") << '\n'
    << "dump_transformed_targets = " << (c.dump_transformed_targets ? "true" : "false") << '\n'
    << "\n[report]\n"
    << "fan_household = " << c.fan_household << '\n'
    << "fan_day = " << c.fan_day << '\n'
    << "fan_degree = " << c.fan_degree << '\n'
    << "fan_knn = " << c.fan_knn << '\n';
  return o.str();
}

}  // namespace nnqf
