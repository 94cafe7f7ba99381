#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nnqf/dataset.hpp"
#include "nnqf/features.hpp"
#include "nnqf/knn_quantile.hpp"
#include "nnqf/regression.hpp"

namespace nnqf {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Everything a run depends on. A default-constructed config holds the
/// 24-hour-ahead PV setting: H = H1 = Hp = 96, m = 7, tau = 1e-4, S = 4,
/// k_NN in {50, 70, 100, 120}, degrees 1-3, 99 quantile levels, halves.
struct RunConfig {
  std::filesystem::path data_path;
  IngestSchema schema;
  std::vector<std::string> households;  // empty: all

  FeatureSpec features;
  double night_threshold = 1e-4;
  SplitSpec split;

  std::vector<std::size_t> knn{50, 70, 100, 120};
  bool include_self = true;
  double weight_epsilon = 1e-12;

  std::vector<int> degrees{1, 2, 3};
  double ridge = 1e-8;
  QuantileGrid grid = QuantileGrid::standard();

  double holdout_fraction = 0.2;
  HoldoutMode holdout = HoldoutMode::Chronological;
  std::uint64_t seed = 0;

  std::filesystem::path out = "runs";
  std::size_t workers = 1;
  bool write_predictions = false;
  bool export_learning_sets = false;
  bool dump_transformed_targets = false;

  std::string fan_household;  // empty: first household
  std::size_t fan_day = 0;    // whole test days with targets, counted from the first
  int fan_degree = 0;         // 0: first configured degree
  std::size_t fan_knn = 0;    // 0: largest configured k_NN

  void validate() const;
};

/// Reads an INI file (sections [data], [features], [split], [knn],
/// [regression], [selection], [run], [report]). Relative data paths resolve
/// against the config file's directory. Unknown keys are errors.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});

/// Canonical INI text with every field spelled out; parse_config(to_ini(c)) == c.
std::string to_ini(const RunConfig& config);

std::vector<std::string> split_list(const std::string& text);

}  // namespace nnqf
