#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nnqf/config.hpp"
#include "nnqf/evaluation.hpp"
#include "nnqf/regression.hpp"

namespace nnqf {

/// A failure inside one pipeline stage, tagged for diagnostics.
class StageError : public std::runtime_error {
public:
  StageError(std::string stage, std::string household, const std::string& cause);

  const std::string& stage() const { return stage_; }
  const std::string& household() const { return household_; }
  const std::string& cause() const { return cause_; }

private:
  std::string stage_;
  std::string household_;
  std::string cause_;
};

/// Content-addressed store under <out>/cache. Entries are written atomically.
class ArtifactCache {
public:
  explicit ArtifactCache(std::filesystem::path root);

  std::filesystem::path path(const std::string& stage, const std::string& key, const std::string& ext) const;
  bool contains(const std::string& stage, const std::string& key, const std::string& ext) const;
  /// Runs `write` on a temporary path, then moves it into place.
  std::filesystem::path store(const std::string& stage, const std::string& key, const std::string& ext,
                              const std::function<void(const std::filesystem::path&)>& write) const;

private:
  std::filesystem::path root_;
};

struct StageStatus {
  std::size_t hits = 0;
  std::size_t misses = 0;

  std::string label() const;
};

struct ArtifactEntry {
  std::string path;  // relative to the run directory
  std::string stage;
  std::string sha256;
  std::uintmax_t bytes = 0;
  bool valid = true;
};

/// Orchestrates ingest -> select -> knn -> fit -> predict -> evaluate -> report
/// for one run directory.
class Pipeline {
public:
  using Log = std::function<void(const std::string&)>;

  /// Starts a new run directory <config.out>/run-<timestamp>.
  static Pipeline create(RunConfig config, Log log = {});
  /// Reopens an existing run directory using its stored config.
  static Pipeline open(const std::filesystem::path& run_dir, Log log = {});
  /// Most recent run directory under `out`, if any.
  static std::optional<std::filesystem::path> latest_run(const std::filesystem::path& out);

  const RunConfig& config() const { return config_; }
  const std::filesystem::path& run_dir() const { return run_dir_; }
  const std::map<std::string, StageStatus>& stage_status() const { return status_; }

  void ingest();
  void train();
  void predict();
  void evaluate();
  void report();
  /// All stages in order.
  void run();

  /// Rewrites manifest.json; `failure` marks the run and that stage's artifacts invalid.
  void write_manifest(const StageError* failure = nullptr);

  // Loaded state, valid after the corresponding stage ran.
  const std::vector<TimeSeriesFrame>& frames() const { return frames_; }
  const std::vector<QuantileModelSet>& models() const { return models_; }
  const std::vector<EvalReport>& reports() const { return reports_; }

private:
  Pipeline(RunConfig config, std::filesystem::path run_dir, Log log);

  template <typename Stage>
  void guarded(const std::string& name, Stage&& stage);
  void record(const std::string& stage, const std::filesystem::path& file);
  void count(const std::string& stage, bool hit);
  void load_models();
  void ensure_ingested();
  std::vector<std::size_t> household_order() const;
  std::string model_stem(const QuantileModelSet& m) const;

  RunConfig config_;
  std::filesystem::path run_dir_;
  ArtifactCache cache_;
  Log log_;
  std::unique_ptr<std::mutex> mutex_ = std::make_unique<std::mutex>();
  std::map<std::string, StageStatus> status_;
  std::map<std::string, ArtifactEntry> artifacts_;
  std::string ingest_key_;
  std::vector<TimeSeriesFrame> frames_;
  std::vector<QuantileModelSet> models_;
  std::map<std::string, std::string> model_keys_;  // model stem -> fit cache key
  std::vector<EvalReport> reports_;
};

}  // namespace nnqf
