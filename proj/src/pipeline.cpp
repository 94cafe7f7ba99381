#include "nnqf/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "nnqf/csv.hpp"
#include "nnqf/hash.hpp"

namespace nnqf {

namespace fs = std::filesystem;

namespace {

std::string sanitize(const std::string& s) {
  std::string out = s;
  for (auto& ch : out) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) ch = '_';
  }
  return out;
}

std::string now_stamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + p.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << text;
}

std::string geometry_key(const RunConfig& c) {
  std::ostringstream o;
  const auto& f = c.features;
  o << "H=" << f.horizon << ";H1=" << f.max_lag << ";Hp=" << f.period << ";m=" << f.window_days
    << ";S=" << f.num_features << ";tau=" << csv::format_double(c.night_threshold)
    << ";split=" << csv::format_double(c.split.train_fraction) << ";exo=";
  for (const auto& ch : f.exogenous_channels) o << ch << '|';
  return o.str();
}

std::string selection_to_json(const SelectionResult& sel, const std::vector<FeatureDescriptor>& pool) {
  nlohmann::ordered_json j;
  j["chosen"] = sel.chosen;
  j["features"] = nlohmann::ordered_json::array();
  for (auto i : sel.chosen) j["features"].push_back(pool.at(i).name());
  j["scores"] = sel.scores;
  j["warnings"] = sel.warnings;
  return j.dump(1) + "\n";
}

SelectionResult selection_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  SelectionResult sel;
  sel.chosen = j.at("chosen").get<std::vector<std::size_t>>();
  sel.scores = j.at("scores").get<std::vector<double>>();
  sel.warnings = j.at("warnings").get<std::vector<std::string>>();
  return sel;
}

std::string level_header(const QuantileGrid& grid) {
  std::string out;
  for (std::size_t j = 0; j < grid.size(); ++j) out += ",q" + csv::format_double(grid[j]);
  return out;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads; rethrows the first failure.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first;
  std::mutex m;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(m);
        if (!first) first = std::current_exception();
        failed = true;
        return;
      }
    }
  };
  const std::size_t count = std::max<std::size_t>(1, std::min(workers, n));
  if (count == 1) {
    body();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < count; ++t) threads.emplace_back(body);
    for (auto& t : threads) t.join();
  }
  if (first) std::rethrow_exception(first);
}

template <typename Fn>
auto tagged(const std::string& stage, const std::string& household, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, household, e.what());
  }
}

struct TestSet {
  LearningSet all;
  NightMask mask;
};

TestSet test_set(const TimeSeriesFrame& frame, const RunConfig& c, const QuantileModelSet& model) {
  const auto min_length = static_cast<std::size_t>(c.features.horizon + c.features.max_lag + 1);
  const auto halves = split(frame, c.split, min_length);
  TestSet t;
  // The bundle references the frame it was built from; keep it alive for the assemble call only.
  const TimeSeriesFrame& test = halves.second;
  const SeriesBundle bundle(test, model.feature_spec);
  t.all = assemble(bundle, model.feature_spec, model.features);
  t.mask = night_mask(test, t.all.origins, model.feature_spec, model.night_threshold);
  return t;
}

}  // namespace

StageError::StageError(std::string stage, std::string household, const std::string& cause)
    : std::runtime_error("stage '" + stage + "'" + (household.empty() ? "" : ", household '" + household + "'") + ": " +
                         cause),
      stage_(std::move(stage)),
      household_(std::move(household)),
      cause_(cause) {}

ArtifactCache::ArtifactCache(fs::path root) : root_(std::move(root)) {}

fs::path ArtifactCache::path(const std::string& stage, const std::string& key, const std::string& ext) const {
  return root_ / stage / (key + ext);
}

bool ArtifactCache::contains(const std::string& stage, const std::string& key, const std::string& ext) const {
  return fs::exists(path(stage, key, ext));
}

fs::path ArtifactCache::store(const std::string& stage, const std::string& key, const std::string& ext,
                              const std::function<void(const fs::path&)>& write) const {
  const fs::path final_path = path(stage, key, ext);
  fs::create_directories(final_path.parent_path());
  std::ostringstream suffix;
  suffix << ".tmp-" << std::this_thread::get_id();
  const fs::path tmp = final_path.string() + suffix.str();
  write(tmp);
  // Sidecar files written next to the temporary (e.g. metadata) move along.
  const fs::path side = tmp.string() + ".json";
  if (fs::exists(side)) fs::rename(side, final_path.string() + ".json");
  fs::rename(tmp, final_path);
  return final_path;
}

std::string StageStatus::label() const {
  if (misses == 0) return "cache-hit";
  if (hits == 0) return "computed";
  return "partial (" + std::to_string(hits) + " cached, " + std::to_string(misses) + " computed)";
}

Pipeline::Pipeline(RunConfig config, fs::path run_dir, Log log)
    : config_(std::move(config)), run_dir_(std::move(run_dir)), cache_(config_.out / "cache"), log_(std::move(log)) {
  if (!log_) log_ = [](const std::string&) {};
}

Pipeline Pipeline::create(RunConfig config, Log log) {
  config.validate();
  config.out = fs::absolute(config.out);
  config.data_path = fs::absolute(config.data_path);
  fs::create_directories(config.out);
  const std::string stamp = "run-" + now_stamp();
  fs::path dir = config.out / stamp;
  for (int n = 1; fs::exists(dir); ++n) dir = config.out / (stamp + "-" + std::to_string(n));
  fs::create_directories(dir);
  Pipeline p(std::move(config), dir, std::move(log));
  write_text(dir / "config.ini", to_ini(p.config_));
  p.record("config", dir / "config.ini");
  p.write_manifest();
  return p;
}

Pipeline Pipeline::open(const fs::path& run_dir, Log log) {
  const fs::path ini = run_dir / "config.ini";
  if (!fs::exists(ini)) throw StageError("open", "", "no config.ini in '" + run_dir.string() + "'");
  RunConfig config = load_config(ini);
  config.validate();
  Pipeline p(std::move(config), fs::absolute(run_dir), std::move(log));
  p.record("config", ini);
  // Keep earlier stage tags for files already present.
  const fs::path manifest = run_dir / "manifest.json";
  if (fs::exists(manifest)) {
    const auto j = nlohmann::json::parse(read_text(manifest));
    for (const auto& a : j.at("artifacts")) {
      ArtifactEntry e;
      e.path = a.at("path").get<std::string>();
      e.stage = a.at("stage").get<std::string>();
      p.artifacts_[e.path] = e;
    }
  }
  return p;
}

std::optional<fs::path> Pipeline::latest_run(const fs::path& out) {
  if (!fs::exists(out)) return std::nullopt;
  std::optional<fs::path> best;
  fs::file_time_type best_time{};
  for (const auto& entry : fs::directory_iterator(out)) {
    if (!entry.is_directory()) continue;
    const auto name = entry.path().filename().string();
    if (name.rfind("run-", 0) != 0 || !fs::exists(entry.path() / "config.ini")) continue;
    const auto t = fs::last_write_time(entry.path() / "config.ini");
    if (!best || t > best_time || (t == best_time && entry.path() > *best)) {
      best = entry.path();
      best_time = t;
    }
  }
  return best;
}

template <typename Stage>
void Pipeline::guarded(const std::string& name, Stage&& stage) {
  try {
    tagged(name, "", stage);
  } catch (const StageError& e) {
    write_manifest(&e);
    throw;
  }
}

void Pipeline::record(const std::string& stage, const fs::path& file) {
  std::lock_guard lock(*mutex_);
  const std::string rel = fs::relative(file, run_dir_).generic_string();
  artifacts_[rel] = ArtifactEntry{rel, stage, {}, 0, true};
}

void Pipeline::count(const std::string& stage, bool hit) {
  std::lock_guard lock(*mutex_);
  auto& s = status_[stage];
  (hit ? s.hits : s.misses) += 1;
}

std::vector<std::size_t> Pipeline::household_order() const {
  std::vector<std::size_t> order(frames_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  return order;
}

std::string Pipeline::model_stem(const QuantileModelSet& m) const {
  return sanitize(m.household_id) + "_" + m.technique() + "_k" + std::to_string(m.knn);
}

void Pipeline::ensure_ingested() {
  if (frames_.empty()) ingest();
}

void Pipeline::ingest() {
  guarded("ingest", [&] {
    const auto& c = config_;
    std::ostringstream desc;
    desc << "ingest-v1\n" << sha256_file(c.data_path) << '\n'
         << (c.schema.layout == Layout::Wide ? "wide" : "long") << '|' << c.schema.timestamp_column << '|'
         << c.schema.household_column << '|' << c.schema.value_column << '|' << c.schema.delimiter << '|'
         << c.schema.resolution_minutes << '|' << c.schema.max_gap_steps << '|';
    for (const auto& e : c.schema.exogenous_columns) desc << e << ',';
    ingest_key_ = sha256_hex(desc.str());

    std::vector<TimeSeriesFrame> frames;
    if (cache_.contains("frames", ingest_key_, ".csv") && fs::exists(cache_.path("frames", ingest_key_, ".csv.json"))) {
      frames = read_frames_csv(cache_.path("frames", ingest_key_, ".csv"));
      count("ingest", true);
    } else {
      for (auto& f : nnqf::ingest(c.data_path, c.schema)) frames.push_back(normalize(f));
      cache_.store("frames", ingest_key_, ".csv", [&](const fs::path& p) { write_frames_csv(p, frames); });
      count("ingest", false);
    }
    if (!c.households.empty()) {
      std::vector<TimeSeriesFrame> chosen;
      for (const auto& id : c.households) {
        auto it = std::find_if(frames.begin(), frames.end(), [&](const auto& f) { return f.household_id == id; });
        if (it == frames.end()) throw StageError("ingest", id, "household not present in the data");
        chosen.push_back(*it);
      }
      frames = std::move(chosen);
    }
    frames_ = std::move(frames);

    std::ostringstream summary;
    summary << "household,K,scale,start,end\n";
    for (const auto& f : frames_) {
      summary << f.household_id << ',' << f.size() << ',' << csv::format_double(f.scale) << ','
              << format_timestamp(f.start_minutes) << ',' << format_timestamp(f.timestamp(f.size() - 1)) << '\n';
    }
    write_text(run_dir_ / "ingest_summary.csv", summary.str());
    record("ingest", run_dir_ / "ingest_summary.csv");
    log_("stage ingest: " + status_["ingest"].label() + " (" + std::to_string(frames_.size()) + " households)");
  });
  write_manifest();
}

void Pipeline::train() {
  ensure_ingested();
  guarded("train", [&] {
    const auto& c = config_;
    const auto pool_descriptors = c.features.candidates();
    const std::size_t kmax = *std::max_element(c.knn.begin(), c.knn.end());
    const auto min_length = static_cast<std::size_t>(c.features.horizon + c.features.max_lag + 1);
    std::vector<std::vector<std::pair<QuantileModelSet, std::string>>> per_household(frames_.size());

    parallel_for(frames_.size(), c.workers, [&](std::size_t h) {
      const TimeSeriesFrame& frame = frames_[h];
      const std::string& hh = frame.household_id;
      const auto halves = tagged("split", hh, [&] { return split(frame, c.split, min_length); });
      const TimeSeriesFrame& train = halves.first;
      const SeriesBundle bundle = tagged("features", hh, [&] { return SeriesBundle(train, c.features); });
      std::optional<CandidatePool> pool;

      for (int degree : c.degrees) {
        const PolynomialSpec poly{degree};
        std::ostringstream sk;
        sk << "select-v1\n" << ingest_key_ << '\n' << hh << '\n' << geometry_key(c) << '\n'
           << csv::format_double(c.holdout_fraction) << '|' << (c.holdout == HoldoutMode::Random ? "random" : "chrono")
           << '|' << c.seed << '|' << csv::format_double(c.ridge) << '|' << degree;
        const std::string sel_key = sha256_hex(sk.str());

        const SelectionResult selection = tagged("select", hh, [&] {
          if (cache_.contains("selection", sel_key, ".json")) {
            count("select", true);
            return selection_from_json(read_text(cache_.path("selection", sel_key, ".json")));
          }
          if (!pool) pool.emplace(bundle, c.features, c.night_threshold);
          if (pool->rows() < 2) throw std::runtime_error("too few day pairs for feature selection");
          const auto scorer = holdout_mse_scorer(poly, c.holdout_fraction, c.holdout, c.seed, c.ridge);
          SelectionResult sel = forward_select(*pool, c.features.num_features, scorer);
          for (const auto& w : sel.warnings) log_("warning: household '" + hh + "' " + poly.technique() + ": " + w);
          const std::string text = selection_to_json(sel, pool_descriptors);
          cache_.store("selection", sel_key, ".json", [&](const fs::path& p) { write_text(p, text); });
          count("select", false);
          return sel;
        });

        FeatureSpec spec = c.features;
        spec.selected = selection.chosen;
        const auto descriptors = spec.selected_descriptors();

        std::ostringstream kk;
        kk << "knn-v1\n" << sel_key << '\n' << kmax << '|' << c.include_self << '|' << csv::format_double(c.weight_epsilon);
        const std::string knn_key = sha256_hex(kk.str());
        std::vector<std::string> fit_keys;
        bool all_fits_cached = true;
        for (auto k : c.knn) {
          std::ostringstream fk;
          fk << "fit-v2\n" << knn_key << '\n' << k << '|' << csv::format_double(c.ridge) << '|';
          for (double q : c.grid.levels()) fk << csv::format_double(q) << ',';
          fit_keys.push_back(sha256_hex(fk.str()));
          all_fits_cached = all_fits_cached && cache_.contains("model", fit_keys.back(), ".json");
        }

        std::optional<LearningSet> day;
        auto day_set = [&]() -> const LearningSet& {
          if (!day) {
            day = tagged("features", hh, [&] {
              const LearningSet all = assemble(bundle, spec);
              const NightMask mask = night_mask(train, all.origins, spec, c.night_threshold);
              if (c.export_learning_sets) {
                const fs::path out = run_dir_ / "learning" / (sanitize(hh) + "_" + poly.technique() + "_train.csv");
                fs::create_directories(out.parent_path());
                write_learning_set_csv(out, all, mask);
                record("features", out);
              }
              return day_rows(all, mask);
            });
          }
          return *day;
        };
        if (c.export_learning_sets) day_set();

        std::optional<NeighborTable> table;
        if (all_fits_cached) {
          count("knn", true);
        } else {
          table = tagged("knn", hh, [&] {
            const LearningSet& ls = day_set();
            if (cache_.contains("neighbors", knn_key, ".bin")) {
              NeighborTable t = NeighborTable::load(cache_.path("neighbors", knn_key, ".bin"));
              if (t.rows != ls.rows() || t.k != kmax) throw std::runtime_error("cached neighbor table does not match");
              count("knn", true);
              return t;
            }
            const DistanceWeights weights = compute_weights(ls.X, c.weight_epsilon);
            NeighborTable t = pairwise_neighbors(ls.X, weights, kmax, {c.include_self});
            cache_.store("neighbors", knn_key, ".bin", [&](const fs::path& p) { t.save(p); });
            count("knn", false);
            return t;
          });
        }

        for (std::size_t ki = 0; ki < c.knn.size(); ++ki) {
          const std::size_t k = c.knn[ki];
          const std::string& fit_key = fit_keys[ki];
          QuantileModelSet model = tagged("fit", hh, [&] {
            if (cache_.contains("model", fit_key, ".json")) {
              count("fit", true);
              return load_model(cache_.path("model", fit_key, ".json"));
            }
            const LearningSet& ls = day_set();
            const TransformedTargets targets = transform_targets(ls.y, table->prefix(k), c.grid);
            const Eigen::MatrixXd A = expand(ls.X, poly);
            FitOptions options;
            options.ridge = c.ridge;
            const SequentialFit fit = fit_sequential(A, targets, options);
            QuantileModelSet m;
            m.household_id = hh;
            m.polynomial = poly;
            m.knn = k;
            m.feature_spec = spec;
            m.features = descriptors;
            m.night_threshold = c.night_threshold;
            m.grid = c.grid;
            m.coefficients = fit.coefficients;
            cache_.store("model", fit_key, ".json", [&](const fs::path& p) { save_model(p, m); });
            if (c.dump_transformed_targets) {
              const fs::path out = run_dir_ / "transformed" / (sanitize(hh) + "_" + poly.technique() + "_k" + std::to_string(k) + ".csv");
              fs::create_directories(out.parent_path());
              write_transformed_csv(out, targets);
              record("fit", out);
            }
            count("fit", false);
            return m;
          });
          per_household[h].emplace_back(std::move(model), fit_key);
        }
      }
    });

    models_.clear();
    model_keys_.clear();
    fs::create_directories(run_dir_ / "models");
    for (auto& list : per_household) {
      for (auto& [model, key] : list) {
        const std::string stem = model_stem(model);
        const fs::path dst = run_dir_ / "models" / (stem + ".json");
        fs::copy_file(cache_.path("model", key, ".json"), dst, fs::copy_options::overwrite_existing);
        record("fit", dst);
        model_keys_[stem] = key;
        models_.push_back(std::move(model));
      }
    }
    for (const char* s : {"select", "knn", "fit"}) log_(std::string("stage ") + s + ": " + status_[s].label());
  });
  write_manifest();
}

void Pipeline::load_models() {
  if (!models_.empty()) return;
  ensure_ingested();
  std::vector<std::string> missing;
  for (const auto& f : frames_) {
    for (int d : config_.degrees) {
      for (auto k : config_.knn) {
        const std::string stem = sanitize(f.household_id) + "_Poly" + std::to_string(d) + "_k" + std::to_string(k);
        const fs::path p = run_dir_ / "models" / (stem + ".json");
        if (!fs::exists(p)) {
          missing.push_back(fs::relative(p, run_dir_).generic_string());
          continue;
        }
        models_.push_back(load_model(p));
      }
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    models_.clear();
    throw StageError("predict", "", "missing model artifacts: " + list);
  }
}

void Pipeline::predict() {
  guarded("predict", [&] {
    load_models();
    const auto by_id = [&](const std::string& id) -> const TimeSeriesFrame& {
      return *std::find_if(frames_.begin(), frames_.end(), [&](const auto& f) { return f.household_id == id; });
    };
    fs::create_directories(run_dir_ / "predictions");
    parallel_for(models_.size(), config_.workers, [&](std::size_t i) {
      const auto& model = models_[i];
      tagged("predict", model.household_id, [&] {
        const TimeSeriesFrame& frame = by_id(model.household_id);
        const TestSet t = test_set(frame, config_, model);
        const Eigen::MatrixXd pred = model.predict(t.all.X, t.mask.is_night);
        const std::size_t offset = config_.split.boundary_index(frame.size());
        const fs::path out = run_dir_ / "predictions" / (model_stem(model) + ".csv");
        std::ofstream o(out, std::ios::binary);
        o << "origin_k,target_time,is_night,truth" << level_header(model.grid) << '\n';
        for (std::size_t n = 0; n < t.all.rows(); ++n) {
          const std::size_t target = t.all.origins[n] + static_cast<std::size_t>(model.feature_spec.horizon);
          o << t.all.origins[n] << ',' << format_timestamp(frame.timestamp(offset + target)) << ','
            << static_cast<int>(t.mask.is_night[n]) << ',' << csv::format_double(t.all.y(static_cast<Eigen::Index>(n)));
          for (Eigen::Index j = 0; j < pred.cols(); ++j) o << ',' << csv::format_double(pred(static_cast<Eigen::Index>(n), j));
          o << '\n';
        }
        o.close();
        record("predict", out);
        return 0;
      });
    });
    log_("stage predict: " + std::to_string(models_.size()) + " prediction files");
  });
  write_manifest();
}

void Pipeline::evaluate() {
  guarded("evaluate", [&] {
    load_models();
    std::vector<EvalReport> reports(models_.size());
    parallel_for(models_.size(), config_.workers, [&](std::size_t i) {
      const auto& model = models_[i];
      reports[i] = tagged("evaluate", model.household_id, [&] {
        std::ostringstream ek;
        ek << "eval-v1\n" << sha256_hex(model_to_json(model)) << '\n' << ingest_key_ << '\n'
           << csv::format_double(config_.split.train_fraction);
        const std::string key = sha256_hex(ek.str());
        if (cache_.contains("evaluation", key, ".csv")) {
          auto cached = read_reports_csv(cache_.path("evaluation", key, ".csv"));
          if (cached.size() == 1) {
            count("evaluate", true);
            return cached.front();
          }
        }
        const TimeSeriesFrame& frame =
            *std::find_if(frames_.begin(), frames_.end(), [&](const auto& f) { return f.household_id == model.household_id; });
        const TestSet t = test_set(frame, config_, model);
        const LearningSet day = day_rows(t.all, t.mask);
        if (day.rows() == 0) throw std::runtime_error("test half has no day pairs");
        const Eigen::MatrixXd pred = model.predict(day.X, std::vector<std::uint8_t>(day.rows(), 0));
        EvalReport r = nnqf::evaluate(day.y, pred, model.grid);
        r.household_id = model.household_id;
        r.technique = model.technique();
        r.knn = model.knn;
        cache_.store("evaluation", key, ".csv", [&](const fs::path& p) { write_reports_csv(p, {r}); });
        count("evaluate", false);
        return r;
      });
    });
    reports_ = std::move(reports);
    fs::create_directories(run_dir_ / "evaluation");
    write_reports_csv(run_dir_ / "evaluation" / "reports.csv", reports_);
    const SummaryTable table = aggregate(reports_);
    write_summary_csv(run_dir_ / "evaluation" / "summary.csv", table);
    write_per_level_csv(run_dir_ / "evaluation" / "per_level.csv", level_curves(reports_));
    for (const char* f : {"reports.csv", "summary.csv", "per_level.csv"}) record("evaluate", run_dir_ / "evaluation" / f);
    log_("stage evaluate: " + status_["evaluate"].label());
  });
  write_manifest();
}

namespace {

void write_curve(const fs::path& path, const std::vector<LevelCurves>& curves, bool interval,
                 std::vector<double> LevelCurves::*values, const char* axis) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw std::runtime_error("cannot write '" + path.string() + "'");
  o << axis;
  for (const auto& c : curves) o << ',' << c.technique << "_k" << c.knn;
  o << '\n';
  if (curves.empty()) return;
  const auto& axis_values = interval ? curves.front().coverages : curves.front().levels;
  for (std::size_t j = 0; j < axis_values.size(); ++j) {
    o << csv::format_double(axis_values[j]);
    for (const auto& c : curves) o << ',' << csv::format_double((c.*values)[j]);
    o << '\n';
  }
}

}  // namespace

void Pipeline::report() {
  guarded("report", [&] {
    const fs::path reports_path = run_dir_ / "evaluation" / "reports.csv";
    std::vector<std::string> missing;
    if (!fs::exists(reports_path)) missing.push_back("evaluation/reports.csv");
    if (!fs::exists(run_dir_ / "models")) missing.push_back("models/");
    if (!missing.empty()) {
      std::string list;
      for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
      throw StageError("report", "", "missing artifacts: " + list);
    }
    const auto reports = read_reports_csv(reports_path);
    if (reports.empty()) throw StageError("report", "", "evaluation/reports.csv holds no reports");
    const SummaryTable table = aggregate(reports);
    const fs::path dir = run_dir_ / "report";
    fs::create_directories(dir);
    const std::pair<const char*, TableMetric> tables[] = {
        {"table1_quantile_reliability.csv", TableMetric::QuantileReliability},
        {"table2_quantile_pinball.csv", TableMetric::QuantilePinball},
        {"table3_interval_reliability.csv", TableMetric::IntervalReliability},
        {"table4_interval_pinball.csv", TableMetric::IntervalPinball},
    };
    for (const auto& [name, metric] : tables) {
      write_table_csv(dir / name, table, metric);
      record("report", dir / name);
    }
    const auto curves = level_curves(reports);
    write_curve(dir / "curve_quantile_reliability.csv", curves, false, &LevelCurves::quantile_reliability, "level");
    write_curve(dir / "curve_quantile_pinball.csv", curves, false, &LevelCurves::quantile_pinball, "level");
    write_curve(dir / "curve_interval_reliability.csv", curves, true, &LevelCurves::interval_reliability, "coverage");
    write_curve(dir / "curve_interval_pinball.csv", curves, true, &LevelCurves::interval_pinball, "coverage");
    for (const char* f : {"curve_quantile_reliability.csv", "curve_quantile_pinball.csv", "curve_interval_reliability.csv",
                          "curve_interval_pinball.csv"}) {
      record("report", dir / f);
    }

    // Quantile fan for one household and test day.
    load_models();
    const std::string hh = config_.fan_household.empty() ? frames_.front().household_id : config_.fan_household;
    const int degree = config_.fan_degree != 0 ? config_.fan_degree : config_.degrees.front();
    const std::size_t knn = config_.fan_knn != 0 ? config_.fan_knn : *std::max_element(config_.knn.begin(), config_.knn.end());
    auto mit = std::find_if(models_.begin(), models_.end(), [&](const QuantileModelSet& m) {
      return m.household_id == hh && m.polynomial.degree == degree && m.knn == knn;
    });
    if (mit == models_.end()) throw StageError("report", hh, "no model for the fan export");
    const QuantileModelSet& model = *mit;
    const TimeSeriesFrame& frame =
        *std::find_if(frames_.begin(), frames_.end(), [&](const auto& f) { return f.household_id == hh; });
    const TestSet t = tagged("report", hh, [&] { return test_set(frame, config_, model); });
    const auto period = static_cast<std::size_t>(model.feature_spec.period);
    const auto H = static_cast<std::size_t>(model.feature_spec.horizon);
    if (t.all.rows() == 0) throw StageError("report", hh, "test half has no forecast pairs");
    // Day 0 is the first whole day with forecast targets.
    const std::size_t first_target = t.all.origins.front() + H;
    const std::size_t first = ((first_target + period - 1) / period + config_.fan_day) * period;
    const std::size_t offset = config_.split.boundary_index(frame.size());
    const fs::path fan = dir / ("fan_" + model_stem(model) + "_day" + std::to_string(config_.fan_day) + ".csv");
    std::ofstream o(fan, std::ios::binary);
    o << "target_k,target_time,is_night,truth" << level_header(model.grid) << '\n';
    std::size_t rows = 0;
    for (std::size_t n = 0; n < t.all.rows(); ++n) {
      const std::size_t target = t.all.origins[n] + H;
      if (target < first || target >= first + period) continue;
      std::vector<double> x(t.all.descriptors.size());
      for (std::size_t s = 0; s < x.size(); ++s) x[s] = t.all.X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(s));
      const auto curve = model.predict(x, t.mask.is_night[n] != 0);
      o << target << ',' << format_timestamp(frame.timestamp(offset + target)) << ',' << static_cast<int>(t.mask.is_night[n])
        << ',' << csv::format_double(t.all.y(static_cast<Eigen::Index>(n)));
      for (double v : curve) o << ',' << csv::format_double(v);
      o << '\n';
      ++rows;
    }
    o.close();
    if (rows == 0) throw StageError("report", hh, "fan day " + std::to_string(config_.fan_day) + " has no forecast targets");
    record("report", fan);
    log_("stage report: " + std::to_string(table.rows.size()) + " technique/k_NN rows");
  });
  write_manifest();
}

void Pipeline::run() {
  ingest();
  train();
  if (config_.write_predictions) predict();
  evaluate();
  report();
}

void Pipeline::write_manifest(const StageError* failure) {
  std::lock_guard lock(*mutex_);
  std::vector<ArtifactEntry> entries;
  for (const auto& entry : fs::recursive_directory_iterator(run_dir_)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), run_dir_).generic_string();
    if (rel == "manifest.json" || rel.rfind("manifest.json.", 0) == 0) continue;
    ArtifactEntry e;
    auto it = artifacts_.find(rel);
    e.path = rel;
    e.stage = it != artifacts_.end() ? it->second.stage : "unknown";
    e.sha256 = sha256_file(entry.path());
    e.bytes = entry.file_size();
    e.valid = !(failure && (e.stage == failure->stage() || it == artifacts_.end()));
    entries.push_back(std::move(e));
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  nlohmann::ordered_json j;
  j["run"] = run_dir_.filename().string();
  j["status"] = failure ? "failed" : "ok";
  if (failure) {
    j["error"] = {{"stage", failure->stage()}, {"household", failure->household()}, {"cause", failure->cause()}};
  }
  auto& stages = j["stages"] = nlohmann::ordered_json::object();
  for (const auto& [name, s] : status_) {
    stages[name] = {{"status", s.label()}, {"cached", s.hits}, {"computed", s.misses}};
  }
  auto& arts = j["artifacts"] = nlohmann::ordered_json::array();
  for (const auto& e : entries) {
    arts.push_back({{"path", e.path}, {"stage", e.stage}, {"sha256", e.sha256}, {"bytes", e.bytes}, {"valid", e.valid}});
  }
  const fs::path tmp = run_dir_ / "manifest.json.tmp";
  write_text(tmp, j.dump(1) + "\n");
  fs::rename(tmp, run_dir_ / "manifest.json");
}

}  // namespace nnqf
