// nnqf: kNN quantile-filter forecasting pipeline.
//
//   nnqf run      --config cfg.ini [overrides]
//   nnqf ingest   --config cfg.ini
//   nnqf train    --config cfg.ini | --run DIR
//   nnqf predict  --run DIR | --config cfg.ini   (latest run under [run] out)
//   nnqf evaluate --run DIR | --config cfg.ini
//   nnqf report   --run DIR | --config cfg.ini

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nnqf/config.hpp"
#include "nnqf/pipeline.hpp"

namespace {

struct Options {
  std::string config;
  std::string run_dir;
  std::string data;
  std::string out;
  std::vector<std::string> households;
  std::vector<std::size_t> knn;
  std::vector<int> degrees;
  std::size_t workers = 0;
  std::int64_t seed = -1;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Options& o, bool overrides) {
  cmd->add_option("-c,--config", o.config, "INI run configuration");
  cmd->add_option("-r,--run", o.run_dir, "existing run directory");
  cmd->add_flag("-q,--quiet", o.quiet, "suppress stage status lines");
  if (!overrides) return;
  cmd->add_option("--data", o.data, "override [data] path");
  cmd->add_option("--out", o.out, "override [run] out");
  cmd->add_option("--households", o.households, "restrict to these household ids")->delimiter(',');
  cmd->add_option("--knn", o.knn, "override [knn] k")->delimiter(',');
  cmd->add_option("--degrees", o.degrees, "override [regression] degrees")->delimiter(',');
  cmd->add_option("--workers", o.workers, "households processed in parallel");
  cmd->add_option("--seed", o.seed, "selection holdout seed");
}

nnqf::RunConfig build_config(const Options& o) {
  nnqf::RunConfig c = nnqf::load_config(o.config);
  if (!o.data.empty()) c.data_path = std::filesystem::absolute(o.data);
  if (!o.out.empty()) c.out = std::filesystem::absolute(o.out);
  if (!o.households.empty()) c.households = o.households;
  if (!o.knn.empty()) c.knn = o.knn;
  if (!o.degrees.empty()) c.degrees = o.degrees;
  if (o.workers != 0) c.workers = o.workers;
  if (o.seed >= 0) c.seed = static_cast<std::uint64_t>(o.seed);
  c.validate();
  return c;
}

nnqf::Pipeline open_or_create(const Options& o, bool reuse_latest, nnqf::Pipeline::Log log) {
  if (!o.run_dir.empty()) return nnqf::Pipeline::open(o.run_dir, std::move(log));
  if (o.config.empty()) throw nnqf::ConfigError("either --config or --run is required");
  nnqf::RunConfig c = build_config(o);
  if (reuse_latest) {
    auto latest = nnqf::Pipeline::latest_run(c.out);
    if (!latest) throw nnqf::StageError("open", "", "no run directory under '" + c.out.string() + "'");
    return nnqf::Pipeline::open(*latest, std::move(log));
  }
  return nnqf::Pipeline::create(std::move(c), std::move(log));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kNN quantile-filter probabilistic PV forecasting"};
  app.require_subcommand(1);
  Options o;
  auto* run = app.add_subcommand("run", "all stages in a new run directory");
  auto* ingest = app.add_subcommand("ingest", "validate and normalize the input data");
  auto* train = app.add_subcommand("train", "select features and fit quantile models");
  auto* predict = app.add_subcommand("predict", "write test-half quantile forecasts");
  auto* evaluate = app.add_subcommand("evaluate", "reliability and pinball metrics");
  auto* report = app.add_subcommand("report", "summary tables, curves and a quantile fan");
  for (auto* cmd : {run, ingest, train}) add_common(cmd, o, true);
  for (auto* cmd : {predict, evaluate, report}) add_common(cmd, o, false);

  CLI11_PARSE(app, argc, argv);

  nnqf::Pipeline::Log log = [&](const std::string& line) {
    if (!o.quiet) std::cerr << line << '\n';
  };
  try {
    if (run->parsed()) {
      auto p = open_or_create(o, false, log);
      p.run();
      std::cout << p.run_dir().string() << '\n';
    } else if (ingest->parsed()) {
      auto p = open_or_create(o, false, log);
      p.ingest();
      std::cout << p.run_dir().string() << '\n';
    } else if (train->parsed()) {
      auto p = open_or_create(o, false, log);
      p.train();
      std::cout << p.run_dir().string() << '\n';
    } else if (predict->parsed()) {
      auto p = open_or_create(o, true, log);
      p.predict();
      std::cout << p.run_dir().string() << '\n';
    } else if (evaluate->parsed()) {
      auto p = open_or_create(o, true, log);
      p.evaluate();
      std::cout << p.run_dir().string() << '\n';
    } else if (report->parsed()) {
      auto p = open_or_create(o, true, log);
      p.report();
      std::cout << p.run_dir().string() << '\n';
    }
  } catch (const nnqf::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const nnqf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
