// Writes synthetic input data in the wide CSV layout.
//
//   nnqf_synth pv --households 2 --days 120 -o data/sample_pv.csv
//   nnqf_synth hetero --length 20000 -o hetero.csv

#include <iostream>

#include "CLI11.hpp"
#include "nnqf/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"synthetic PV-like series"};
  app.require_subcommand(1);
  std::string out;
  nnqf::SyntheticPvOptions pv;
  nnqf::HeteroscedasticOptions het;

  auto* pv_cmd = app.add_subcommand("pv", "rooftop-PV-like households");
  pv_cmd->add_option("--households", pv.households)->check(CLI::PositiveNumber);
  pv_cmd->add_option("--days", pv.days)->check(CLI::PositiveNumber);
  pv_cmd->add_option("--resolution", pv.resolution_minutes)->check(CLI::PositiveNumber);
  pv_cmd->add_option("--seed", pv.seed);
  pv_cmd->add_option("-o,--output", out)->required();

  auto* het_cmd = app.add_subcommand("hetero", "series with a known conditional distribution");
  het_cmd->add_option("--length", het.length)->check(CLI::PositiveNumber);
  het_cmd->add_option("--period", het.period)->check(CLI::PositiveNumber);
  het_cmd->add_option("--seed", het.seed);
  het_cmd->add_option("-o,--output", out)->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (pv_cmd->parsed()) {
      nnqf::write_wide_csv(out, nnqf::synthetic_pv(pv));
    } else {
      nnqf::write_wide_csv(out, {nnqf::synthetic_heteroscedastic(het)});
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
