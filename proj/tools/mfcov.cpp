#include <CLI11.hpp>

#include <iostream>

#include "mfcov/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multifidelity covariance estimation on the SPD manifold"};
  app.require_subcommand(1, 1);

  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool verify_frechet = false;

  const std::pair<const char*, const char*> commands[] = {
      {"pilot", "Estimate level variances and correlations from a pilot sample"},
      {"plan", "Compute the optimal sample allocation for a budget"},
      {"estimate", "Compute one covariance estimate"},
      {"bench", "Run a budget sweep and write per-trial distances as CSV"},
      {"metric", "Run the metric-learning pipeline"},
  };
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "JSON configuration file")->required();
    sub->add_option("--out", out, "Output path (default: config 'output' key, else stdout)");
    sub->add_option("--seed", seed, "Override the configured root seed");
    if (std::string_view(name) == "estimate") {
      sub->add_flag("--verify-frechet", verify_frechet, "Check the LEMF estimate against its Frechet-mean form");
    }
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? mfcov::kExitOk : mfcov::kExitConfig;
  }

  mfcov::RunOptions options;
  options.verify_frechet = verify_frechet;
  for (CLI::App* sub : subs) {
    if (!sub->parsed()) continue;
    if (sub->count("--out")) options.out = out;
    if (sub->count("--seed")) options.seed = seed;
    return mfcov::run_command(sub->get_name(), config, options, std::cout, std::cerr);
  }
  return mfcov::kExitConfig;
}
