// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: train / variance / ablate / report.

#include <CLI11.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ibpo/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual-correction RL lab on a verifiable chain task"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string run_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> variants;
  double threshold = 0.75;
  bool threshold_set = false;

  CLI::App* train = app.add_subcommand("train", "Run one training configuration");
  train->add_option("--config", config_path, "Run config (JSON)")->required();
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--seed", seed, "Override config seed");

  CLI::App* variance = app.add_subcommand("variance", "Monte Carlo variance checks");
  variance->add_option("--config", config_path, "Variance config (JSON)")->required();
  variance->add_option("--out", out_dir, "Output directory")->required();
  variance->add_option("--seed", seed, "Override config seed");

  CLI::App* ablate = app.add_subcommand("ablate", "Run method variants at matched budget");
  ablate->add_option("--config", config_path, "Ablate config (JSON)")->required();
  ablate->add_option("--out", out_dir, "Output directory")->required();
  ablate->add_option("--seed", seed, "Override config seed");
  ablate->add_option("--variants", variants, "Method names to run")->delimiter(',');
  ablate->add_option("--threshold", threshold, "Reward threshold for the summary")
      ->each([&threshold_set](const std::string&) { threshold_set = true; });

  CLI::App* report = app.add_subcommand("report", "Aligned-compute comparison reports");
  report->add_option("run_dir", run_dir, "Directory holding metrics files")->required();
  report->add_option("--out", out_dir, "Output directory (default: run_dir)");
  report->add_option("--threshold", threshold, "Reward threshold for the units table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (train->parsed()) return ibpo::run_train(config_path, out_dir, seed);
  if (variance->parsed()) return ibpo::run_variance(config_path, out_dir, seed);
  if (ablate->parsed()) {
    return ibpo::run_ablate(config_path, out_dir, seed, variants,
                            threshold_set ? std::optional<double>(threshold) : std::nullopt);
  }
  if (report->parsed()) return ibpo::run_report(run_dir, out_dir, threshold);
  return 2;
}
