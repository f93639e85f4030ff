// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ibpo/analysis.hpp"
#include "ibpo/trainer.hpp"

namespace ibpo {

// Configs are JSON files whose keys mirror the config struct fields.
// Scalar keys can be overridden through environment variables named
// IBPO_<SECTION>_<KEY> (upper-cased, path joined with '_'), e.g.
// IBPO_OBJECTIVE_LAMBDA=0.8 or IBPO_SEED=7.

struct AblateConfig {
  RunConfig base;
  std::vector<std::string> variants;   // method names
  std::vector<double> lambda_sweep;    // optional IBPO_BASE lambda sweep
  double threshold = 0.75;             // units-to-threshold reporting
};

struct VarianceConfig {
  ExchangeableModel model;
  int group_size = 4;
  std::int64_t num_groups = 100000;
  std::vector<double> lemma_p = {0.2, 0.5, 0.8};
  std::vector<double> lemma_m = {0.1, 0.5, 0.9};
  std::vector<int> identity_group_sizes = {2, 4, 8};
  std::vector<double> identity_lambda_fracs = {0.25, 0.5, 0.75};
  std::vector<double> lambda_grid;     // empty: derived from lambda_max_hat
  std::uint64_t seed = 1;
};

RunConfig load_run_config(const std::string& path);
AblateConfig load_ablate_config(const std::string& path);
VarianceConfig load_variance_config(const std::string& path);

// Parse from JSON text (exposed for tests).
RunConfig parse_run_config(const std::string& json_text);
AblateConfig parse_ablate_config(const std::string& json_text);
VarianceConfig parse_variance_config(const std::string& json_text);

}  // namespace ibpo
