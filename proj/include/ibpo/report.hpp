// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ibpo/trainer.hpp"

namespace ibpo {

struct MetricsSeries {
  std::string label;
  std::vector<MetricsRow> rows;
};

// Collects metrics.csv / metrics_<label>.csv from a run directory and its
// immediate subdirectories. Labels come from the filename suffix when present,
// otherwise from the parent directory name.
std::vector<MetricsSeries> load_metrics_dir(const std::string& dir);

// Compute units at the first iteration whose mean reward reaches the
// threshold; nullopt when never reached.
std::optional<std::int64_t> units_at_threshold(const MetricsSeries& series, double threshold);

// Linear interpolation of the reward curve at a unit count (clamped to the
// series' range).
double reward_at_units(const MetricsSeries& series, double units);

// Mean of mean_reward over the trailing fraction of iterations.
double tail_mean_reward(const std::vector<MetricsRow>& rows, double tail_fraction = 0.25);

// reward_vs_units.csv: the raw (method, units, reward) curves.
std::string reward_vs_units_csv(const std::vector<MetricsSeries>& series);

// aligned_curves.csv: rewards interpolated on a common unit grid spanning
// [0, min over series of max units].
std::string aligned_curves_csv(const std::vector<MetricsSeries>& series, int grid_points = 101);

// threshold_table.csv: units to reach the threshold per method plus the ratio
// against the baseline (the GSPO series when present, else the first);
// "not_reached" when a series never crosses.
std::string threshold_table_csv(const std::vector<MetricsSeries>& series, double threshold);

}  // namespace ibpo
