// SPDX-License-Identifier: Apache-2.0
#include "ibpo/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "ibpo/io.hpp"

namespace ibpo {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::optional<std::string> metrics_label(const fs::path& file) {
  const std::string stem = file.stem().string();
  if (stem == "metrics") return std::nullopt;  // label from parent dir
  if (stem.rfind("metrics_", 0) == 0) return stem.substr(8);
  return std::nullopt;
}

bool is_metrics_file(const fs::path& file) {
  const std::string stem = file.stem().string();
  return file.extension() == ".csv" &&
         (stem == "metrics" || stem.rfind("metrics_", 0) == 0);
}

}  // namespace

std::vector<MetricsSeries> load_metrics_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) {
    throw std::runtime_error("load_metrics_dir: not a directory: " + dir);
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_metrics_file(entry.path())) {
      files.push_back(entry.path());
    } else if (entry.is_directory()) {
      for (const auto& sub : fs::directory_iterator(entry.path())) {
        if (sub.is_regular_file() && is_metrics_file(sub.path())) files.push_back(sub.path());
      }
    }
  }
  std::sort(files.begin(), files.end());

  std::vector<MetricsSeries> series;
  for (const fs::path& file : files) {
    MetricsSeries s;
    const auto label = metrics_label(file);
    s.label = label.has_value() ? *label : file.parent_path().filename().string();
    s.rows = parse_metrics_csv(read_file(file.string()));
    series.push_back(std::move(s));
  }
  return series;
}

std::optional<std::int64_t> units_at_threshold(const MetricsSeries& series, double threshold) {
  for (const MetricsRow& row : series.rows) {
    if (row.mean_reward >= threshold) return row.compute_units;
  }
  return std::nullopt;
}

double reward_at_units(const MetricsSeries& series, double units) {
  if (series.rows.empty()) throw std::runtime_error("reward_at_units: empty series");
  if (units <= static_cast<double>(series.rows.front().compute_units)) {
    return series.rows.front().mean_reward;
  }
  for (std::size_t i = 1; i < series.rows.size(); ++i) {
    const double u0 = static_cast<double>(series.rows[i - 1].compute_units);
    const double u1 = static_cast<double>(series.rows[i].compute_units);
    if (units <= u1) {
      if (u1 == u0) return series.rows[i].mean_reward;
      const double t = (units - u0) / (u1 - u0);
      return series.rows[i - 1].mean_reward +
             t * (series.rows[i].mean_reward - series.rows[i - 1].mean_reward);
    }
  }
  return series.rows.back().mean_reward;
}

double tail_mean_reward(const std::vector<MetricsRow>& rows, double tail_fraction) {
  if (rows.empty()) return 0.0;
  const std::size_t n = rows.size();
  std::size_t count = static_cast<std::size_t>(std::ceil(tail_fraction * static_cast<double>(n)));
  count = std::clamp<std::size_t>(count, 1, n);
  double sum = 0.0;
  for (std::size_t i = n - count; i < n; ++i) sum += rows[i].mean_reward;
  return sum / static_cast<double>(count);
}

std::string reward_vs_units_csv(const std::vector<MetricsSeries>& series) {
  std::ostringstream out;
  out << "method,compute_units,mean_reward\n";
  for (const MetricsSeries& s : series) {
    for (const MetricsRow& row : s.rows) {
      out << s.label << ',' << row.compute_units << ',' << fmt(row.mean_reward) << '\n';
    }
  }
  return out.str();
}

std::string aligned_curves_csv(const std::vector<MetricsSeries>& series, int grid_points) {
  if (grid_points < 2) throw std::invalid_argument("aligned_curves_csv: need >= 2 grid points");
  std::int64_t max_common = 0;
  bool first = true;
  for (const MetricsSeries& s : series) {
    if (s.rows.empty()) continue;
    const std::int64_t last = s.rows.back().compute_units;
    max_common = first ? last : std::min(max_common, last);
    first = false;
  }
  std::ostringstream out;
  out << "units";
  for (const MetricsSeries& s : series) out << ',' << s.label;
  out << '\n';
  if (first) return out.str();  // no non-empty series
  for (int k = 0; k < grid_points; ++k) {
    const double u = static_cast<double>(max_common) * k / (grid_points - 1);
    out << fmt(u);
    for (const MetricsSeries& s : series) {
      out << ',' << (s.rows.empty() ? "" : fmt(reward_at_units(s, u)));
    }
    out << '\n';
  }
  return out.str();
}

std::string threshold_table_csv(const std::vector<MetricsSeries>& series, double threshold) {
  // Baseline for the ratio column: the GSPO series when present, else the first.
  std::optional<std::int64_t> baseline;
  for (const MetricsSeries& s : series) {
    if (s.label == "GSPO" || s.label == "gspo") {
      baseline = units_at_threshold(s, threshold);
      break;
    }
  }
  if (!baseline.has_value() && !series.empty()) {
    baseline = units_at_threshold(series.front(), threshold);
  }

  std::ostringstream out;
  out << "method,units_at_threshold,ratio_vs_baseline\n";
  for (const MetricsSeries& s : series) {
    const auto units = units_at_threshold(s, threshold);
    out << s.label << ',';
    if (units.has_value()) {
      out << *units << ',';
      if (baseline.has_value() && *baseline > 0) {
        out << fmt(static_cast<double>(*units) / static_cast<double>(*baseline));
      } else {
        out << "not_reached";
      }
    } else {
      out << "not_reached,not_reached";
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace ibpo
