// SPDX-License-Identifier: Apache-2.0
#include "ibpo/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "ibpo/analysis.hpp"
#include "ibpo/config.hpp"
#include "ibpo/io.hpp"
#include "ibpo/report.hpp"
#include "ibpo/trainer.hpp"

namespace ibpo {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

int config_error(const std::exception& err) {
  std::cerr << "config error: " << err.what() << "\n";
  return 2;
}

int runtime_error_exit(const std::exception& err) {
  std::cerr << "error: " << err.what() << "\n";
  return 1;
}

}  // namespace

int run_train(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed_override) {
  RunConfig cfg;
  try {
    cfg = load_run_config(config_path);
    if (seed_override.has_value()) cfg.seed = *seed_override;
  } catch (const std::exception& err) {
    return config_error(err);
  }
  try {
    const TrainResult res = train(cfg, out_dir);
    std::cout << "train: " << res.metrics.size() << " iterations, "
              << res.state.units.total() << " units, metrics at " << res.metrics_path
              << "\n";
    return 0;
  } catch (const std::exception& err) {
    return runtime_error_exit(err);
  }
}

int run_variance(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed_override) {
  VarianceConfig cfg;
  try {
    cfg = load_variance_config(config_path);
    if (seed_override.has_value()) cfg.seed = *seed_override;
  } catch (const std::exception& err) {
    return config_error(err);
  }

  try {
    std::filesystem::create_directories(out_dir);
    const Rng root(cfg.seed);
    bool all_gates_pass = true;

    // Lemma grid: MC covariance against the closed form, 3 SE per cell; at
    // most one failing cell tolerated.
    std::ostringstream lemma_csv;
    lemma_csv << "p,m,closed_form,cov_hat,se,pass\n";
    int lemma_cells = 0;
    int lemma_passes = 0;
    std::uint64_t stream = 0;
    for (double p : cfg.lemma_p) {
      for (double m : cfg.lemma_m) {
        ExchangeableModel model = cfg.model;
        model.p = p;
        model.m = m;
        Rng rng = root.split(0xA000 + stream++);
        const MomentEstimates est = estimate_moments(model, cfg.group_size, cfg.num_groups, rng);
        const double closed = lemma_cov_closed_form(p, m);
        const bool pass = std::abs(est.c_in - closed) <= 3.0 * est.c_in_se;
        lemma_cells += 1;
        lemma_passes += pass ? 1 : 0;
        lemma_csv << fmt(p) << ',' << fmt(m) << ',' << fmt(closed) << ',' << fmt(est.c_in)
                  << ',' << fmt(est.c_in_se) << ',' << (pass ? 1 : 0) << '\n';
      }
    }
    if (lemma_passes < lemma_cells - 1) all_gates_pass = false;
    atomic_write_file(out_dir + "/lemma_grid.csv", lemma_csv.str());

    // Identity checks: |lhs - rhs| <= 4 SE gates at every (G, lambda) cell,
    // including the 2*lambda_max row (the identity holds at any lambda; only
    // the reduction sign flips there).
    std::ostringstream id_csv;
    id_csv << "G,lambda,lambda_max_hat,lhs,lhs_se,rhs,diff_se,identity_pass,reduction\n";
    for (int g_size : cfg.identity_group_sizes) {
      Rng mrng = root.split(0xB000 + stream++);
      const MomentEstimates est = estimate_moments(cfg.model, g_size, cfg.num_groups, mrng);
      const double lmax = lambda_max(est.c(), est.v_phi());
      std::vector<double> lambdas;
      for (double frac : cfg.identity_lambda_fracs) lambdas.push_back(frac * lmax);
      lambdas.push_back(2.0 * lmax);
      for (double lambda : lambdas) {
        Rng rng = root.split(0xC000 + stream++);
        const IdentityCheck check =
            variance_identity_check(cfg.model, g_size, lambda, cfg.num_groups, rng);
        if (!check.pass) all_gates_pass = false;
        id_csv << g_size << ',' << fmt(lambda) << ',' << fmt(lmax) << ',' << fmt(check.lhs)
               << ',' << fmt(check.lhs_se) << ',' << fmt(check.rhs) << ','
               << fmt(check.diff_se) << ',' << (check.pass ? 1 : 0) << ','
               << (check.lhs < 0.0 ? 1 : 0) << '\n';
      }
    }
    atomic_write_file(out_dir + "/identity_checks.csv", id_csv.str());

    // Lambda sweep over one shared sample; rows are informational.
    std::vector<double> grid = cfg.lambda_grid;
    if (grid.empty()) {
      Rng mrng = root.split(0xD000);
      const MomentEstimates est =
          estimate_moments(cfg.model, cfg.group_size, cfg.num_groups, mrng);
      const double lmax = lambda_max(est.c(), est.v_phi());
      for (double frac : {0.1, 0.25, 0.4, 0.5, 0.6, 0.75, 1.0, 1.5, 2.0}) {
        grid.push_back(frac * lmax);
      }
    }
    Rng sweep_rng = root.split(0xE000);
    const std::vector<SweepRow> rows =
        variance_sweep(cfg.model, cfg.group_size, grid, cfg.num_groups, sweep_rng);
    std::ostringstream sweep_csv;
    sweep_csv << "lambda,lhs,lhs_se,rhs,lambda_max_hat,pass\n";
    for (const SweepRow& row : rows) {
      sweep_csv << fmt(row.lambda) << ',' << fmt(row.lhs) << ',' << fmt(row.lhs_se) << ','
                << fmt(row.rhs) << ',' << fmt(row.lambda_max_hat) << ','
                << (row.pass ? 1 : 0) << '\n';
    }
    atomic_write_file(out_dir + "/variance_report.csv", sweep_csv.str());

    std::cout << "variance: lemma " << lemma_passes << "/" << lemma_cells
              << " cells, gates " << (all_gates_pass ? "pass" : "FAIL") << "\n";
    return all_gates_pass ? 0 : 1;
  } catch (const std::exception& err) {
    return runtime_error_exit(err);
  }
}

int run_ablate(const std::string& config_path, const std::string& out_dir,
               std::optional<std::uint64_t> seed_override,
               const std::vector<std::string>& variants_override,
               std::optional<double> threshold_override) {
  AblateConfig cfg;
  try {
    cfg = load_ablate_config(config_path);
    if (seed_override.has_value()) cfg.base.seed = *seed_override;
    if (!variants_override.empty()) cfg.variants = variants_override;
    if (threshold_override.has_value()) cfg.threshold = *threshold_override;
    for (const std::string& name : cfg.variants) method_from_name(name);
    if (cfg.variants.empty() && cfg.lambda_sweep.empty()) {
      throw std::invalid_argument("ablate: no variants and no lambda sweep configured");
    }
  } catch (const std::exception& err) {
    return config_error(err);
  }

  struct Job {
    std::string label;
    RunConfig cfg;
  };
  std::vector<Job> jobs;
  for (const std::string& name : cfg.variants) {
    RunConfig rc = cfg.base;
    rc.method = method_from_name(name);
    jobs.push_back({name, rc});
  }
  for (double lambda : cfg.lambda_sweep) {
    RunConfig rc = cfg.base;
    rc.method = Method::IbpoBase;
    rc.objective.lambda = lambda;
    jobs.push_back({"IBPO_BASE_lambda_" + fmt(lambda), rc});
  }

  std::filesystem::create_directories(out_dir);
  std::ostringstream summary;
  summary << "variant,final_mean_reward,last_reward,eval_reward,total_units,"
             "units_to_threshold\n";
  int failures = 0;
  for (const Job& job : jobs) {
    try {
      const TrainResult res = train(job.cfg, out_dir + "/" + job.label);
      UnitCounters eval_units;
      const double eval = evaluate_policy(res.state.params, job.cfg, 0, &eval_units);
      MetricsSeries series{job.label, res.metrics};
      const auto units = units_at_threshold(series, cfg.threshold);
      summary << job.label << ',' << fmt(tail_mean_reward(res.metrics)) << ','
              << fmt(res.metrics.empty() ? 0.0 : res.metrics.back().mean_reward) << ','
              << fmt(eval) << ',' << res.state.units.total() << ',';
      if (units.has_value()) {
        summary << *units;
      } else {
        summary << "not_reached";
      }
      summary << '\n';
      std::cout << "ablate: " << job.label << " done\n";
    } catch (const std::exception& err) {
      ++failures;
      summary << job.label << ",failed,failed,failed,failed,failed\n";
      std::cerr << "ablate: " << job.label << " failed: " << err.what() << "\n";
    }
  }
  try {
    atomic_write_file(out_dir + "/summary.csv", summary.str());
  } catch (const std::exception& err) {
    return runtime_error_exit(err);
  }
  return failures == static_cast<int>(jobs.size()) ? 1 : 0;
}

int run_report(const std::string& run_dir, const std::string& out_dir, double threshold) {
  try {
    const std::vector<MetricsSeries> series = load_metrics_dir(run_dir);
    if (series.empty()) {
      std::cerr << "report: no metrics files under " << run_dir << "\n";
      return 1;
    }
    const std::string dest = out_dir.empty() ? run_dir : out_dir;
    std::filesystem::create_directories(dest);
    atomic_write_file(dest + "/reward_vs_units.csv", reward_vs_units_csv(series));
    atomic_write_file(dest + "/aligned_curves.csv", aligned_curves_csv(series));
    atomic_write_file(dest + "/threshold_table.csv", threshold_table_csv(series, threshold));
    std::cout << "report: " << series.size() << " series, outputs under " << dest << "\n";
    return 0;
  } catch (const std::exception& err) {
    return runtime_error_exit(err);
  }
}

}  // namespace ibpo
