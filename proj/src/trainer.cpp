// SPDX-License-Identifier: Apache-2.0
#include "ibpo/trainer.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ibpo/io.hpp"

namespace ibpo {

namespace {

constexpr std::uint64_t kIterStream = 0x1000000000000ull;
constexpr std::uint64_t kEvalStream = 0xE000000000000ull;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::Gspo: return "GSPO";
    case Method::IbpoBase: return "IBPO_BASE";
    case Method::IbpoRatio: return "IBPO_RATIO";
    case Method::IbpoMask: return "IBPO_MASK";
    case Method::K1: return "K1";
    case Method::ShapingOnly: return "SHAPING_ONLY";
    case Method::PromptOnly: return "PROMPT_ONLY";
    case Method::BestOfN: return "BEST_OF_N";
  }
  throw std::invalid_argument("method_name: unknown method");
}

Method method_from_name(const std::string& name) {
  if (name == "GSPO") return Method::Gspo;
  if (name == "IBPO_BASE") return Method::IbpoBase;
  if (name == "IBPO_RATIO") return Method::IbpoRatio;
  if (name == "IBPO_MASK") return Method::IbpoMask;
  if (name == "K1") return Method::K1;
  if (name == "SHAPING_ONLY") return Method::ShapingOnly;
  if (name == "PROMPT_ONLY") return Method::PromptOnly;
  if (name == "BEST_OF_N") return Method::BestOfN;
  throw std::invalid_argument("method_from_name: unknown method '" + name + "'");
}

bool method_uses_comparisons(Method m) {
  switch (m) {
    case Method::IbpoBase:
    case Method::IbpoRatio:
    case Method::IbpoMask:
    case Method::K1:
    case Method::ShapingOnly:
      return true;
    case Method::Gspo:
    case Method::PromptOnly:
    case Method::BestOfN:
      return false;
  }
  return false;
}

ObjectiveVariant objective_variant_for(Method m) {
  switch (m) {
    case Method::IbpoRatio: return ObjectiveVariant::IbpoRatio;
    case Method::IbpoMask: return ObjectiveVariant::IbpoMask;
    case Method::IbpoBase:
    case Method::K1:
    case Method::ShapingOnly:
      return ObjectiveVariant::IbpoBase;
    case Method::Gspo:
    case Method::PromptOnly:
    case Method::BestOfN:
      return ObjectiveVariant::Gspo;
  }
  return ObjectiveVariant::Gspo;
}

bool joint_training_active(const RunConfig& cfg) {
  return method_uses_comparisons(cfg.method) && cfg.method != Method::ShapingOnly &&
         cfg.joint_training && cfg.corrector.kind == CorrectorKind::Policy &&
         cfg.corrections_enabled;
}

void validate_run_config(const RunConfig& cfg) {
  if (cfg.env.vocab < 4) throw std::invalid_argument("config: env.V must be >= 4");
  if (cfg.env.chain_length < 1) throw std::invalid_argument("config: env.L must be >= 1");
  if (cfg.env.num_tasks < 1) throw std::invalid_argument("config: env.num_tasks must be >= 1");
  if (cfg.policy.lr <= 0.0) throw std::invalid_argument("config: policy.lr must be > 0");
  if (cfg.policy.max_len < cfg.env.chain_length + 1) {
    throw std::invalid_argument("config: policy.max_len must be >= L + 1");
  }
  if (cfg.compare.rho <= 0.0 || cfg.compare.rho > 1.0) {
    throw std::invalid_argument("config: compare.rho must be in (0,1]");
  }
  if (cfg.compare.alpha <= 0.0 || cfg.compare.alpha > 1.0) {
    throw std::invalid_argument("config: compare.alpha must be in (0,1]");
  }
  if (cfg.compare.kappa < 0.0) throw std::invalid_argument("config: compare.kappa must be >= 0");
  validate_objective_config(cfg.objective, cfg.compare.rho);
  if (cfg.iterations < 0) throw std::invalid_argument("config: iterations must be >= 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (cfg.best_of_n < 1) throw std::invalid_argument("config: best_of_n must be >= 1");
  if (cfg.checkpoint_every < 0) throw std::invalid_argument("config: checkpoint_every must be >= 0");
  if (cfg.corrector.kind == CorrectorKind::Oracle &&
      (cfg.corrector.repair_prob < 0.0 || cfg.corrector.repair_prob > 1.0)) {
    throw std::invalid_argument("config: corrector.repair_prob must be in [0,1]");
  }
  if (cfg.eval_samples < 1) throw std::invalid_argument("config: eval_samples must be >= 1");
}

std::int64_t generation_units(int tokens, int context_offset) {
  if (tokens < 0 || context_offset < 0) {
    throw std::invalid_argument("generation_units: negative argument");
  }
  const std::int64_t t = tokens;
  const std::int64_t c = context_offset;
  return t * c + t * (t + 1) / 2;
}

std::string metrics_csv_header() {
  return "iteration,compute_units,mean_reward,mean_shaped_reward,"
         "correction_success_rate,rewrite_rate,adv_centered_variance,grad_norm";
}

std::string metrics_csv_line(const MetricsRow& row) {
  std::ostringstream out;
  out << row.iteration << ',' << row.compute_units << ',' << fmt_double(row.mean_reward)
      << ',' << fmt_double(row.mean_shaped_reward) << ','
      << fmt_double(row.correction_success_rate) << ',' << fmt_double(row.rewrite_rate)
      << ',' << fmt_double(row.adv_centered_variance) << ',' << fmt_double(row.grad_norm);
  return out.str();
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& content) {
  std::vector<MetricsRow> rows;
  std::istringstream in(content);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.rfind("iteration,", 0) != 0) {
        throw std::runtime_error("parse_metrics_csv: unexpected header: " + line);
      }
      continue;
    }
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 8) throw std::runtime_error("parse_metrics_csv: bad row: " + line);
    MetricsRow row;
    row.iteration = std::stoll(fields[0]);
    row.compute_units = std::stoll(fields[1]);
    row.mean_reward = std::stod(fields[2]);
    row.mean_shaped_reward = std::stod(fields[3]);
    row.correction_success_rate = std::stod(fields[4]);
    row.rewrite_rate = std::stod(fields[5]);
    row.adv_centered_variance = std::stod(fields[6]);
    row.grad_norm = std::stod(fields[7]);
    rows.push_back(row);
  }
  return rows;
}

TrainerState make_initial_state(const RunConfig& cfg) {
  TrainerState state;
  state.params = make_uniform_params(cfg.env.vocab);
  return state;
}

namespace {

CorrectorFn build_corrector(const RunConfig& cfg, const PolicyParams& old_params) {
  if (cfg.corrector.kind == CorrectorKind::Oracle) {
    return make_oracle_corrector(cfg.corrector.repair_prob);
  }
  const int max_len = cfg.policy.max_len;
  return [&old_params, max_len](const TaskInstance& task, const Trajectory& target,
                                const Trajectory* reference, Rng& rng) {
    CorrectionContext ctx;
    ctx.task = task;
    ctx.target = target;
    if (reference != nullptr) ctx.reference = *reference;
    return sample_trajectory(old_params, task, PolicyMode::Correction, &ctx, rng, max_len);
  };
}

std::string trajectory_record(std::int64_t task_id, const Trajectory& traj,
                              const ComparisonOutcome* cmp) {
  nlohmann::ordered_json rec;
  rec["task_id"] = task_id;
  rec["tokens"] = traj.tokens;
  rec["logprobs"] = traj.logprobs_old;
  rec["reward"] = traj.terminal_reward;
  if (cmp != nullptr) {
    rec["s"] = cmp->s;
    if (cmp->mask.has_value()) rec["mask"] = cmp->mask->bits;
    rec["rewrite"] = cmp->rewrite;
    rec["corrected_reward"] = cmp->corrected_reward;
  }
  return rec.dump();
}

// Correction rollouts condition on the task prompt plus the folded target
// trajectory; that conditioning is what each generated token pays for.
int correction_context_offset(const Trajectory& target) { return 1 + target.length(); }

}  // namespace

CorrectionAuxResult run_correction_aux(const TaskInstance& task, const GroupBatch& group,
                                       const std::vector<std::optional<ComparisonOutcome>>& comparisons,
                                       const PolicyParams& old_params, const RunConfig& cfg,
                                       Rng& rng, UnitCounters& units,
                                       std::vector<CorrectionGroup>& groups_out) {
  CorrectionAuxResult res;
  if (comparisons.empty()) return res;
  for (int i = 0; i < group.size(); ++i) {
    const auto& cmp = comparisons[static_cast<std::size_t>(i)];
    if (!cmp.has_value() || !cmp->reference_index.has_value()) continue;  // K1: no reference
    CorrectionGroup cg;
    cg.context.task = task;
    cg.context.target = group.trajectories[static_cast<std::size_t>(i)];
    cg.context.reference =
        group.trajectories[static_cast<std::size_t>(*cmp->reference_index)];
    // Reuse the comparison's corrected output as the first member; it was
    // sampled from the same old policy and is already verified and charged.
    cg.outputs.push_back(cmp->corrected);
    const int offset = correction_context_offset(cg.context.target);
    for (int l = 1; l < cfg.objective.correction_group_size; ++l) {
      Trajectory z = sample_trajectory(old_params, task, PolicyMode::Correction,
                                       &cg.context, rng, cfg.policy.max_len);
      units.correction_generation += generation_units(z.length(), offset);
      units.verification += 1;
      cg.outputs.push_back(std::move(z));
    }
    groups_out.push_back(std::move(cg));
    ++res.num_groups;
  }
  return res;
}

IterationOutput run_iteration(TrainerState& state, const RunConfig& cfg) {
  const PolicyParams old_params = state.params;  // frozen behavior policy
  const bool comparisons_on = method_uses_comparisons(cfg.method) && cfg.corrections_enabled;
  const bool allow_reference = cfg.method != Method::K1;
  const bool joint_on = joint_training_active(cfg);
  const CorrectorFn corrector =
      comparisons_on ? build_corrector(cfg, old_params) : CorrectorFn{};

  ObjectiveConfig obj_cfg = cfg.objective;
  obj_cfg.variant = objective_variant_for(cfg.method);

  const Rng run_rng(cfg.seed);
  const Rng iter_rng = run_rng.split(kIterStream + static_cast<std::uint64_t>(state.iteration));

  ObjectiveResult batch_main;
  std::vector<CorrectionGroup> correction_groups;
  IterationOutput out;

  double sum_reward = 0.0;
  double sum_shaped = 0.0;
  std::int64_t num_traj = 0;
  std::int64_t corrections_attempted = 0;
  std::int64_t corrections_eligible = 0;
  std::int64_t rewrites = 0;
  double centered_sum = 0.0;
  double centered_sq_sum = 0.0;

  for (int b = 0; b < cfg.batch_size; ++b) {
    Rng prompt_rng = iter_rng.split(static_cast<std::uint64_t>(b));
    const std::int64_t task_id =
        cfg.env.task_seed_base + prompt_rng.next_int(cfg.env.num_tasks);
    const TaskInstance task = make_task(task_id, cfg.env.vocab, cfg.env.chain_length);

    GroupBatch group;
    group.task_id = task_id;
    group.trajectories.reserve(static_cast<std::size_t>(cfg.objective.group_size));
    for (int i = 0; i < cfg.objective.group_size; ++i) {
      Trajectory t = sample_trajectory(old_params, task, PolicyMode::Base, nullptr,
                                       prompt_rng, cfg.policy.max_len);
      state.units.base_generation += generation_units(t.length(), 1);
      state.units.verification += 1;
      group.trajectories.push_back(std::move(t));
    }

    std::vector<std::optional<ComparisonOutcome>> comparisons;
    if (comparisons_on) {
      comparisons = compare_group(task, group, cfg.compare, corrector, prompt_rng,
                                  allow_reference);
      for (int i = 0; i < group.size(); ++i) {
        const auto& cmp = comparisons[static_cast<std::size_t>(i)];
        if (!cmp.has_value()) continue;
        const Trajectory& target = group.trajectories[static_cast<std::size_t>(i)];
        state.units.correction_generation +=
            generation_units(cmp->corrected.length(), correction_context_offset(target));
        state.units.verification += 1;
        state.units.comparison += 1;
        ++corrections_attempted;
        if (cmp->corrected_reward == 1 && !cmp->rewrite) ++corrections_eligible;
        if (cmp->rewrite) ++rewrites;
      }
    }

    Eigen::VectorXd shaped(group.size());
    for (int i = 0; i < group.size(); ++i) {
      const Trajectory& traj = group.trajectories[static_cast<std::size_t>(i)];
      double delta = 0.0;
      if (comparisons_on) {
        const auto& cmp = comparisons[static_cast<std::size_t>(i)];
        if (cmp.has_value()) delta = shaping_delta(*cmp, cfg.compare);
      }
      shaped[i] = shaped_reward(traj.terminal_reward, delta, cfg.objective.lambda);
      sum_reward += traj.terminal_reward;
      sum_shaped += shaped[i];
      ++num_traj;
    }
    group.shaped_rewards = shaped;
    group.advantages = group_advantages(shaped, cfg.objective.std_floor);

    const double group_mean = shaped.mean();
    for (int i = 0; i < group.size(); ++i) {
      const double c = shaped[i] - group_mean;
      centered_sum += c;
      centered_sq_sum += c * c;
    }

    const ObjectiveResult main = main_objective(group, comparisons, task, state.params,
                                                old_params, obj_cfg);
    batch_main.value += main.value;
    batch_main.grad.accumulate(main.grad);

    if (joint_on) {
      run_correction_aux(task, group, comparisons, old_params, cfg, prompt_rng,
                         state.units, correction_groups);
    }

    if (cfg.log_trajectories) {
      for (int i = 0; i < group.size(); ++i) {
        const ComparisonOutcome* cmp = nullptr;
        if (comparisons_on && comparisons[static_cast<std::size_t>(i)].has_value()) {
          cmp = &*comparisons[static_cast<std::size_t>(i)];
        }
        out.trajectory_records.push_back(
            trajectory_record(task_id, group.trajectories[static_cast<std::size_t>(i)], cmp));
      }
    }
  }

  // The batch objective accumulates over prompts, so the effective step size
  // scales with batch_size (defaults lr=0.75, batch_size=16 are tuned
  // together). correction_objective averages over groups; rescaling by the
  // group count restores per-correction-input accumulation.
  ObjectiveResult corr;
  if (joint_on && !correction_groups.empty()) {
    corr = correction_objective(correction_groups, state.params, old_params, obj_cfg);
    const double scale = static_cast<double>(correction_groups.size());
    corr.value *= scale;
    corr.grad.scale(scale);
  }
  const ObjectiveResult total = total_objective(batch_main, corr, cfg.objective.eta);
  if (!std::isfinite(total.value) || !total.grad.all_finite()) {
    throw std::runtime_error("run_iteration: non-finite objective or gradient");
  }
  if (!total.grad.empty()) {
    apply_update(state.params, total.grad, cfg.policy.lr);
  }

  MetricsRow& row = out.metrics;
  row.iteration = state.iteration;
  row.compute_units = state.units.total();
  row.mean_reward = sum_reward / static_cast<double>(num_traj);
  row.mean_shaped_reward = sum_shaped / static_cast<double>(num_traj);
  row.correction_success_rate =
      corrections_attempted > 0
          ? static_cast<double>(corrections_eligible) / static_cast<double>(corrections_attempted)
          : 0.0;
  row.rewrite_rate = corrections_attempted > 0
                         ? static_cast<double>(rewrites) / static_cast<double>(corrections_attempted)
                         : 0.0;
  const double centered_mean = centered_sum / static_cast<double>(num_traj);
  row.adv_centered_variance =
      centered_sq_sum / static_cast<double>(num_traj) - centered_mean * centered_mean;
  row.grad_norm = total.grad.norm();

  ++state.iteration;
  return out;
}

TrainResult train(const RunConfig& cfg, const std::string& out_dir) {
  validate_run_config(cfg);
  std::filesystem::create_directories(out_dir);

  TrainResult result;
  result.state = make_initial_state(cfg);
  result.metrics_path = out_dir + "/metrics.csv";
  result.trajectories_path = out_dir + "/trajectories.jsonl";

  std::string traj_buffer;
  const auto flush_outputs = [&]() {
    std::string csv = metrics_csv_header();
    csv += '\n';
    for (const MetricsRow& row : result.metrics) {
      csv += metrics_csv_line(row);
      csv += '\n';
    }
    atomic_write_file(result.metrics_path, csv);
    if (cfg.log_trajectories) {
      atomic_write_file(result.trajectories_path, traj_buffer);
    }
  };

  try {
    while (result.state.iteration < cfg.iterations &&
           (cfg.compute_budget < 0 || result.state.units.total() < cfg.compute_budget)) {
      IterationOutput out = run_iteration(result.state, cfg);
      result.metrics.push_back(out.metrics);
      for (const std::string& rec : out.trajectory_records) {
        traj_buffer += rec;
        traj_buffer += '\n';
      }
      if (cfg.checkpoint_every > 0 && result.state.iteration % cfg.checkpoint_every == 0) {
        char name[64];
        std::snprintf(name, sizeof(name), "/checkpoint_%06lld.txt",
                      static_cast<long long>(result.state.iteration));
        save_params(result.state.params, out_dir + name);
      }
    }
  } catch (...) {
    flush_outputs();  // keep partial metrics on abort
    throw;
  }
  flush_outputs();
  save_params(result.state.params, out_dir + "/params_final.txt");
  return result;
}

double evaluate_policy(const PolicyParams& params, const RunConfig& cfg,
                       std::uint64_t eval_stream, UnitCounters* eval_units) {
  const Rng run_rng(cfg.seed);
  const Rng eval_rng = run_rng.split(kEvalStream + eval_stream);
  UnitCounters local;
  UnitCounters& units = eval_units != nullptr ? *eval_units : local;

  double sum = 0.0;
  for (int e = 0; e < cfg.eval_samples; ++e) {
    Rng rng = eval_rng.split(static_cast<std::uint64_t>(e));
    const std::int64_t task_id = cfg.env.task_seed_base + rng.next_int(cfg.env.num_tasks);
    const TaskInstance task = make_task(task_id, cfg.env.vocab, cfg.env.chain_length);

    int reward = 0;
    if (cfg.method == Method::BestOfN) {
      std::vector<Trajectory> candidates;
      candidates.reserve(static_cast<std::size_t>(cfg.best_of_n));
      for (int k = 0; k < cfg.best_of_n; ++k) {
        Trajectory t = sample_trajectory(params, task, PolicyMode::Base, nullptr, rng,
                                         cfg.policy.max_len);
        units.base_generation += generation_units(t.length(), 1);
        units.verification += 1;
        candidates.push_back(std::move(t));
      }
      const Trajectory* selected = &candidates.front();
      for (const Trajectory& t : candidates) {
        if (t.terminal_reward == 1) {
          selected = &t;
          break;
        }
      }
      reward = selected->terminal_reward;
    } else {
      Trajectory t = sample_trajectory(params, task, PolicyMode::Base, nullptr, rng,
                                       cfg.policy.max_len);
      units.base_generation += generation_units(t.length(), 1);
      units.verification += 1;
      reward = t.terminal_reward;
      if (cfg.method == Method::PromptOnly && reward == 0) {
        CorrectionContext ctx;
        ctx.task = task;
        ctx.target = t;
        Trajectory corrected = sample_trajectory(params, task, PolicyMode::Correction,
                                                 &ctx, rng, cfg.policy.max_len);
        units.correction_generation += generation_units(
            corrected.length(), correction_context_offset(t));
        units.verification += 1;
        reward = corrected.terminal_reward;
      }
    }
    sum += reward;
  }
  return sum / static_cast<double>(cfg.eval_samples);
}

}  // namespace ibpo
