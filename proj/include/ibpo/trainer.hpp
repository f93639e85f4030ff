// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ibpo/counterfactual.hpp"
#include "ibpo/env_chain.hpp"
#include "ibpo/objective.hpp"
#include "ibpo/policy.hpp"
#include "ibpo/rng.hpp"

namespace ibpo {

// Training methods. PROMPT_ONLY and BEST_OF_N train exactly as GSPO and
// differ only in their evaluation protocol; K1 runs the comparison pipeline
// with no alternative reference; SHAPING_ONLY keeps the shaping term but
// disables the auxiliary correction objective.
enum class Method : std::uint8_t {
  Gspo,
  IbpoBase,
  IbpoRatio,
  IbpoMask,
  K1,
  ShapingOnly,
  PromptOnly,
  BestOfN,
};

enum class CorrectorKind : std::uint8_t { Oracle, Policy };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct EnvConfig {
  int vocab = 16;         // V
  int chain_length = 4;   // L
  std::int64_t task_seed_base = 0;
  int num_tasks = 64;
};

struct PolicyConfig {
  double lr = 0.75;
  int max_len = 8;
};

struct CorrectorConfig {
  CorrectorKind kind = CorrectorKind::Oracle;
  double repair_prob = 0.8;  // oracle only
};

struct RunConfig {
  EnvConfig env;
  PolicyConfig policy;
  ObjectiveConfig objective;
  CompareConfig compare;
  Method method = Method::IbpoBase;
  CorrectorConfig corrector;
  int iterations = 2000;
  int batch_size = 16;
  std::uint64_t seed = 1;
  std::int64_t compute_budget = -1;  // < 0 means unlimited
  int best_of_n = 8;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  bool joint_training = true;
  bool corrections_enabled = true;
  bool log_trajectories = true;
  int eval_samples = 256;
};

void validate_run_config(const RunConfig& cfg);

bool method_uses_comparisons(Method m);
ObjectiveVariant objective_variant_for(Method m);
bool joint_training_active(const RunConfig& cfg);

// Budget currency: generating T tokens on top of a fixed context of
// context_offset tokens costs sum_{t=1..T} (context_offset + t), i.e. each
// token pays for its context plus itself. Base rollouts have offset 1 (the
// task prompt); correction rollouts pay for the concatenated target and
// reference as well. Verification and comparison cost 1 unit per trajectory.
std::int64_t generation_units(int tokens, int context_offset);

struct UnitCounters {
  std::int64_t base_generation = 0;
  std::int64_t correction_generation = 0;
  std::int64_t verification = 0;
  std::int64_t comparison = 0;

  std::int64_t total() const {
    return base_generation + correction_generation + verification + comparison;
  }
};

struct MetricsRow {
  std::int64_t iteration = 0;
  std::int64_t compute_units = 0;  // cumulative
  double mean_reward = 0.0;        // raw terminal reward, never shaped
  double mean_shaped_reward = 0.0;
  double correction_success_rate = 0.0;
  double rewrite_rate = 0.0;
  double adv_centered_variance = 0.0;  // pre-normalization centered shaped rewards
  double grad_norm = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_line(const MetricsRow& row);
std::vector<MetricsRow> parse_metrics_csv(const std::string& content);

struct TrainerState {
  PolicyParams params;
  UnitCounters units;
  std::int64_t iteration = 0;
};

TrainerState make_initial_state(const RunConfig& cfg);

struct IterationOutput {
  MetricsRow metrics;
  std::vector<std::string> trajectory_records;  // serialized JSONL lines
};

// One pass of the main training procedure: sample G rollouts per prompt from
// the frozen old policy, verify, compare-and-correct the failures, shape and
// normalize rewards, build the main (+ auxiliary) objective and take one
// ascent step. Aborts on a non-finite objective or gradient.
IterationOutput run_iteration(TrainerState& state, const RunConfig& cfg);

struct CorrectionAuxResult {
  ObjectiveResult objective;
  int num_groups = 0;
};

// Builds one correction group per incorrect answer that has a reference
// (reusing the comparison's corrected output as the first member, sampling
// G_c - 1 more from the old policy), and returns the auxiliary objective.
// Targets without references are skipped. Units are charged to `units`.
CorrectionAuxResult run_correction_aux(const TaskInstance& task, const GroupBatch& group,
                                       const std::vector<std::optional<ComparisonOutcome>>& comparisons,
                                       const PolicyParams& old_params, const RunConfig& cfg,
                                       Rng& rng, UnitCounters& units,
                                       std::vector<CorrectionGroup>& groups_out);

struct TrainResult {
  std::vector<MetricsRow> metrics;
  TrainerState state;
  std::string metrics_path;
  std::string trajectories_path;
};

// Runs until the iteration cap or the compute budget is exhausted (a started
// iteration always completes and is charged). Writes metrics.csv and
// trajectories.jsonl under out_dir; partial metrics are flushed if an
// iteration aborts.
TrainResult train(const RunConfig& cfg, const std::string& out_dir);

// Method-specific evaluation: one rollout per task, plus one reference-free
// correction pass for PROMPT_ONLY failures, or first-verifier-passing
// selection among best_of_n candidates for BEST_OF_N. Cost is tracked
// separately from the training budget via eval_units.
double evaluate_policy(const PolicyParams& params, const RunConfig& cfg,
                       std::uint64_t eval_stream, UnitCounters* eval_units = nullptr);

}  // namespace ibpo
