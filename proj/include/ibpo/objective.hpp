// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ibpo/counterfactual.hpp"
#include "ibpo/policy.hpp"
#include "ibpo/types.hpp"

namespace ibpo {

enum class ObjectiveVariant : std::uint8_t { Gspo = 0, IbpoBase = 1, IbpoRatio = 2, IbpoMask = 3 };

struct ObjectiveConfig {
  double lambda = 0.6;    // shaping weight
  double epsilon = 0.2;   // clip width
  double eta = 1.0;       // auxiliary correction weight
  ObjectiveVariant variant = ObjectiveVariant::IbpoBase;
  int group_size = 8;
  int correction_group_size = 4;
  double std_floor = 1e-8;
};

// Validates the config invariants; rho is the shaping scale the lambda bound
// is checked against (lambda * rho < 1).
void validate_objective_config(const ObjectiveConfig& cfg, double rho);

// r' = r + lambda * delta. Equals r exactly for correct trajectories (delta
// is forced to 0 upstream). Rejects lambda * delta >= 1.
double shaped_reward(int r, double delta, double lambda);

// Within-group normalization (r'_i - mean) / (population std + floor).
// All-equal rewards give all-zero advantages via the floor.
Eigen::VectorXd group_advantages(const Eigen::VectorXd& rewards, double std_floor = 1e-8);

// Length-normalized sequence ratio exp(mean(new - old)), computed in log
// space. Lengths must match and be >= 1.
double gspo_ratio(std::span<const double> new_logps, std::span<const double> old_logps);

// Sequence ratio restricted to masked tokens:
// exp( sum_t m_t (new_t - old_t) / max(1, sum_t m_t) ).
double masked_ratio(std::span<const double> new_logps, std::span<const double> old_logps,
                    const TokenMask& mask);

// min(s * A, clip(s, 1-eps, 1+eps) * A).
double clipped_surrogate(double s, double advantage, double epsilon);

struct ObjectiveResult {
  double value = 0.0;
  SparseGradient grad;
};

// Clipped sequence-level surrogate (1/G) sum_i min(s_i A_i, clip(s_i) A_i)
// over one group, with analytic gradients through the unclipped branch
// wherever the min selects it (ties go to the unclipped branch). Under
// IbpoMask, trajectories whose comparison produced a mask use the masked
// ratio; all others use the full-sequence ratio. group.advantages must be
// filled.
ObjectiveResult main_objective(const GroupBatch& group,
                               const std::vector<std::optional<ComparisonOutcome>>& comparisons,
                               const TaskInstance& task, const PolicyParams& params,
                               const PolicyParams& old_params, const ObjectiveConfig& cfg);

// G_c correction-mode rollouts sharing one correction input. Rewards are
// verified against the original task; normalization statistics never mix
// across groups.
struct CorrectionGroup {
  CorrectionContext context;
  std::vector<Trajectory> outputs;
};

// Mean over correction groups of the per-group clipped surrogate, with
// advantages normalized within each group only. Empty groups are skipped.
ObjectiveResult correction_objective(std::span<const CorrectionGroup> groups,
                                     const PolicyParams& params,
                                     const PolicyParams& old_params,
                                     const ObjectiveConfig& cfg);

// J_total = J_main + eta * J_corr, gradients combined entrywise.
ObjectiveResult total_objective(const ObjectiveResult& main, const ObjectiveResult& corr,
                                double eta);

}  // namespace ibpo
