// SPDX-License-Identifier: Apache-2.0
#include "ibpo/objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ibpo {

void validate_objective_config(const ObjectiveConfig& cfg, double rho) {
  if (cfg.lambda < 0.0) throw std::invalid_argument("objective: lambda must be >= 0");
  if (cfg.lambda * rho >= 1.0) {
    throw std::invalid_argument("objective: lambda * rho must be < 1");
  }
  if (cfg.epsilon <= 0.0 || cfg.epsilon >= 1.0) {
    throw std::invalid_argument("objective: epsilon must be in (0,1)");
  }
  if (cfg.eta < 0.0) throw std::invalid_argument("objective: eta must be >= 0");
  if (cfg.group_size < 1) throw std::invalid_argument("objective: group_size must be >= 1");
  if (cfg.correction_group_size < 1) {
    throw std::invalid_argument("objective: correction_group_size must be >= 1");
  }
}

double shaped_reward(int r, double delta, double lambda) {
  if (r != 0 && r != 1) throw std::invalid_argument("shaped_reward: r must be 0 or 1");
  if (lambda * delta >= 1.0) {
    throw std::invalid_argument("shaped_reward: lambda * delta must be < 1");
  }
  return static_cast<double>(r) + lambda * delta;
}

Eigen::VectorXd group_advantages(const Eigen::VectorXd& rewards, double std_floor) {
  if (rewards.size() < 1) throw std::invalid_argument("group_advantages: empty group");
  const double mean = rewards.mean();
  const double var = (rewards.array() - mean).square().mean();  // population
  const double sigma = std::sqrt(var);
  return (rewards.array() - mean) / (sigma + std_floor);
}

double gspo_ratio(std::span<const double> new_logps, std::span<const double> old_logps) {
  if (new_logps.size() != old_logps.size()) {
    throw std::invalid_argument("gspo_ratio: length mismatch");
  }
  if (new_logps.empty()) throw std::invalid_argument("gspo_ratio: empty sequence");
  double sum = 0.0;
  for (std::size_t t = 0; t < new_logps.size(); ++t) sum += new_logps[t] - old_logps[t];
  return std::exp(sum / static_cast<double>(new_logps.size()));
}

double masked_ratio(std::span<const double> new_logps, std::span<const double> old_logps,
                    const TokenMask& mask) {
  if (new_logps.size() != old_logps.size() ||
      new_logps.size() != mask.bits.size()) {
    throw std::invalid_argument("masked_ratio: length mismatch");
  }
  double sum = 0.0;
  int count = 0;
  for (std::size_t t = 0; t < new_logps.size(); ++t) {
    if (mask.bits[t]) {
      sum += new_logps[t] - old_logps[t];
      ++count;
    }
  }
  return std::exp(sum / static_cast<double>(std::max(1, count)));
}

double clipped_surrogate(double s, double advantage, double epsilon) {
  if (epsilon <= 0.0 || epsilon >= 1.0) {
    throw std::invalid_argument("clipped_surrogate: epsilon must be in (0,1)");
  }
  const double clipped = std::clamp(s, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(s * advantage, clipped * advantage);
}

namespace {

// One trajectory's clipped-surrogate value plus its gradient contribution,
// shared by the main and correction objectives. weight scales the gradient
// (e.g. 1/G). Gradient flows only through the unclipped branch; ties select
// it, so the gradient at params == old_params is always live.
double surrogate_term(const TaskInstance& task, PolicyMode mode,
                      const CorrectionContext* corr_ctx, const Trajectory& traj,
                      const TokenMask* mask, double advantage,
                      const PolicyParams& params, const PolicyParams& old_params,
                      double epsilon, double weight, SparseGradient& grad_out) {
  const LogProbResult lp_new = log_prob(params, task, mode, corr_ctx, traj.tokens);
  const LogProbResult lp_old = log_prob(old_params, task, mode, corr_ctx, traj.tokens);

  const int len = traj.length();
  std::vector<double> weights;
  double s = 0.0;
  if (mask != nullptr) {
    s = masked_ratio(lp_new.per_token, lp_old.per_token, *mask);
    const double m_total = static_cast<double>(std::max(1, mask->popcount()));
    weights.resize(static_cast<std::size_t>(len));
    for (int t = 0; t < len; ++t) {
      weights[static_cast<std::size_t>(t)] =
          mask->bits[static_cast<std::size_t>(t)] ? 1.0 / m_total : 0.0;
    }
  } else {
    s = gspo_ratio(lp_new.per_token, lp_old.per_token);
    weights.assign(static_cast<std::size_t>(len), 1.0 / static_cast<double>(len));
  }

  const double unclipped = s * advantage;
  const double clipped = std::clamp(s, 1.0 - epsilon, 1.0 + epsilon) * advantage;
  if (unclipped <= clipped) {
    // d(s A)/dtheta = A * s * sum_t w_t grad log pi_t
    if (advantage != 0.0) {
      const SparseGradient g =
          weighted_grad_log_prob(params, task, mode, corr_ctx, traj.tokens, weights);
      grad_out.accumulate(g, weight * advantage * s);
    }
    return unclipped;
  }
  return clipped;
}

}  // namespace

ObjectiveResult main_objective(const GroupBatch& group,
                               const std::vector<std::optional<ComparisonOutcome>>& comparisons,
                               const TaskInstance& task, const PolicyParams& params,
                               const PolicyParams& old_params, const ObjectiveConfig& cfg) {
  const int g_size = group.size();
  if (g_size < 1) throw std::invalid_argument("main_objective: empty group");
  if (group.advantages.size() != g_size) {
    throw std::invalid_argument("main_objective: advantages not filled");
  }
  if (!comparisons.empty() && static_cast<int>(comparisons.size()) != g_size) {
    throw std::invalid_argument("main_objective: comparison/group size mismatch");
  }

  ObjectiveResult res;
  const double inv_g = 1.0 / static_cast<double>(g_size);
  for (int i = 0; i < g_size; ++i) {
    const Trajectory& traj = group.trajectories[static_cast<std::size_t>(i)];
    const TokenMask* mask = nullptr;
    if (cfg.variant == ObjectiveVariant::IbpoMask && !comparisons.empty()) {
      const auto& cmp = comparisons[static_cast<std::size_t>(i)];
      if (cmp.has_value() && cmp->mask.has_value()) mask = &*cmp->mask;
    }
    res.value += inv_g * surrogate_term(task, PolicyMode::Base, nullptr, traj, mask,
                                        group.advantages[i], params, old_params,
                                        cfg.epsilon, inv_g, res.grad);
  }
  return res;
}

ObjectiveResult correction_objective(std::span<const CorrectionGroup> groups,
                                     const PolicyParams& params,
                                     const PolicyParams& old_params,
                                     const ObjectiveConfig& cfg) {
  ObjectiveResult res;
  std::vector<const CorrectionGroup*> active;
  for (const CorrectionGroup& cg : groups) {
    if (!cg.outputs.empty()) active.push_back(&cg);
  }
  if (active.empty()) return res;

  const double inv_groups = 1.0 / static_cast<double>(active.size());
  for (const CorrectionGroup* cg : active) {
    const int gc = static_cast<int>(cg->outputs.size());
    Eigen::VectorXd rewards(gc);
    for (int l = 0; l < gc; ++l) {
      rewards[l] = static_cast<double>(cg->outputs[static_cast<std::size_t>(l)].terminal_reward);
    }
    const Eigen::VectorXd advantages = group_advantages(rewards, cfg.std_floor);
    const double inv_gc = 1.0 / static_cast<double>(gc);
    double group_value = 0.0;
    for (int l = 0; l < gc; ++l) {
      group_value += inv_gc * surrogate_term(
          cg->context.task, PolicyMode::Correction, &cg->context,
          cg->outputs[static_cast<std::size_t>(l)], nullptr, advantages[l], params,
          old_params, cfg.epsilon, inv_groups * inv_gc, res.grad);
    }
    res.value += inv_groups * group_value;
  }
  return res;
}

ObjectiveResult total_objective(const ObjectiveResult& main, const ObjectiveResult& corr,
                                double eta) {
  if (eta < 0.0) throw std::invalid_argument("total_objective: eta must be >= 0");
  ObjectiveResult res;
  res.value = main.value + eta * corr.value;
  res.grad = main.grad;
  res.grad.accumulate(corr.grad, eta);
  return res;
}

}  // namespace ibpo
