// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <stdexcept>

#include "ibpo/objective.hpp"

using namespace ibpo;

namespace {

PolicyParams random_params(int vocab, const TaskInstance& task, Rng& rng, double scale = 1.0) {
  PolicyParams params = make_uniform_params(vocab);
  for (int pos = 0; pos <= task.chain_length(); ++pos) {
    for (Token prev = 0; prev < vocab; ++prev) {
      Eigen::VectorXd& row =
          params.mutable_row(context_index(task, PolicyMode::Base, prev, pos));
      for (int k = 0; k < vocab; ++k) row[k] = scale * (2.0 * rng.next_uniform() - 1.0);
    }
  }
  return params;
}

struct Instance {
  TaskInstance task;
  GroupBatch group;
  std::vector<std::optional<ComparisonOutcome>> comparisons;
  PolicyParams params;      // perturbed evaluation point
  PolicyParams old_params;  // behavior policy the group was sampled from
};

// Small randomized instance (V=8, L=2, G=4) sampled from old_params, shaped,
// normalized and evaluated at a perturbed point. Perturbations are resampled
// if any trajectory's ratio sits near a clip kink, where one-sided gradients
// make finite differences meaningless.
Instance make_instance(std::uint64_t seed, const ObjectiveConfig& cfg, bool with_masks) {
  Rng rng(seed);
  Instance inst;
  inst.task = make_task(static_cast<std::int64_t>(seed % 97), 8, 2);
  inst.old_params = random_params(8, inst.task, rng);

  inst.group.task_id = inst.task.seed;
  for (int i = 0; i < cfg.group_size; ++i) {
    inst.group.trajectories.push_back(sample_trajectory(
        inst.old_params, inst.task, PolicyMode::Base, nullptr, rng, 4));
  }

  CompareConfig cmp_cfg;
  cmp_cfg.variant = with_masks ? ShapingVariant::Mask : ShapingVariant::Base;
  inst.comparisons = compare_group(inst.task, inst.group, cmp_cfg,
                                   make_oracle_corrector(0.9), rng);
  Eigen::VectorXd shaped(inst.group.size());
  for (int i = 0; i < inst.group.size(); ++i) {
    const auto& c = inst.comparisons[static_cast<std::size_t>(i)];
    const double delta = c.has_value() ? shaping_delta(*c, cmp_cfg) : 0.0;
    shaped[i] = shaped_reward(
        inst.group.trajectories[static_cast<std::size_t>(i)].terminal_reward, delta,
        cfg.lambda);
  }
  inst.group.shaped_rewards = shaped;
  inst.group.advantages = group_advantages(shaped, cfg.std_floor);

  for (int attempt = 0; attempt < 64; ++attempt) {
    inst.params = inst.old_params;
    for (auto& [ctx, row] : inst.params.logits) {
      for (int k = 0; k < 8; ++k) row[k] += 0.05 * (2.0 * rng.next_uniform() - 1.0);
    }
    bool near_kink = false;
    for (int i = 0; i < inst.group.size(); ++i) {
      const Trajectory& t = inst.group.trajectories[static_cast<std::size_t>(i)];
      const auto lp_new = log_prob(inst.params, inst.task, PolicyMode::Base, nullptr, t.tokens);
      const auto lp_old =
          log_prob(inst.old_params, inst.task, PolicyMode::Base, nullptr, t.tokens);
      const double s = gspo_ratio(lp_new.per_token, lp_old.per_token);
      if (std::abs(s - (1.0 - cfg.epsilon)) < 1e-3 ||
          std::abs(s - (1.0 + cfg.epsilon)) < 1e-3) {
        near_kink = true;
      }
    }
    if (!near_kink) break;
  }
  return inst;
}

double fd_max_rel_error(const SparseGradient& analytic,
                        const std::function<double(const PolicyParams&)>& value_at,
                        const PolicyParams& params) {
  const double h = 1e-5;
  double worst = 0.0;
  for (const auto& [key, g] : analytic.entries) {
    PolicyParams plus = params;
    plus.mutable_row(key.first)[key.second] += h;
    PolicyParams minus = params;
    minus.mutable_row(key.first)[key.second] -= h;
    const double fd = (value_at(plus) - value_at(minus)) / (2.0 * h);
    const double denom = std::max({std::abs(g), std::abs(fd), 1e-5});
    worst = std::max(worst, std::abs(g - fd) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("shaped reward") {
  CHECK(shaped_reward(0, 0.5, 0.6) == doctest::Approx(0.3));
  CHECK(shaped_reward(1, 0.0, 0.6) == 1.0);
  CHECK(shaped_reward(0, 0.0, 0.6) == 0.0);
  CHECK_THROWS_AS(shaped_reward(0, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(shaped_reward(2, 0.0, 0.6), std::invalid_argument);
}

TEST_CASE("group advantages") {
  Eigen::VectorXd r(4);
  r << 1, 0, 0, 0;
  const Eigen::VectorXd a = group_advantages(r);
  CHECK(a[0] == doctest::Approx(1.7320507).epsilon(1e-6));
  CHECK(a[1] == doctest::Approx(-0.5773502).epsilon(1e-6));
  CHECK(a[2] == doctest::Approx(-0.5773502).epsilon(1e-6));
  CHECK(a[3] == doctest::Approx(-0.5773502).epsilon(1e-6));

  Eigen::VectorXd flat(3);
  flat << 1, 1, 1;
  CHECK(group_advantages(flat).cwiseAbs().maxCoeff() == 0.0);

  // affine invariance (sigma >> floor)
  Rng rng(3);
  Eigen::VectorXd x(6);
  for (int i = 0; i < 6; ++i) x[i] = rng.next_uniform();
  const Eigen::VectorXd base = group_advantages(x);
  const Eigen::VectorXd scaled = group_advantages((3.0 * x.array() + 2.0).matrix());
  CHECK((base - scaled).cwiseAbs().maxCoeff() < 1e-6);

  // centering
  CHECK(std::abs(base.sum()) <= 1e-9);

  // argmax invariance under strictly increasing affine maps
  int argmax_base = 0, argmax_scaled = 0;
  base.maxCoeff(&argmax_base);
  scaled.maxCoeff(&argmax_scaled);
  CHECK(argmax_base == argmax_scaled);
}

TEST_CASE("gspo ratio") {
  const std::vector<double> old_lp = {-1.0, -2.0, -0.5};
  CHECK(gspo_ratio(old_lp, old_lp) == 1.0);

  std::vector<double> doubled = old_lp;
  for (double& v : doubled) v += std::log(2.0);
  CHECK(gspo_ratio(doubled, old_lp) == doctest::Approx(2.0).epsilon(1e-12));

  const std::vector<double> two_old = {-1.0, -1.0};
  const std::vector<double> two_new = {-1.0 + std::log(4.0), -1.0};
  CHECK(gspo_ratio(two_new, two_old) == doctest::Approx(2.0).epsilon(1e-12));

  CHECK_THROWS_AS(gspo_ratio(two_new, old_lp), std::invalid_argument);
  CHECK_THROWS_AS(gspo_ratio(std::vector<double>{}, std::vector<double>{}),
                  std::invalid_argument);
}

TEST_CASE("masked ratio") {
  const std::vector<double> old_lp = {-1.0, -2.0, -0.5, -0.1};
  std::vector<double> new_lp = {-0.4, -2.5, -0.8, -0.05};
  TokenMask full;
  full.bits = {1, 1, 1, 1};
  CHECK(std::abs(masked_ratio(new_lp, old_lp, full) - gspo_ratio(new_lp, old_lp)) <= 1e-12);

  TokenMask empty;
  empty.bits = {0, 0, 0, 0};
  CHECK(masked_ratio(new_lp, old_lp, empty) == 1.0);

  TokenMask first_only;
  first_only.bits = {1, 0};
  const std::vector<double> o2 = {0.0, 0.0};
  const std::vector<double> n2 = {std::log(3.0), std::log(100.0)};
  CHECK(masked_ratio(n2, o2, first_only) == doctest::Approx(3.0).epsilon(1e-12));

  TokenMask wrong;
  wrong.bits = {1, 1, 1};
  CHECK_THROWS_AS(masked_ratio(new_lp, old_lp, wrong), std::invalid_argument);
}

TEST_CASE("clipped surrogate") {
  CHECK(clipped_surrogate(1.0, 2.0, 0.2) == 2.0);
  CHECK(clipped_surrogate(1.5, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  CHECK_THROWS_AS(clipped_surrogate(1.0, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("main objective at the behavior policy") {
  ObjectiveConfig cfg;
  cfg.variant = ObjectiveVariant::Gspo;
  cfg.group_size = 4;
  cfg.lambda = 0.0;
  Instance inst = make_instance(11, cfg, false);
  // at params == old_params every ratio is 1 and advantages are centered
  const ObjectiveResult res = main_objective(inst.group, inst.comparisons, inst.task,
                                             inst.old_params, inst.old_params, cfg);
  CHECK(std::abs(res.value) <= 1e-9);
}

TEST_CASE("main objective gradient matches finite differences") {
  ObjectiveConfig cfg;
  cfg.variant = ObjectiveVariant::IbpoBase;
  cfg.group_size = 4;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Instance inst = make_instance(seed, cfg, false);
    const ObjectiveResult res = main_objective(inst.group, inst.comparisons, inst.task,
                                               inst.params, inst.old_params, cfg);
    const auto value_at = [&](const PolicyParams& p) {
      return main_objective(inst.group, inst.comparisons, inst.task, p, inst.old_params,
                            cfg)
          .value;
    };
    worst = std::max(worst, fd_max_rel_error(res.grad, value_at, inst.params));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("masked objective reduces to the base objective under all-one masks") {
  ObjectiveConfig cfg;
  cfg.variant = ObjectiveVariant::IbpoMask;
  cfg.group_size = 4;
  Instance inst = make_instance(33, cfg, true);
  // force all-one masks on every compared trajectory
  for (auto& c : inst.comparisons) {
    if (c.has_value()) {
      TokenMask ones;
      ones.bits.assign(static_cast<std::size_t>(
                           inst.group.trajectories.front().length()), 1);
      c->mask = ones;
    }
  }
  const ObjectiveResult masked = main_objective(inst.group, inst.comparisons, inst.task,
                                                inst.params, inst.old_params, cfg);
  ObjectiveConfig base_cfg = cfg;
  base_cfg.variant = ObjectiveVariant::IbpoBase;
  const ObjectiveResult base = main_objective(inst.group, inst.comparisons, inst.task,
                                              inst.params, inst.old_params, base_cfg);
  CHECK(std::abs(masked.value - base.value) <= 1e-10);
}

TEST_CASE("masked objective gradient matches finite differences") {
  ObjectiveConfig cfg;
  cfg.variant = ObjectiveVariant::IbpoMask;
  cfg.group_size = 4;
  double worst = 0.0;
  int masked_instances = 0;
  for (std::uint64_t seed = 40; seed < 60; ++seed) {
    const Instance inst = make_instance(seed, cfg, true);
    for (const auto& c : inst.comparisons) {
      if (c.has_value() && c->mask.has_value()) ++masked_instances;
    }
    const ObjectiveResult res = main_objective(inst.group, inst.comparisons, inst.task,
                                               inst.params, inst.old_params, cfg);
    const auto value_at = [&](const PolicyParams& p) {
      return main_objective(inst.group, inst.comparisons, inst.task, p, inst.old_params,
                            cfg)
          .value;
    };
    worst = std::max(worst, fd_max_rel_error(res.grad, value_at, inst.params));
  }
  CHECK(worst < 1e-4);
  CHECK(masked_instances > 0);
}

TEST_CASE("correction objective") {
  ObjectiveConfig cfg;
  cfg.group_size = 4;
  cfg.correction_group_size = 4;
  Rng rng(71);
  const TaskInstance task = make_task(5, 8, 2);
  PolicyParams old_params = random_params(8, task, rng, 0.5);

  CorrectionGroup cg;
  cg.context.task = task;
  cg.context.target = sample_trajectory(old_params, task, PolicyMode::Base, nullptr, rng, 4);
  for (int l = 0; l < 4; ++l) {
    cg.outputs.push_back(sample_trajectory(old_params, task, PolicyMode::Correction,
                                           &cg.context, rng, 4));
  }

  // G_c = 1: degenerate normalization, zero advantages, zero objective
  CorrectionGroup solo = cg;
  solo.outputs.resize(1);
  std::vector<CorrectionGroup> groups = {solo};
  const ObjectiveResult degen =
      correction_objective(groups, old_params, old_params, cfg);
  CHECK(degen.value == 0.0);
  CHECK(degen.grad.empty());

  // all-correct group: advantages all zero
  CorrectionGroup all_correct = cg;
  for (Trajectory& t : all_correct.outputs) t.terminal_reward = 1;
  groups = {all_correct};
  const ObjectiveResult flat = correction_objective(groups, old_params, old_params, cfg);
  CHECK(std::abs(flat.value) <= 1e-12);

  // empty groups are skipped
  groups = {CorrectionGroup{}};
  const ObjectiveResult none = correction_objective(groups, old_params, old_params, cfg);
  CHECK(none.value == 0.0);

  // finite-difference check on a perturbed evaluation point with mixed rewards
  bool mixed = false;
  for (const Trajectory& t : cg.outputs) mixed = mixed || t.terminal_reward !=
                                                              cg.outputs[0].terminal_reward;
  if (!mixed) cg.outputs[0].terminal_reward = 1 - cg.outputs[0].terminal_reward;
  PolicyParams perturbed = old_params;
  for (auto& [ctx, row] : perturbed.logits) {
    for (int k = 0; k < 8; ++k) row[k] += 0.04 * (2.0 * rng.next_uniform() - 1.0);
  }
  groups = {cg};
  const ObjectiveResult res = correction_objective(groups, perturbed, old_params, cfg);
  const auto value_at = [&](const PolicyParams& p) {
    return correction_objective(groups, p, old_params, cfg).value;
  };
  CHECK(fd_max_rel_error(res.grad, value_at, perturbed) < 1e-4);
}

TEST_CASE("total objective combines linearly") {
  ObjectiveResult main;
  main.value = 0.25;
  main.grad.add(1, 0, 0.5);
  ObjectiveResult corr;
  corr.value = 0.5;
  corr.grad.add(1, 0, 0.25);
  corr.grad.add(2, 1, -1.0);

  const ObjectiveResult zero_eta = total_objective(main, corr, 0.0);
  CHECK(zero_eta.value == main.value);

  const ObjectiveResult combined = total_objective(main, corr, 1.0);
  CHECK(combined.value == doctest::Approx(0.75));
  CHECK(combined.grad.entries.at({1, 0}) == 0.75);
  CHECK(combined.grad.entries.at({2, 1}) == -1.0);
  CHECK_THROWS_AS(total_objective(main, corr, -0.5), std::invalid_argument);
}

TEST_CASE("shaping monotonicity: raising one delta never lowers that row's rank") {
  Rng rng(91);
  for (int rep = 0; rep < 200; ++rep) {
    const int g = 4 + rng.next_int(5);
    Eigen::VectorXd rewards(g);
    std::vector<double> deltas(static_cast<std::size_t>(g), 0.0);
    for (int i = 0; i < g; ++i) {
      const int r = rng.next_int(2);
      deltas[static_cast<std::size_t>(i)] = r == 0 ? 0.5 * rng.next_uniform() : 0.0;
      rewards[i] = shaped_reward(r, deltas[static_cast<std::size_t>(i)], 0.6);
    }
    int target = rng.next_int(g);
    if (rewards[target] >= 1.0) continue;  // need an incorrect row

    const auto rank_of = [g](const Eigen::VectorXd& a, int idx) {
      int rank = 0;
      for (int j = 0; j < g; ++j) rank += a[j] > a[idx];
      return rank;  // 0 = highest
    };
    const Eigen::VectorXd before = group_advantages(rewards);
    Eigen::VectorXd bumped = rewards;
    const double extra = (0.5 - deltas[static_cast<std::size_t>(target)]) * rng.next_uniform();
    bumped[target] = shaped_reward(0, deltas[static_cast<std::size_t>(target)] + extra, 0.6);
    const Eigen::VectorXd after = group_advantages(bumped);
    CHECK(rank_of(after, target) <= rank_of(before, target));
  }
}

TEST_CASE("objective config validation") {
  ObjectiveConfig cfg;
  validate_objective_config(cfg, 0.5);
  ObjectiveConfig bad = cfg;
  bad.lambda = 2.5;
  CHECK_THROWS_AS(validate_objective_config(bad, 0.5), std::invalid_argument);
  bad = cfg;
  bad.epsilon = 1.0;
  CHECK_THROWS_AS(validate_objective_config(bad, 0.5), std::invalid_argument);
  bad = cfg;
  bad.group_size = 0;
  CHECK_THROWS_AS(validate_objective_config(bad, 0.5), std::invalid_argument);
}
