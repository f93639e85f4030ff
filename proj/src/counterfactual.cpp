// SPDX-License-Identifier: Apache-2.0
#include "ibpo/counterfactual.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ibpo {

Alignment edit_distance(std::span<const Token> a, std::span<const Token> b) {
  const int n = static_cast<int>(a.size());
  const int m = static_cast<int>(b.size());
  std::vector<std::vector<int>> d(static_cast<std::size_t>(n + 1),
                                  std::vector<int>(static_cast<std::size_t>(m + 1), 0));
  for (int i = 0; i <= n; ++i) d[i][0] = i;
  for (int j = 0; j <= m; ++j) d[0][j] = j;
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) {
      const int sub = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      d[i][j] = std::min({sub, d[i - 1][j] + 1, d[i][j - 1] + 1});
    }
  }

  Alignment out;
  out.distance = d[n][m];
  out.normalized = (n == 0 && m == 0) ? 0.0
                                      : static_cast<double>(d[n][m]) / std::max(n, m);

  // Traceback with fixed preference: match > substitute > delete > insert.
  int i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && a[i - 1] == b[j - 1] && d[i][j] == d[i - 1][j - 1]) {
      out.matched_pairs.emplace_back(i - 1, j - 1);
      --i;
      --j;
    } else if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + 1) {
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      --i;
    } else {
      --j;
    }
  }
  std::reverse(out.matched_pairs.begin(), out.matched_pairs.end());
  return out;
}

std::vector<int> unchanged_set(std::span<const Token> y, std::span<const Token> yhat) {
  const Alignment al = edit_distance(y, yhat);
  std::vector<int> positions;
  positions.reserve(al.matched_pairs.size());
  for (const auto& [py, phat] : al.matched_pairs) positions.push_back(py);
  return positions;
}

bool detect_rewrite(std::span<const Token> y, std::span<const Token> yhat,
                    std::span<const Token> y_ref, double alpha) {
  if (alpha <= 0.0 || alpha > 1.0) {
    throw std::invalid_argument("detect_rewrite: alpha must be in (0,1]");
  }
  const double d_target = edit_distance(y, yhat).normalized;
  if (d_target <= alpha) return false;
  if (y_ref.empty()) return true;  // no reference: distance criterion alone
  return d_target > edit_distance(yhat, y_ref).normalized;
}

double adaptive_threshold(std::span<const double> distances) {
  if (distances.empty()) {
    throw std::invalid_argument("adaptive_threshold: empty distance batch");
  }
  double mean = 0.0;
  for (double d : distances) mean += d;
  mean /= static_cast<double>(distances.size());
  double var = 0.0;
  for (double d : distances) var += (d - mean) * (d - mean);
  var /= static_cast<double>(distances.size());
  return std::clamp(mean + 2.0 * std::sqrt(var), 1e-6, 1.0);
}

namespace {

void check_binary(int r, const char* what) {
  if (r != 0 && r != 1) throw std::invalid_argument(std::string(what) + " must be 0 or 1");
}

}  // namespace

double shaping_base(int r, int r_hat, bool rewrite, double rho) {
  check_binary(r, "shaping_base: r");
  check_binary(r_hat, "shaping_base: r_hat");
  if (rho <= 0.0 || rho > 1.0) throw std::invalid_argument("shaping_base: rho must be in (0,1]");
  return (r == 0 && r_hat == 1 && !rewrite) ? rho : 0.0;
}

double shaping_ratio(int r, int r_hat, bool rewrite, int unchanged_count, int target_len) {
  check_binary(r, "shaping_ratio: r");
  check_binary(r_hat, "shaping_ratio: r_hat");
  if (target_len < 1) throw std::invalid_argument("shaping_ratio: target_len must be >= 1");
  if (unchanged_count < 0 || unchanged_count > target_len) {
    throw std::invalid_argument("shaping_ratio: unchanged_count out of range");
  }
  if (!(r == 0 && r_hat == 1 && !rewrite)) return 0.0;
  return static_cast<double>(unchanged_count) / static_cast<double>(target_len);
}

TokenMask token_mask(std::span<const Token> y, std::span<const Token> yhat) {
  TokenMask mask;
  mask.bits.assign(y.size(), 1);
  for (int pos : unchanged_set(y, yhat)) mask.bits[static_cast<std::size_t>(pos)] = 0;
  return mask;
}

std::optional<int> sample_reference(const GroupBatch& group, int target_index, Rng& rng) {
  if (target_index < 0 || target_index >= group.size()) {
    throw std::invalid_argument("sample_reference: target index out of range");
  }
  if (group.trajectories[static_cast<std::size_t>(target_index)].terminal_reward != 0) {
    throw std::invalid_argument("sample_reference: target must be incorrect");
  }
  std::vector<int> pool;
  for (int j = 0; j < group.size(); ++j) {
    if (group.trajectories[static_cast<std::size_t>(j)].terminal_reward == 1) pool.push_back(j);
  }
  if (pool.empty()) {
    for (int j = 0; j < group.size(); ++j) {
      if (j != target_index) pool.push_back(j);
    }
  }
  if (pool.empty()) return std::nullopt;
  return pool[static_cast<std::size_t>(rng.next_int(static_cast<int>(pool.size())))];
}

namespace {

ComparisonOutcome finalize_outcome(const TaskInstance& task, const GroupBatch& group,
                                   int target_index, std::optional<int> ref_idx,
                                   Trajectory corrected, double alpha,
                                   const CompareConfig& cfg) {
  const Trajectory& target = group.trajectories[static_cast<std::size_t>(target_index)];
  ComparisonOutcome out;
  out.reference_index = ref_idx;
  out.corrected = std::move(corrected);
  // Never trust the corrector's reward: re-run the rule-based verifier.
  out.corrected_reward = verify(task, out.corrected);
  std::span<const Token> ref_tokens;
  if (ref_idx.has_value()) {
    ref_tokens = group.trajectories[static_cast<std::size_t>(*ref_idx)].tokens;
  }
  out.rewrite = detect_rewrite(target.tokens, out.corrected.tokens, ref_tokens, alpha);

  const int r = target.terminal_reward;
  if (cfg.variant == ShapingVariant::Ratio) {
    const int unchanged = static_cast<int>(unchanged_set(target.tokens, out.corrected.tokens).size());
    out.s = shaping_ratio(r, out.corrected_reward, out.rewrite, unchanged, target.length());
  } else {
    out.s = shaping_base(r, out.corrected_reward, out.rewrite, cfg.rho) / cfg.rho;
  }
  if (cfg.variant == ShapingVariant::Mask && r == 0 && out.corrected_reward == 1 && !out.rewrite) {
    out.mask = token_mask(target.tokens, out.corrected.tokens);
  }
  return out;
}

ComparisonOutcome short_circuit_correct(const Trajectory& target) {
  ComparisonOutcome out;
  out.s = 0.0;
  out.rewrite = false;
  out.corrected = target;
  out.corrected_reward = 1;
  return out;
}

}  // namespace

ComparisonOutcome compare(const TaskInstance& task, const GroupBatch& group,
                          int target_index, const CompareConfig& cfg,
                          const CorrectorFn& corrector, Rng& rng, bool allow_reference) {
  if (target_index < 0 || target_index >= group.size()) {
    throw std::invalid_argument("compare: target index out of range");
  }
  const Trajectory& target = group.trajectories[static_cast<std::size_t>(target_index)];
  if (target.terminal_reward == 1) return short_circuit_correct(target);

  std::optional<int> ref_idx;
  if (allow_reference) ref_idx = sample_reference(group, target_index, rng);
  const Trajectory* ref =
      ref_idx ? &group.trajectories[static_cast<std::size_t>(*ref_idx)] : nullptr;
  Trajectory corrected = corrector(task, target, ref, rng);
  return finalize_outcome(task, group, target_index, ref_idx, std::move(corrected),
                          cfg.alpha, cfg);
}

std::vector<std::optional<ComparisonOutcome>> compare_group(
    const TaskInstance& task, const GroupBatch& group, const CompareConfig& cfg,
    const CorrectorFn& corrector, Rng& rng, bool allow_reference) {
  std::vector<std::optional<ComparisonOutcome>> outcomes(
      static_cast<std::size_t>(group.size()));

  struct Pending {
    int index;
    std::optional<int> ref_idx;
    Trajectory corrected;
    double distance;
  };
  std::vector<Pending> pending;
  for (int i = 0; i < group.size(); ++i) {
    const Trajectory& target = group.trajectories[static_cast<std::size_t>(i)];
    if (target.terminal_reward == 1) continue;
    std::optional<int> ref_idx;
    if (allow_reference) ref_idx = sample_reference(group, i, rng);
    const Trajectory* ref =
        ref_idx ? &group.trajectories[static_cast<std::size_t>(*ref_idx)] : nullptr;
    Trajectory corrected = corrector(task, target, ref, rng);
    const double dist = edit_distance(target.tokens, corrected.tokens).normalized;
    pending.push_back({i, ref_idx, std::move(corrected), dist});
  }

  double alpha = cfg.alpha;
  if (cfg.adaptive_alpha && !pending.empty()) {
    std::vector<double> distances;
    distances.reserve(pending.size());
    for (const Pending& p : pending) distances.push_back(p.distance);
    alpha = adaptive_threshold(distances);
  }
  for (Pending& p : pending) {
    outcomes[static_cast<std::size_t>(p.index)] = finalize_outcome(
        task, group, p.index, p.ref_idx, std::move(p.corrected), alpha, cfg);
  }
  return outcomes;
}

double shaping_delta(const ComparisonOutcome& outcome, const CompareConfig& cfg) {
  double delta = cfg.rho * outcome.s;
  if (cfg.kappa > 0.0 && outcome.rewrite) delta -= cfg.kappa;
  return delta;
}

CorrectorFn make_oracle_corrector(double repair_prob) {
  if (repair_prob < 0.0 || repair_prob > 1.0) {
    throw std::invalid_argument("make_oracle_corrector: repair_prob must be in [0,1]");
  }
  return [repair_prob](const TaskInstance& task, const Trajectory& target,
                       const Trajectory* /*reference*/, Rng& rng) {
    return oracle_correct(task, target, repair_prob, rng);
  };
}

}  // namespace ibpo
