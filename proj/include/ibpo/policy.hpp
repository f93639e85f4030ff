// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ibpo/env_chain.hpp"
#include "ibpo/rng.hpp"
#include "ibpo/types.hpp"

namespace ibpo {

// Context-indexed softmax policy over the chain task. A context encodes the
// chain operation scheduled at the current position, the previous token
// (the task's start value at position 0) and the generation mode; CORRECTION
// mode additionally folds in the token of the trajectory being repaired at
// the same position, so the corrector can condition on what it is fixing.
// Rows absent from the table are implicitly all-zero logits (uniform).
enum class PolicyMode : std::uint8_t { Base = 0, Correction = 1 };

inline constexpr Token kNoToken = -1;

struct PolicyParams {
  int vocab = 0;
  std::map<std::int64_t, Eigen::VectorXd> logits;

  // Logit row for a context; zero vector when the row has not been touched.
  Eigen::VectorXd row(std::int64_t ctx) const;
  // Allocation-free variant of row() for hot loops.
  const Eigen::VectorXd& row_ref(std::int64_t ctx) const;
  Eigen::VectorXd& mutable_row(std::int64_t ctx);
};

PolicyParams make_uniform_params(int vocab);

// Injective, deterministic encoding of (op-at-position, prev, mode[, target
// token]). correction_target must be supplied in Correction mode: the target
// trajectory's token at this position, or kNoToken once past its end.
std::int64_t context_index(const TaskInstance& task, PolicyMode mode, Token prev,
                           int position, Token correction_target = kNoToken);

// Score-function gradient accumulated as a sparse (context, token) -> value
// table. std::map keeps iteration deterministic for reproducible norms,
// checkpoints and updates.
struct SparseGradient {
  std::map<std::pair<std::int64_t, Token>, double> entries;

  void add(std::int64_t ctx, Token tok, double v);
  // this += scale * other
  void accumulate(const SparseGradient& other, double scale = 1.0);
  void scale(double s);
  double norm() const;
  bool all_finite() const;
  bool empty() const { return entries.empty(); }
};

// Autoregressively samples chain_length + 1 tokens, recording per-token
// log-probabilities under `params` (the behavior policy) and the verifier's
// terminal reward. corr_ctx must be non-null exactly in Correction mode.
// Requires max_len >= chain_length + 1.
Trajectory sample_trajectory(const PolicyParams& params, const TaskInstance& task,
                             PolicyMode mode, const CorrectionContext* corr_ctx,
                             Rng& rng, int max_len);

struct LogProbResult {
  double total = 0.0;
  std::vector<double> per_token;
};

// log pi(tokens | task, mode) with numerically stable per-token logsumexp.
LogProbResult log_prob(const PolicyParams& params, const TaskInstance& task,
                       PolicyMode mode, const CorrectionContext* corr_ctx,
                       const std::vector<Token>& tokens);

// d/dtheta log pi(tokens): at every step, (c, y) += 1 - p(y|c) and
// (c, k) += -p(k|c) for k != y.
SparseGradient grad_log_prob(const PolicyParams& params, const TaskInstance& task,
                             PolicyMode mode, const CorrectionContext* corr_ctx,
                             const std::vector<Token>& tokens);

// Same accumulation with a per-step weight, for length-normalized or masked
// sequence ratios: sum_t w_t * grad log pi(y_t | c_t).
SparseGradient weighted_grad_log_prob(const PolicyParams& params,
                                      const TaskInstance& task, PolicyMode mode,
                                      const CorrectionContext* corr_ctx,
                                      const std::vector<Token>& tokens,
                                      const std::vector<double>& step_weights);

// Ascent step: logits[c][k] += lr * value. Rejects non-finite gradients.
void apply_update(PolicyParams& params, const SparseGradient& grad, double lr);

// Plain-text checkpoint ("vocab V" header, then one "ctx l_0 ... l_{V-1}"
// row per context, %.17g so values round-trip exactly).
void save_params(const PolicyParams& params, const std::string& path);
PolicyParams load_params(const std::string& path);

}  // namespace ibpo
