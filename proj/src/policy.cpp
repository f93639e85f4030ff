// SPDX-License-Identifier: Apache-2.0
#include "ibpo/policy.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ibpo {

namespace {

Eigen::VectorXd log_softmax(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return z.array() - lse;
}

void log_softmax_into(const Eigen::VectorXd& z, Eigen::VectorXd& out) {
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  out = z.array() - lse;
}

// Operation slot for a generation position: the chain op for positions
// 0..L-1, a dedicated answer slot for position L.
int op_slot(const TaskInstance& task, int position) {
  if (position < task.chain_length()) {
    return static_cast<int>(task.ops[static_cast<std::size_t>(position)]);
  }
  return 3;
}

Token correction_token_at(const CorrectionContext& ctx, int position) {
  if (position < ctx.target.length()) {
    return ctx.target.tokens[static_cast<std::size_t>(position)];
  }
  return kNoToken;
}

}  // namespace

Eigen::VectorXd PolicyParams::row(std::int64_t ctx) const {
  auto it = logits.find(ctx);
  if (it != logits.end()) return it->second;
  return Eigen::VectorXd::Zero(vocab);
}

const Eigen::VectorXd& PolicyParams::row_ref(std::int64_t ctx) const {
  auto it = logits.find(ctx);
  if (it != logits.end()) return it->second;
  static thread_local Eigen::VectorXd zero;
  if (zero.size() != vocab) zero = Eigen::VectorXd::Zero(vocab);
  return zero;
}

Eigen::VectorXd& PolicyParams::mutable_row(std::int64_t ctx) {
  auto it = logits.find(ctx);
  if (it == logits.end()) {
    it = logits.emplace(ctx, Eigen::VectorXd::Zero(vocab)).first;
  }
  return it->second;
}

PolicyParams make_uniform_params(int vocab) {
  if (vocab < 2) throw std::invalid_argument("make_uniform_params: vocab must be >= 2");
  PolicyParams p;
  p.vocab = vocab;
  return p;
}

std::int64_t context_index(const TaskInstance& task, PolicyMode mode, Token prev,
                           int position, Token correction_target) {
  if (position < 0) throw std::invalid_argument("context_index: negative position");
  const std::int64_t v = task.modulus;
  // Fold the repaired token only in Correction mode; kNoToken (past the
  // target's end) maps to the sentinel value v.
  std::int64_t fold = 0;
  if (mode == PolicyMode::Correction) {
    fold = correction_target == kNoToken ? v : static_cast<std::int64_t>(correction_target);
  }
  const std::int64_t base = static_cast<std::int64_t>(op_slot(task, position)) * v + prev;
  return (base * 2 + static_cast<std::int64_t>(mode)) * (v + 1) + fold;
}

void SparseGradient::add(std::int64_t ctx, Token tok, double v) {
  entries[{ctx, tok}] += v;
}

void SparseGradient::accumulate(const SparseGradient& other, double s) {
  for (const auto& [key, value] : other.entries) entries[key] += s * value;
}

void SparseGradient::scale(double s) {
  for (auto& [key, value] : entries) value *= s;
}

double SparseGradient::norm() const {
  double sq = 0.0;
  for (const auto& [key, value] : entries) sq += value * value;
  return std::sqrt(sq);
}

bool SparseGradient::all_finite() const {
  for (const auto& [key, value] : entries) {
    if (!std::isfinite(value)) return false;
  }
  return true;
}

Trajectory sample_trajectory(const PolicyParams& params, const TaskInstance& task,
                             PolicyMode mode, const CorrectionContext* corr_ctx,
                             Rng& rng, int max_len) {
  const int steps = task.chain_length() + 1;
  if (max_len < steps) {
    throw std::invalid_argument("sample_trajectory: max_len below chain_length + 1");
  }
  if ((mode == PolicyMode::Correction) != (corr_ctx != nullptr)) {
    throw std::invalid_argument("sample_trajectory: corr_ctx must accompany Correction mode");
  }
  Trajectory t;
  t.tokens.reserve(static_cast<std::size_t>(steps));
  t.logprobs_old.reserve(static_cast<std::size_t>(steps));
  Token prev = static_cast<Token>(task.start_value);
  Eigen::VectorXd logp, probs;
  for (int pos = 0; pos < steps; ++pos) {
    const Token fold = corr_ctx ? correction_token_at(*corr_ctx, pos) : kNoToken;
    const std::int64_t ctx = context_index(task, mode, prev, pos, fold);
    log_softmax_into(params.row_ref(ctx), logp);
    probs = logp.array().exp();
    // Inverse-CDF draw; the final index absorbs any rounding slack.
    const double u = rng.next_uniform();
    double acc = 0.0;
    Token tok = static_cast<Token>(params.vocab - 1);
    for (int k = 0; k < params.vocab; ++k) {
      acc += probs[k];
      if (u < acc) {
        tok = static_cast<Token>(k);
        break;
      }
    }
    t.tokens.push_back(tok);
    t.logprobs_old.push_back(logp[tok]);
    prev = tok;
  }
  t.terminal_reward = verify(task, t);
  return t;
}

LogProbResult log_prob(const PolicyParams& params, const TaskInstance& task,
                       PolicyMode mode, const CorrectionContext* corr_ctx,
                       const std::vector<Token>& tokens) {
  if ((mode == PolicyMode::Correction) != (corr_ctx != nullptr)) {
    throw std::invalid_argument("log_prob: corr_ctx must accompany Correction mode");
  }
  LogProbResult res;
  res.per_token.reserve(tokens.size());
  Token prev = static_cast<Token>(task.start_value);
  Eigen::VectorXd logp;
  for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
    const Token fold = corr_ctx ? correction_token_at(*corr_ctx, static_cast<int>(pos)) : kNoToken;
    const std::int64_t ctx = context_index(task, mode, prev, static_cast<int>(pos), fold);
    log_softmax_into(params.row_ref(ctx), logp);
    const double lp = logp[tokens[pos]];
    res.per_token.push_back(lp);
    res.total += lp;
    prev = tokens[pos];
  }
  return res;
}

SparseGradient grad_log_prob(const PolicyParams& params, const TaskInstance& task,
                             PolicyMode mode, const CorrectionContext* corr_ctx,
                             const std::vector<Token>& tokens) {
  return weighted_grad_log_prob(params, task, mode, corr_ctx, tokens,
                                std::vector<double>(tokens.size(), 1.0));
}

SparseGradient weighted_grad_log_prob(const PolicyParams& params,
                                      const TaskInstance& task, PolicyMode mode,
                                      const CorrectionContext* corr_ctx,
                                      const std::vector<Token>& tokens,
                                      const std::vector<double>& step_weights) {
  if ((mode == PolicyMode::Correction) != (corr_ctx != nullptr)) {
    throw std::invalid_argument("weighted_grad_log_prob: corr_ctx must accompany Correction mode");
  }
  if (step_weights.size() != tokens.size()) {
    throw std::invalid_argument("weighted_grad_log_prob: weight/token length mismatch");
  }
  SparseGradient grad;
  Token prev = static_cast<Token>(task.start_value);
  Eigen::VectorXd logp, probs;
  for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
    const double w = step_weights[pos];
    const Token fold = corr_ctx ? correction_token_at(*corr_ctx, static_cast<int>(pos)) : kNoToken;
    const std::int64_t ctx = context_index(task, mode, prev, static_cast<int>(pos), fold);
    prev = tokens[pos];
    if (w == 0.0) continue;
    log_softmax_into(params.row_ref(ctx), logp);
    probs = logp.array().exp();
    for (int k = 0; k < params.vocab; ++k) {
      const double indicator = (k == tokens[pos]) ? 1.0 : 0.0;
      grad.add(ctx, static_cast<Token>(k), w * (indicator - probs[k]));
    }
  }
  return grad;
}

void apply_update(PolicyParams& params, const SparseGradient& grad, double lr) {
  if (lr <= 0.0) throw std::invalid_argument("apply_update: lr must be positive");
  if (!grad.all_finite()) throw std::invalid_argument("apply_update: non-finite gradient");
  for (const auto& [key, value] : grad.entries) {
    params.mutable_row(key.first)[key.second] += lr * value;
  }
}

void save_params(const PolicyParams& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_params: cannot open " + path);
  out << "vocab " << params.vocab << "\n";
  char buf[64];
  for (const auto& [ctx, row] : params.logits) {
    out << ctx;
    for (int k = 0; k < params.vocab; ++k) {
      std::snprintf(buf, sizeof(buf), " %.17g", row[k]);
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("save_params: write failed for " + path);
}

PolicyParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_params: cannot open " + path);
  std::string tag;
  PolicyParams params;
  if (!(in >> tag >> params.vocab) || tag != "vocab" || params.vocab < 2) {
    throw std::runtime_error("load_params: bad header in " + path);
  }
  std::int64_t ctx = 0;
  while (in >> ctx) {
    Eigen::VectorXd row(params.vocab);
    for (int k = 0; k < params.vocab; ++k) {
      if (!(in >> row[k])) throw std::runtime_error("load_params: truncated row in " + path);
    }
    params.logits.emplace(ctx, std::move(row));
  }
  return params;
}

}  // namespace ibpo
