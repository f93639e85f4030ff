// SPDX-License-Identifier: Apache-2.0
#include "ibpo/env_chain.hpp"

#include <algorithm>
#include <stdexcept>

namespace ibpo {

int apply_op(ChainOp op, int value, int modulus) {
  switch (op) {
    case ChainOp::Inc1:
      return (value + 1) % modulus;
    case ChainOp::Inc2:
      return (value + 2) % modulus;
    case ChainOp::Dbl:
      return (value * 2) % modulus;
  }
  throw std::invalid_argument("apply_op: unknown op");
}

TaskInstance make_task(std::int64_t seed, int vocab, int chain_length) {
  if (vocab < 4) throw std::invalid_argument("make_task: vocab must be >= 4");
  if (chain_length < 1) throw std::invalid_argument("make_task: chain_length must be >= 1");
  Rng rng(Rng::mix(static_cast<std::uint64_t>(seed), 0x7A5C5u));
  TaskInstance task;
  task.seed = seed;
  task.modulus = vocab;
  task.start_value = rng.next_int(vocab);
  task.ops.reserve(static_cast<std::size_t>(chain_length));
  for (int i = 0; i < chain_length; ++i) {
    task.ops.push_back(static_cast<ChainOp>(rng.next_int(3)));
  }
  return task;
}

std::vector<Token> oracle_solution(const TaskInstance& task) {
  std::vector<Token> out;
  out.reserve(task.ops.size() + 1);
  int v = task.start_value;
  for (ChainOp op : task.ops) {
    v = apply_op(op, v, task.modulus);
    out.push_back(static_cast<Token>(v));
  }
  out.push_back(static_cast<Token>(v));  // answer token repeats v_L
  return out;
}

int verify(const TaskInstance& task, const Trajectory& t) {
  if (t.tokens.empty()) return 0;
  const std::vector<Token> oracle = oracle_solution(task);
  return t.tokens.back() == oracle.back() ? 1 : 0;
}

std::optional<int> first_divergence(const TaskInstance& task, const Trajectory& t) {
  const std::vector<Token> oracle = oracle_solution(task);
  const std::size_t common = std::min(t.tokens.size(), oracle.size());
  for (std::size_t i = 0; i < common; ++i) {
    if (t.tokens[i] != oracle[i]) return static_cast<int>(i);
  }
  if (t.tokens.size() != oracle.size()) return static_cast<int>(common);
  return std::nullopt;
}

Trajectory oracle_correct(const TaskInstance& task, const Trajectory& t,
                          double repair_prob, Rng& rng) {
  if (repair_prob < 0.0 || repair_prob > 1.0) {
    throw std::invalid_argument("oracle_correct: repair_prob must be in [0,1]");
  }
  const bool repair = rng.next_uniform() < repair_prob;
  Trajectory out;
  if (repair) {
    const std::optional<int> div = first_divergence(task, t);
    if (!div.has_value()) {
      out.tokens = t.tokens;  // already the oracle solution
    } else {
      const std::vector<Token> oracle = oracle_solution(task);
      out.tokens.assign(t.tokens.begin(), t.tokens.begin() + *div);
      out.tokens.insert(out.tokens.end(), oracle.begin() + *div, oracle.end());
    }
  } else {
    out.tokens = t.tokens;
    const int pos = rng.next_int(static_cast<int>(out.tokens.size()));
    const int shift = 1 + rng.next_int(task.modulus - 1);
    out.tokens[static_cast<std::size_t>(pos)] =
        static_cast<Token>((out.tokens[static_cast<std::size_t>(pos)] + shift) % task.modulus);
  }
  out.logprobs_old.assign(out.tokens.size(), 0.0);
  out.terminal_reward = verify(task, out);
  return out;
}

}  // namespace ibpo
