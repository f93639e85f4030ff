// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ibpo/rng.hpp"
#include "ibpo/types.hpp"

namespace ibpo {

// Synthetic verifiable reasoning task: starting from start_value, apply a
// chain of modular operations; the answer is the final chain value. A single
// wrong intermediate token propagates (DBL amplifies), so correctness of the
// final answer hinges on local decisions made early.
enum class ChainOp : std::uint8_t { Inc1 = 0, Inc2 = 1, Dbl = 2 };

struct TaskInstance {
  std::int64_t seed = 0;  // identifier; tasks are deterministic in (seed,V,L)
  int start_value = 0;
  std::vector<ChainOp> ops;
  int modulus = 4;  // V; tokens live in [0, V)

  int chain_length() const { return static_cast<int>(ops.size()); }
};

// Correction input: the task, the trajectory being repaired, and (when
// available) a reference trajectory from the same group.
struct CorrectionContext {
  TaskInstance task;
  Trajectory target;
  std::optional<Trajectory> reference;
};

int apply_op(ChainOp op, int value, int modulus);

// Deterministic task for (seed, vocab, chain_length); ops drawn uniformly.
// Requires vocab >= 4 and chain_length >= 1.
TaskInstance make_task(std::int64_t seed, int vocab, int chain_length);

// Ground-truth token sequence (v_1, ..., v_L, v_L): the chain values followed
// by a repeat of the final value as the answer token.
std::vector<Token> oracle_solution(const TaskInstance& task);

// 1 iff the trajectory's final token equals the oracle answer. Only the final
// token is inspected; intermediate tokens may be wrong.
int verify(const TaskInstance& task, const Trajectory& t);

// Smallest position where t differs from the oracle solution; length mismatch
// beyond a common prefix diverges at the shorter length; nullopt if identical.
std::optional<int> first_divergence(const TaskInstance& task, const Trajectory& t);

// Oracle instantiation of the correction operator. With probability
// repair_prob the prefix before the first divergence is kept and the suffix
// is replaced by the oracle continuation (reward 1); otherwise one random
// token of a copy is perturbed and the result re-verified. Output logprobs
// are 0 placeholders: oracle corrections feed shaping only, never gradients.
Trajectory oracle_correct(const TaskInstance& task, const Trajectory& t,
                          double repair_prob, Rng& rng);

}  // namespace ibpo
