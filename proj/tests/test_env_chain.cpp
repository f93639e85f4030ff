// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <stdexcept>

#include "ibpo/env_chain.hpp"

using namespace ibpo;

namespace {

TaskInstance make_explicit(int start, std::vector<ChainOp> ops, int vocab) {
  TaskInstance task;
  task.start_value = start;
  task.ops = std::move(ops);
  task.modulus = vocab;
  return task;
}

Trajectory traj(std::vector<Token> tokens, int reward = 0) {
  Trajectory t;
  t.logprobs_old.assign(tokens.size(), -0.5);
  t.tokens = std::move(tokens);
  t.terminal_reward = reward;
  return t;
}

}  // namespace

TEST_CASE("make_task determinism and preconditions") {
  const TaskInstance a = make_task(7, 16, 3);
  const TaskInstance b = make_task(7, 16, 3);
  CHECK(a.start_value == b.start_value);
  CHECK(a.ops == b.ops);
  CHECK(a.modulus == 16);
  CHECK(a.chain_length() == 3);

  bool any_diff = false;
  for (std::int64_t s = 8; s < 28; ++s) {
    const TaskInstance c = make_task(s, 16, 3);
    if (c.start_value != a.start_value || c.ops != a.ops) any_diff = true;
  }
  CHECK(any_diff);

  CHECK_THROWS_AS(make_task(7, 3, 3), std::invalid_argument);
  CHECK_THROWS_AS(make_task(7, 16, 0), std::invalid_argument);
}

TEST_CASE("oracle_solution hand-evaluated chains") {
  const TaskInstance t1 =
      make_explicit(3, {ChainOp::Inc1, ChainOp::Dbl, ChainOp::Inc2}, 16);
  CHECK(oracle_solution(t1) == std::vector<Token>{4, 8, 10, 10});

  const TaskInstance t2 = make_explicit(0, {ChainOp::Inc1}, 16);
  CHECK(oracle_solution(t2) == std::vector<Token>{1, 1});

  const TaskInstance t3 = make_explicit(15, {ChainOp::Inc1}, 16);
  CHECK(oracle_solution(t3) == std::vector<Token>{0, 0});
}

TEST_CASE("verify inspects only the final answer token") {
  const TaskInstance task =
      make_explicit(3, {ChainOp::Inc1, ChainOp::Dbl, ChainOp::Inc2}, 16);
  Trajectory oracle = traj(oracle_solution(task));
  CHECK(verify(task, oracle) == 1);
  CHECK(verify(task, traj({4, 9, 10, 10})) == 1);  // wrong intermediate, right answer
  CHECK(verify(task, traj({4, 8, 10, 11})) == 0);
}

TEST_CASE("first_divergence") {
  const TaskInstance task =
      make_explicit(3, {ChainOp::Inc1, ChainOp::Dbl, ChainOp::Inc2}, 16);
  CHECK_FALSE(first_divergence(task, traj(oracle_solution(task))).has_value());
  CHECK(first_divergence(task, traj({4, 9, 10, 10})) == 1);
  CHECK(first_divergence(task, traj({9, 8, 10, 10})) == 0);
  // length mismatch beyond a common prefix diverges at the shorter length
  CHECK(first_divergence(task, traj({4, 8})) == 2);
  CHECK(first_divergence(task, traj({4, 8, 10, 10, 3})) == 4);
}

TEST_CASE("oracle_correct repair splices at the divergence") {
  const TaskInstance task =
      make_explicit(3, {ChainOp::Inc1, ChainOp::Dbl, ChainOp::Inc2}, 16);
  Rng rng(5);
  const Trajectory bad = traj({4, 9, 10, 10});
  const Trajectory fixed = oracle_correct(task, bad, 1.0, rng);
  CHECK(fixed.tokens == std::vector<Token>{4, 8, 10, 10});
  CHECK(fixed.terminal_reward == 1);

  const Trajectory correct = traj(oracle_solution(task), 1);
  const Trajectory untouched = oracle_correct(task, correct, 1.0, rng);
  CHECK(untouched.tokens == correct.tokens);

  CHECK_THROWS_AS(oracle_correct(task, bad, 1.5, rng), std::invalid_argument);
}

TEST_CASE("oracle_correct q=0 perturbs one token and re-verifies") {
  const TaskInstance task =
      make_explicit(3, {ChainOp::Inc1, ChainOp::Dbl, ChainOp::Inc2}, 16);
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const Trajectory bad = traj({4, 8, 10, 11});
    const Trajectory out = oracle_correct(task, bad, 0.0, rng);
    REQUIRE(out.tokens.size() == bad.tokens.size());
    int diffs = 0;
    for (std::size_t k = 0; k < out.tokens.size(); ++k) {
      diffs += out.tokens[k] != bad.tokens[k];
    }
    CHECK(diffs == 1);
    CHECK(out.terminal_reward == verify(task, out));
  }
}

TEST_CASE("environment invariants across seeds") {
  Rng rng(123);
  for (std::int64_t seed = 0; seed < 200; ++seed) {
    const TaskInstance task = make_task(seed, 16, 4);
    Trajectory oracle = traj(oracle_solution(task));
    CHECK(verify(task, oracle) == 1);
    CHECK_FALSE(first_divergence(task, oracle).has_value());

    // random trajectory: no divergence implies verified
    Trajectory random;
    for (int k = 0; k < 5; ++k) random.tokens.push_back(rng.next_int(16));
    random.logprobs_old.assign(5, -1.0);
    if (!first_divergence(task, random).has_value()) {
      CHECK(verify(task, random) == 1);
    }
    random.terminal_reward = verify(task, random);
    if (random.terminal_reward == 0) {
      const Trajectory fixed = oracle_correct(task, random, 1.0, rng);
      CHECK(verify(task, fixed) == 1);
      const int div = *first_divergence(task, random);
      for (int k = 0; k < div; ++k) {
        CHECK(fixed.tokens[static_cast<std::size_t>(k)] ==
              random.tokens[static_cast<std::size_t>(k)]);
      }
    }
  }
}
