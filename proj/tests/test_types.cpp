// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <stdexcept>

#include "ibpo/policy.hpp"
#include "ibpo/rng.hpp"
#include "ibpo/types.hpp"

using namespace ibpo;

TEST_CASE("signed reward recoding") {
  CHECK(to_signed_reward(1.0) == 1.0);
  CHECK(to_signed_reward(0.0) == -1.0);
  CHECK_THROWS_AS(to_signed_reward(0.5), std::invalid_argument);
  CHECK_THROWS_AS(to_signed_reward(-1.0), std::invalid_argument);
  CHECK_THROWS_AS(to_signed_reward(2.0), std::invalid_argument);
}

TEST_CASE("trajectory validation") {
  Trajectory ok;
  ok.tokens = {1, 2};
  ok.logprobs_old = {-0.1, -0.2};
  ok.terminal_reward = 1;
  CHECK_FALSE(validate_trajectory(ok, 16).has_value());

  Trajectory mismatch;
  mismatch.tokens = {1};
  mismatch.logprobs_old = {-0.1, -0.2};
  mismatch.terminal_reward = 1;
  auto err = validate_trajectory(mismatch, 16);
  REQUIRE(err.has_value());
  CHECK(err->find("mismatch") != std::string::npos);

  Trajectory out_of_range;
  out_of_range.tokens = {20};
  out_of_range.logprobs_old = {-0.1};
  out_of_range.terminal_reward = 0;
  err = validate_trajectory(out_of_range, 16);
  REQUIRE(err.has_value());
  CHECK(err->find("index 0") != std::string::npos);

  Trajectory bad_logprob = ok;
  bad_logprob.logprobs_old[1] = 0.5;
  CHECK(validate_trajectory(bad_logprob, 16).has_value());

  Trajectory bad_reward = ok;
  bad_reward.terminal_reward = 2;
  CHECK(validate_trajectory(bad_reward, 16).has_value());

  Trajectory empty;
  CHECK(validate_trajectory(empty, 16).has_value());
}

TEST_CASE("policy rollouts always validate") {
  Rng rng(11);
  for (std::int64_t seed = 0; seed < 50; ++seed) {
    const TaskInstance task = make_task(seed, 16, 4);
    PolicyParams params = make_uniform_params(16);
    // random logits to leave the uniform special case
    for (int c = 0; c < 8; ++c) {
      Eigen::VectorXd& row = params.mutable_row(rng.next_int(500));
      for (int k = 0; k < 16; ++k) row[k] = 2.0 * rng.next_uniform() - 1.0;
    }
    const Trajectory t =
        sample_trajectory(params, task, PolicyMode::Base, nullptr, rng, 8);
    CHECK_FALSE(validate_trajectory(t, 16).has_value());
  }
}
