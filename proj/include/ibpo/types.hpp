// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ibpo {

using Token = std::int32_t;

// A finished rollout: sampled tokens, their log-probabilities under the
// behavior policy that produced them, and the binary terminal reward
// assigned by the verifier. Immutable value data once constructed.
struct Trajectory {
  std::vector<Token> tokens;
  std::vector<double> logprobs_old;
  int terminal_reward = 0;  // in {0, 1}

  int length() const { return static_cast<int>(tokens.size()); }
};

// Per-token {0,1} mask over a target trajectory. bit = 1 marks a token that
// contributes to the masked sequence ratio (i.e. receives gradient).
struct TokenMask {
  std::vector<std::uint8_t> bits;

  int size() const { return static_cast<int>(bits.size()); }
  int popcount() const;
};

// G rollouts for one task. shaped_rewards/advantages start empty and are
// filled by the shaping + normalization stage; once filled they have one
// entry per trajectory.
struct GroupBatch {
  std::int64_t task_id = 0;
  std::vector<Trajectory> trajectories;
  Eigen::VectorXd shaped_rewards;
  Eigen::VectorXd advantages;

  int size() const { return static_cast<int>(trajectories.size()); }
};

// Signed recoding Y = 2r - 1 of the binary reward. Only the analysis code
// works with the signed form; the training path keeps r in {0,1}.
// Rejects inputs outside {0,1}.
double to_signed_reward(double r);

// nullopt when every Trajectory invariant holds (matching lengths, finite
// logprobs <= 0, binary reward) and all token ids lie in [0, vocab);
// otherwise a message naming the first violated invariant and its index.
std::optional<std::string> validate_trajectory(const Trajectory& t, int vocab);

}  // namespace ibpo
