// SPDX-License-Identifier: Apache-2.0
#include "ibpo/types.hpp"

#include <cmath>
#include <stdexcept>

namespace ibpo {

int TokenMask::popcount() const {
  int n = 0;
  for (auto b : bits) n += b != 0;
  return n;
}

double to_signed_reward(double r) {
  if (r != 0.0 && r != 1.0) {
    throw std::invalid_argument("to_signed_reward: reward must be 0 or 1");
  }
  return 2.0 * r - 1.0;
}

std::optional<std::string> validate_trajectory(const Trajectory& t, int vocab) {
  if (t.tokens.empty()) {
    return "trajectory is empty";
  }
  if (t.tokens.size() != t.logprobs_old.size()) {
    return "tokens/logprobs length mismatch: " + std::to_string(t.tokens.size()) +
           " vs " + std::to_string(t.logprobs_old.size());
  }
  for (std::size_t i = 0; i < t.tokens.size(); ++i) {
    if (t.tokens[i] < 0 || t.tokens[i] >= vocab) {
      return "token out of range at index " + std::to_string(i);
    }
  }
  for (std::size_t i = 0; i < t.logprobs_old.size(); ++i) {
    if (!std::isfinite(t.logprobs_old[i]) || t.logprobs_old[i] > 0.0) {
      return "invalid logprob at index " + std::to_string(i);
    }
  }
  if (t.terminal_reward != 0 && t.terminal_reward != 1) {
    return "terminal reward not in {0,1}";
  }
  return std::nullopt;
}

}  // namespace ibpo
