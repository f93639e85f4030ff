// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ibpo {

// Exit-code contract shared by all subcommands:
//   0 success, 1 runtime/check failure, 2 usage/config error.

int run_train(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed_override);

int run_variance(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed_override);

int run_ablate(const std::string& config_path, const std::string& out_dir,
               std::optional<std::uint64_t> seed_override,
               const std::vector<std::string>& variants_override,
               std::optional<double> threshold_override);

int run_report(const std::string& run_dir, const std::string& out_dir, double threshold);

}  // namespace ibpo
