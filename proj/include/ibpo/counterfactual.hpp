// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ibpo/env_chain.hpp"
#include "ibpo/rng.hpp"
#include "ibpo/types.hpp"

namespace ibpo {

enum class ShapingVariant : std::uint8_t { Base = 0, Ratio = 1, Mask = 2 };

// Levenshtein alignment between two token sequences. matched_pairs holds the
// (pos in a, pos in b) of identical tokens along one optimal traceback,
// strictly increasing in both coordinates. Tie-breaking is fixed
// (match > substitute > delete > insert) so the alignment is deterministic.
struct Alignment {
  int distance = 0;
  double normalized = 0.0;  // distance / max(|a|, |b|); 0 when both empty
  std::vector<std::pair<int, int>> matched_pairs;
};

Alignment edit_distance(std::span<const Token> a, std::span<const Token> b);

// Positions of y kept unchanged by the correction: first coordinates of the
// matched pairs of edit_distance(y, yhat). Sorted ascending.
std::vector<int> unchanged_set(std::span<const Token> y, std::span<const Token> yhat);

// Full-rewrite filter: the corrected output is far from the original AND
// closer to the reference than to the original. y_ref may be empty (no
// reference available); then only the first condition applies.
bool detect_rewrite(std::span<const Token> y, std::span<const Token> yhat,
                    std::span<const Token> y_ref, double alpha);

// Batch threshold mu_d + 2*sigma_d (population sigma), clamped to (0, 1].
double adaptive_threshold(std::span<const double> distances);

// Shaping term of the compare-and-correct operator: rho iff the incorrect
// target was corrected into a verified success and the correction was not a
// full rewrite. Failed corrections are never penalized.
double shaping_base(int r, int r_hat, bool rewrite, double rho);

// Unchanged-fraction variant: |U|/T under the same success conditions.
double shaping_ratio(int r, int r_hat, bool rewrite, int unchanged_count, int target_len);

// bit t = 0 iff position t of y is in the unchanged set, else 1.
TokenMask token_mask(std::span<const Token> y, std::span<const Token> yhat);

// Uniform reference draw for an incorrect target: from the correct members if
// any exist, otherwise from the other incorrect members. nullopt only for a
// group of size 1.
std::optional<int> sample_reference(const GroupBatch& group, int target_index, Rng& rng);

// Correction operator: maps (task, target, optional reference) to a corrected
// trajectory whose terminal_reward has been re-verified.
using CorrectorFn = std::function<Trajectory(const TaskInstance&, const Trajectory&,
                                             const Trajectory*, Rng&)>;

struct CompareConfig {
  ShapingVariant variant = ShapingVariant::Base;
  double rho = 0.5;
  bool adaptive_alpha = false;
  double alpha = 0.6;
  double kappa = 0.0;  // optional rewrite penalty on the shaping delta; 0 = off
};

// Output of the comparison operator for one target trajectory. s is the
// scalar comparison signal in [0,1]; the mask is present only for the Mask
// variant on eligible corrections.
struct ComparisonOutcome {
  double s = 0.0;
  std::optional<TokenMask> mask;
  bool rewrite = false;
  Trajectory corrected;
  int corrected_reward = 0;
  std::optional<int> reference_index;
};

// Single-target comparison with a resolved threshold (cfg.alpha). Correct
// targets short-circuit to s = 0 with no mask and no corrector call.
ComparisonOutcome compare(const TaskInstance& task, const GroupBatch& group,
                          int target_index, const CompareConfig& cfg,
                          const CorrectorFn& corrector, Rng& rng,
                          bool allow_reference = true);

// Group-level comparison. Generates corrections for every incorrect target
// first, resolves the rewrite threshold (fixed, or adaptive from the batch of
// realized distances), then finalizes outcomes. Entries for correct targets
// are nullopt. allow_reference = false reproduces the K = 1 mode where no
// alternative reference is provided.
std::vector<std::optional<ComparisonOutcome>> compare_group(
    const TaskInstance& task, const GroupBatch& group, const CompareConfig& cfg,
    const CorrectorFn& corrector, Rng& rng, bool allow_reference = true);

// Shaping delta fed to the shaped reward: rho * s, minus the optional
// rewrite penalty.
double shaping_delta(const ComparisonOutcome& outcome, const CompareConfig& cfg);

CorrectorFn make_oracle_corrector(double repair_prob);

}  // namespace ibpo
