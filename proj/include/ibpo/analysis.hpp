// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

#include "ibpo/rng.hpp"

namespace ibpo {

// Exchangeable (Y, phi) model for the within-group advantage analysis.
// Y is the signed terminal reward; phi is the comparison signal, identically
// zero on correct draws. The shared-reference coupling lets one member's
// correctness raise everyone's repair odds (reference availability), which
// induces a nonzero cross covariance Cov(Y_i, phi_j).
enum class PhiFamily : std::uint8_t { Constant = 0, Bernoulli = 1, Uniform = 2 };
enum class Coupling : std::uint8_t { Independent = 0, SharedReference = 1 };

struct ExchangeableModel {
  double p = 0.5;  // P(Y = +1)
  double m = 0.5;  // E[phi | Y = -1]
  PhiFamily family = PhiFamily::Bernoulli;
  Coupling coupling = Coupling::Independent;
  double coupling_strength = 0.0;  // in [0,1]; scales m down in all-fail groups
};

void validate_model(const ExchangeableModel& model);

struct GroupSample {
  Eigen::VectorXd y;    // signed rewards, entries in {-1, +1}
  Eigen::VectorXd phi;  // comparison signals in [0, 1], 0 where y = +1
};

GroupSample sample_group(const ExchangeableModel& model, int group_size, Rng& rng);

// Closed-form Cov(Y, phi) = -2 p (1-p) m for the target-local design.
double lemma_cov_closed_form(double p, double m);

struct MomentEstimates {
  double c_in = 0.0;   // Cov(Y_i, phi_i)
  double c_out = 0.0;  // Cov(Y_i, phi_j), j != i
  double v_in = 0.0;   // Var(phi_i)
  double v_out = 0.0;  // Cov(phi_i, phi_j), j != i
  double c_in_se = 0.0, c_out_se = 0.0, v_in_se = 0.0, v_out_se = 0.0;
  double c_se = 0.0;      // SE of -(c_in - c_out)
  double v_phi_se = 0.0;  // SE of v_in - v_out
  std::int64_t num_groups = 0;

  double c() const { return -(c_in - c_out); }
  double v_phi() const { return v_in - v_out; }
};

// Pooled moment estimates over num_groups sampled groups with delete-one-group
// jackknife standard errors. Requires group_size >= 2 and num_groups >= 100.
MomentEstimates estimate_moments(const ExchangeableModel& model, int group_size,
                                 std::int64_t num_groups, Rng& rng);

// lambda_max = 2C / V_phi. Rejects non-positive inputs (the effective
// negative-correlation condition is violated).
double lambda_max(double c, double v_phi);

struct IdentityCheck {
  double lhs = 0.0;     // MC estimate of Var(A_ibpo) - Var(A_gspo)
  double lhs_se = 0.0;
  double rhs = 0.0;     // (1 - 1/G)(lambda^2 V_phi - 2 lambda C) from sample moments
  double diff_se = 0.0; // jackknife SE of lhs - rhs
  bool pass = false;    // |lhs - rhs| <= 4 * diff_se
  MomentEstimates moments;
};

// Checks the finite-sample variance identity on centered, pre-normalization
// advantage terms. lhs and rhs come from the same sampled groups, so the
// pass gate uses the jackknife SE of their difference.
IdentityCheck variance_identity_check(const ExchangeableModel& model, int group_size,
                                      double lambda, std::int64_t num_groups, Rng& rng);

struct SweepRow {
  double lambda = 0.0;
  double lhs = 0.0;
  double lhs_se = 0.0;
  double rhs = 0.0;
  double lambda_max_hat = 0.0;
  bool pass = false;
};

// Evaluates the identity across a lambda grid over one common set of sampled
// groups (the lhs is exactly quadratic in lambda per sample, so the empirical
// minimum sits at the quadratic's vertex near lambda_max / 2).
std::vector<SweepRow> variance_sweep(const ExchangeableModel& model, int group_size,
                                     std::span<const double> lambda_grid,
                                     std::int64_t num_groups, Rng& rng);

struct CenteredCovCheck {
  double ratio = 0.0;     // Cov(Y_i - Ybar, phi_i - phibar) / (c_in - c_out)
  double se = 0.0;
  double expected = 0.0;  // 1 - 1/G
  bool pass = false;      // |ratio - expected| <= 4 * se
};

// Finite-sample covariance factor check: the centered cross moment equals
// (1 - 1/G)(C_in - C_out).
CenteredCovCheck centered_cov_factor_check(const ExchangeableModel& model, int group_size,
                                           std::int64_t num_groups, Rng& rng);

}  // namespace ibpo
