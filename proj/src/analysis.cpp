// SPDX-License-Identifier: Apache-2.0
#include "ibpo/analysis.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "ibpo/types.hpp"

namespace ibpo {

void validate_model(const ExchangeableModel& model) {
  if (model.p <= 0.0 || model.p >= 1.0) {
    throw std::invalid_argument("model: p must be in (0,1)");
  }
  if (model.m <= 0.0 || model.m > 1.0) {
    throw std::invalid_argument("model: m must be in (0,1]");
  }
  if (model.family == PhiFamily::Uniform && model.m > 0.5) {
    throw std::invalid_argument("model: uniform phi needs m <= 0.5 to stay in [0,1]");
  }
  if (model.coupling_strength < 0.0 || model.coupling_strength > 1.0) {
    throw std::invalid_argument("model: coupling_strength must be in [0,1]");
  }
}

namespace {

double draw_phi(PhiFamily family, double mean, Rng& rng) {
  switch (family) {
    case PhiFamily::Constant:
      return mean;
    case PhiFamily::Bernoulli:
      return rng.next_uniform() < mean ? 1.0 : 0.0;
    case PhiFamily::Uniform:
      return 2.0 * mean * rng.next_uniform();
  }
  throw std::invalid_argument("draw_phi: unknown family");
}

}  // namespace

GroupSample sample_group(const ExchangeableModel& model, int group_size, Rng& rng) {
  GroupSample s;
  s.y.resize(group_size);
  s.phi.resize(group_size);
  bool any_correct = false;
  for (int i = 0; i < group_size; ++i) {
    const double r = rng.next_uniform() < model.p ? 1.0 : 0.0;
    s.y[i] = to_signed_reward(r);
    any_correct = any_correct || r == 1.0;
  }
  double m_eff = model.m;
  if (model.coupling == Coupling::SharedReference && !any_correct) {
    m_eff = model.m * (1.0 - model.coupling_strength);
  }
  for (int i = 0; i < group_size; ++i) {
    s.phi[i] = s.y[i] > 0.0 ? 0.0
                            : (m_eff > 0.0 ? draw_phi(model.family, m_eff, rng) : 0.0);
  }
  return s;
}

double lemma_cov_closed_form(double p, double m) {
  if (p <= 0.0 || p >= 1.0) throw std::invalid_argument("lemma_cov_closed_form: p must be in (0,1)");
  if (m <= 0.0) throw std::invalid_argument("lemma_cov_closed_form: m must be > 0");
  return -2.0 * p * (1.0 - p) * m;
}

double lambda_max(double c, double v_phi) {
  if (c <= 0.0) throw std::invalid_argument("lambda_max: C must be > 0 (Condition 1)");
  if (v_phi <= 0.0) throw std::invalid_argument("lambda_max: V_phi must be > 0 (Condition 1)");
  return 2.0 * c / v_phi;
}

namespace {

// Per-group sufficient statistics. Cross sums run over ordered pairs i != j.
struct GroupStats {
  double sy = 0.0;        // sum y_i
  double sphi = 0.0;      // sum phi_i
  double syphi = 0.0;     // sum y_i phi_i
  double sphi2 = 0.0;     // sum phi_i^2
  double cyphi = 0.0;     // sum_{i != j} y_i phi_j
  double cphiphi = 0.0;   // sum_{i != j} phi_i phi_j
  double u = 0.0;         // (1/G) sum (y_i - ybar)(phi_i - phibar)
  double w = 0.0;         // (1/G) sum (phi_i - phibar)^2
};

GroupStats group_stats(const GroupSample& s) {
  GroupStats g;
  const int n = static_cast<int>(s.y.size());
  g.sy = s.y.sum();
  g.sphi = s.phi.sum();
  g.syphi = s.y.dot(s.phi);
  g.sphi2 = s.phi.squaredNorm();
  g.cyphi = g.sy * g.sphi - g.syphi;
  g.cphiphi = g.sphi * g.sphi - g.sphi2;
  const double ybar = g.sy / n;
  const double phibar = g.sphi / n;
  g.u = (s.y.array() - ybar).matrix().dot((s.phi.array() - phibar).matrix()) / n;
  g.w = (s.phi.array() - phibar).square().sum() / n;
  return g;
}

struct Moments {
  double c_in, c_out, v_in, v_out;
  double c() const { return -(c_in - c_out); }
  double v_phi() const { return v_in - v_out; }
};

Moments moments_from_sums(const GroupStats& sums, std::int64_t groups, int g_size) {
  const double n = static_cast<double>(groups) * g_size;
  const double npairs = static_cast<double>(groups) * g_size * (g_size - 1);
  const double ey = sums.sy / n;
  const double ephi = sums.sphi / n;
  Moments m;
  m.c_in = sums.syphi / n - ey * ephi;
  m.c_out = sums.cyphi / npairs - ey * ephi;
  m.v_in = sums.sphi2 / n - ephi * ephi;
  m.v_out = sums.cphiphi / npairs - ephi * ephi;
  return m;
}

GroupStats subtract(const GroupStats& total, const GroupStats& g) {
  GroupStats out;
  out.sy = total.sy - g.sy;
  out.sphi = total.sphi - g.sphi;
  out.syphi = total.syphi - g.syphi;
  out.sphi2 = total.sphi2 - g.sphi2;
  out.cyphi = total.cyphi - g.cyphi;
  out.cphiphi = total.cphiphi - g.cphiphi;
  out.u = total.u - g.u;
  out.w = total.w - g.w;
  return out;
}

GroupStats accumulate_all(const std::vector<GroupStats>& per_group) {
  GroupStats total;
  for (const GroupStats& g : per_group) {
    total.sy += g.sy;
    total.sphi += g.sphi;
    total.syphi += g.syphi;
    total.sphi2 += g.sphi2;
    total.cyphi += g.cyphi;
    total.cphiphi += g.cphiphi;
    total.u += g.u;
    total.w += g.w;
  }
  return total;
}

// Delete-one-group jackknife SE of a functional of the group sums.
template <typename Fn>
double jackknife_se(const std::vector<GroupStats>& per_group, const GroupStats& total,
                    Fn functional) {
  const std::int64_t n = static_cast<std::int64_t>(per_group.size());
  double mean = 0.0, m2 = 0.0;
  std::int64_t count = 0;
  for (const GroupStats& g : per_group) {
    const double theta = functional(subtract(total, g), n - 1);
    ++count;
    const double delta = theta - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (theta - mean);
  }
  return std::sqrt(static_cast<double>(n - 1) / static_cast<double>(n) * m2);
}

std::vector<GroupStats> collect_groups(const ExchangeableModel& model, int g_size,
                                       std::int64_t num_groups, Rng& rng) {
  validate_model(model);
  if (g_size < 2) throw std::invalid_argument("analysis: group_size must be >= 2");
  std::vector<GroupStats> per_group;
  per_group.reserve(static_cast<std::size_t>(num_groups));
  for (std::int64_t g = 0; g < num_groups; ++g) {
    per_group.push_back(group_stats(sample_group(model, g_size, rng)));
  }
  return per_group;
}

}  // namespace

MomentEstimates estimate_moments(const ExchangeableModel& model, int group_size,
                                 std::int64_t num_groups, Rng& rng) {
  if (num_groups < 100) throw std::invalid_argument("estimate_moments: need >= 100 groups");
  const std::vector<GroupStats> per_group = collect_groups(model, group_size, num_groups, rng);
  const GroupStats total = accumulate_all(per_group);
  const Moments m = moments_from_sums(total, num_groups, group_size);

  MomentEstimates est;
  est.c_in = m.c_in;
  est.c_out = m.c_out;
  est.v_in = m.v_in;
  est.v_out = m.v_out;
  est.num_groups = num_groups;
  const int g_size = group_size;
  est.c_in_se = jackknife_se(per_group, total, [g_size](const GroupStats& s, std::int64_t n) {
    return moments_from_sums(s, n, g_size).c_in;
  });
  est.c_out_se = jackknife_se(per_group, total, [g_size](const GroupStats& s, std::int64_t n) {
    return moments_from_sums(s, n, g_size).c_out;
  });
  est.v_in_se = jackknife_se(per_group, total, [g_size](const GroupStats& s, std::int64_t n) {
    return moments_from_sums(s, n, g_size).v_in;
  });
  est.v_out_se = jackknife_se(per_group, total, [g_size](const GroupStats& s, std::int64_t n) {
    return moments_from_sums(s, n, g_size).v_out;
  });
  est.c_se = jackknife_se(per_group, total, [g_size](const GroupStats& s, std::int64_t n) {
    return moments_from_sums(s, n, g_size).c();
  });
  est.v_phi_se = jackknife_se(per_group, total, [g_size](const GroupStats& s, std::int64_t n) {
    return moments_from_sums(s, n, g_size).v_phi();
  });
  return est;
}

namespace {

// lhs of the variance identity from the sums: per sampled group the centered
// quadratic expands exactly to 2*lambda*u + lambda^2*w.
double lhs_from_sums(const GroupStats& sums, std::int64_t groups, double lambda) {
  const double mu_u = sums.u / static_cast<double>(groups);
  const double mu_w = sums.w / static_cast<double>(groups);
  return 2.0 * lambda * mu_u + lambda * lambda * mu_w;
}

double rhs_from_sums(const GroupStats& sums, std::int64_t groups, int g_size, double lambda) {
  const Moments m = moments_from_sums(sums, groups, g_size);
  const double factor = 1.0 - 1.0 / static_cast<double>(g_size);
  return factor * (lambda * lambda * m.v_phi() - 2.0 * lambda * m.c());
}

IdentityCheck identity_from_groups(const std::vector<GroupStats>& per_group,
                                   const GroupStats& total, int g_size, double lambda) {
  const std::int64_t n = static_cast<std::int64_t>(per_group.size());
  IdentityCheck out;
  out.lhs = lhs_from_sums(total, n, lambda);
  out.rhs = rhs_from_sums(total, n, g_size, lambda);

  // SE of the lhs alone from the per-group quadratic terms.
  double mean = 0.0, m2 = 0.0;
  std::int64_t count = 0;
  for (const GroupStats& g : per_group) {
    const double d = 2.0 * lambda * g.u + lambda * lambda * g.w;
    ++count;
    const double delta = d - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (d - mean);
  }
  out.lhs_se = std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));

  out.diff_se = jackknife_se(per_group, total,
                             [g_size, lambda](const GroupStats& s, std::int64_t groups) {
                               return lhs_from_sums(s, groups, lambda) -
                                      rhs_from_sums(s, groups, g_size, lambda);
                             });
  out.pass = std::abs(out.lhs - out.rhs) <= 4.0 * out.diff_se + 1e-12;
  return out;
}

}  // namespace

IdentityCheck variance_identity_check(const ExchangeableModel& model, int group_size,
                                      double lambda, std::int64_t num_groups, Rng& rng) {
  const std::vector<GroupStats> per_group = collect_groups(model, group_size, num_groups, rng);
  const GroupStats total = accumulate_all(per_group);
  IdentityCheck out = identity_from_groups(per_group, total, group_size, lambda);

  const Moments m = moments_from_sums(total, num_groups, group_size);
  out.moments.c_in = m.c_in;
  out.moments.c_out = m.c_out;
  out.moments.v_in = m.v_in;
  out.moments.v_out = m.v_out;
  out.moments.num_groups = num_groups;
  return out;
}

std::vector<SweepRow> variance_sweep(const ExchangeableModel& model, int group_size,
                                     std::span<const double> lambda_grid,
                                     std::int64_t num_groups, Rng& rng) {
  if (lambda_grid.empty()) throw std::invalid_argument("variance_sweep: empty lambda grid");
  const std::vector<GroupStats> per_group = collect_groups(model, group_size, num_groups, rng);
  const GroupStats total = accumulate_all(per_group);
  const Moments m = moments_from_sums(total, num_groups, group_size);
  const double lmax_hat = lambda_max(m.c(), m.v_phi());

  std::vector<SweepRow> rows;
  rows.reserve(lambda_grid.size());
  for (double lambda : lambda_grid) {
    const IdentityCheck check = identity_from_groups(per_group, total, group_size, lambda);
    rows.push_back({lambda, check.lhs, check.lhs_se, check.rhs, lmax_hat, check.pass});
  }
  return rows;
}

CenteredCovCheck centered_cov_factor_check(const ExchangeableModel& model, int group_size,
                                           std::int64_t num_groups, Rng& rng) {
  const std::vector<GroupStats> per_group = collect_groups(model, group_size, num_groups, rng);
  const GroupStats total = accumulate_all(per_group);
  const int g_size = group_size;

  const auto ratio_fn = [g_size](const GroupStats& s, std::int64_t groups) {
    const Moments m = moments_from_sums(s, groups, g_size);
    return (s.u / static_cast<double>(groups)) / (m.c_in - m.c_out);
  };
  CenteredCovCheck out;
  out.ratio = ratio_fn(total, num_groups);
  out.expected = 1.0 - 1.0 / static_cast<double>(group_size);
  out.se = jackknife_se(per_group, total, ratio_fn);
  out.pass = std::abs(out.ratio - out.expected) <= 4.0 * out.se;
  return out;
}

}  // namespace ibpo
