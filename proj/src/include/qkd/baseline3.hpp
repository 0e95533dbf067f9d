#pragma once

// Three-intensity comparison protocol: one decoy intensity shared by both
// bases, intensity-independent basis choice, 21 composed error terms. The
// X-basis vacuum/single-photon events come from their own decoy chain
// instead of the cross-basis transfer.

#include "qkd/bounds.hpp"

namespace qkd {

struct SourceConfig3 {
  double mu = 0.0;
  double v = 0.0;       // single decoy intensity, sent in both bases
  double omega = 0.0;
  double p_mu = 0.0;
  double p_v = 0.0;
  double p_omega = 0.0;
  double p_z_alice = 0.0;  // basis bias, identical for every intensity
  double p_z_bob = 0.0;

  static SourceConfig3 from_free(double mu, double v, double omega,
                                 double p_mu, double p_v, double p_z) {
    return SourceConfig3{mu, v, omega, p_mu, p_v, 1.0 - p_mu - p_v, p_z, p_z};
  }
};

inline void validate(const SourceConfig3& c) {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("SourceConfig3: " + msg);
  };
  if (!(c.omega >= 0.0)) fail("omega must be >= 0");
  if (!(c.mu > c.v + c.omega)) fail("mu must exceed v + omega");
  if (!(c.v > c.omega)) fail("v must exceed omega");
  for (double p : {c.p_mu, c.p_v, c.p_omega})
    if (!(p > 0.0 && p < 1.0)) fail("selection probabilities must be in (0,1)");
  if (std::abs(c.p_mu + c.p_v + c.p_omega - 1.0) > 1e-9)
    fail("selection probabilities must sum to 1");
  if (!(c.p_z_alice > 0.0 && c.p_z_alice < 1.0))
    fail("p_z_alice must be in (0,1)");
  if (!(c.p_z_bob > 0.0 && c.p_z_bob < 1.0)) fail("p_z_bob must be in (0,1)");
}

struct ObservedCounts3 {
  double n_z_mu = 0.0, n_z_v = 0.0, n_z_omega = 0.0;
  double m_z_mu = 0.0, m_z_v = 0.0, m_z_omega = 0.0;
  double n_x_mu = 0.0, n_x_v = 0.0, n_x_omega = 0.0;
  double m_x_mu = 0.0, m_x_v = 0.0, m_x_omega = 0.0;

  double n_z() const { return n_z_mu + n_z_v + n_z_omega; }
  double m_z() const { return m_z_mu + m_z_v + m_z_omega; }
  double n_x() const { return n_x_mu + n_x_v + n_x_omega; }
  double m_x() const { return m_x_mu + m_x_v + m_x_omega; }
  bool all_zero() const { return n_z() == 0.0 && n_x() == 0.0; }
};

inline void validate(const ObservedCounts3& c) {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("ObservedCounts3: " + msg);
  };
  const double n[] = {c.n_z_mu, c.n_z_v, c.n_z_omega,
                      c.n_x_mu, c.n_x_v, c.n_x_omega};
  const double m[] = {c.m_z_mu, c.m_z_v, c.m_z_omega,
                      c.m_x_mu, c.m_x_v, c.m_x_omega};
  for (int i = 0; i < 6; ++i) {
    if (!(n[i] >= 0.0 && m[i] >= 0.0)) fail("counts must be non-negative");
    if (m[i] > n[i]) fail("error count exceeds detection count");
  }
}

namespace detail {

inline KeyRateReport evaluate3_once(const SourceConfig3& cfg,
                                    const ObservedCounts3& counts,
                                    double n_pulses, const SecurityParams& sec,
                                    double eps_sec, bool deviations) {
  KeyRateReport r;
  r.eps_sec = eps_sec;
  const int terms = sec.error_terms;
  const double pz = cfg.p_z_alice;
  const double px = 1.0 - pz;

  const DecoyRow z_mu{cfg.mu, cfg.p_mu, pz, counts.n_z_mu};
  const DecoyRow z_v{cfg.v, cfg.p_v, pz, counts.n_z_v};
  const DecoyRow z_om{cfg.omega, cfg.p_omega, pz, counts.n_z_omega};
  const DecoyRow x_mu{cfg.mu, cfg.p_mu, px, counts.n_x_mu};
  const DecoyRow x_v{cfg.v, cfg.p_v, px, counts.n_x_v};
  const DecoyRow x_om{cfg.omega, cfg.p_omega, px, counts.n_x_omega};

  const auto ez = decoy_s0_s1(z_mu, z_v, z_om, counts.n_z(), eps_sec, terms,
                              deviations);
  r.s_z0 = ez.s0;
  r.s_z1 = ez.s1;
  r.flags.s_z0_clamped = ez.s0_clamped;
  r.flags.s_z1_clamped = ez.s1_clamped;
  if (r.s_z1 <= 0.0) return infeasible_report(eps_sec, r.flags);

  const auto ex = decoy_s0_s1(x_mu, x_v, x_om, counts.n_x(), eps_sec, terms,
                              deviations);
  r.s_x1 = ex.s1;
  r.flags.s_x1_clamped = ex.s1_clamped;
  if (r.s_x1 <= 0.0) return infeasible_report(eps_sec, r.flags);

  const double m_x = counts.m_x();
  const double eps_m = deviations ? eps_sec : double(terms);
  const double plus = m_bound(counts.m_x_v, m_x, cfg.v, cfg.p_v, px, eps_m,
                              terms, Sign::plus);
  const double minus = m_bound(counts.m_x_omega, m_x, cfg.omega, cfg.p_omega,
                               px, eps_m, terms, Sign::minus);
  const double v_raw = ex.tau1 * (plus - minus) / (cfg.v - cfg.omega);
  r.flags.v_x1_clamped_low = v_raw < 0.0;
  r.flags.v_x1_clamped_high = v_raw > m_x;
  r.v_x1 = std::clamp(v_raw, 0.0, m_x);

  r.e1_pz = phase_error_rate(r.s_x1, r.v_x1, r.s_z1, eps_sec, terms, &r.flags,
                             deviations);
  const double n_z = counts.n_z();
  const double e_z = counts.m_z() / n_z;
  r.lambda_ec = sec.f_ec * n_z * h2(e_z);
  r.raw_l = key_length_raw(r.s_z0, r.s_z1, r.e1_pz, r.lambda_ec, eps_sec,
                           sec.eps_cor, terms);
  r.l = r.raw_l <= 0.0 ? 0 : static_cast<long long>(std::floor(r.raw_l));
  r.rate = static_cast<double>(r.l) / n_pulses;
  r.feasible = true;
  return r;
}

}  // namespace detail

// Full three-intensity evaluation; same contract as the four-intensity
// evaluate(), with sec.error_terms = 21.
inline KeyRateReport evaluate3(const SourceConfig3& cfg,
                               const ObservedCounts3& counts, double n_pulses,
                               const SecurityParams& sec,
                               const EvalOptions& opts = {}) {
  validate(cfg);
  validate(sec);
  validate(counts);
  if (!(n_pulses >= 1.0))
    throw std::invalid_argument("evaluate3: n_pulses must be >= 1");
  if (counts.all_zero()) {
    KeyRateReport r;
    r.eps_sec = opts.fixed_eps_sec.value_or(sec.kappa);
    return r;
  }
  if (opts.fixed_eps_sec)
    return detail::evaluate3_once(cfg, counts, n_pulses, sec,
                                  *opts.fixed_eps_sec, opts.deviations);
  return detail::solve_fixed_point(
      [&](double eps) {
        return detail::evaluate3_once(cfg, counts, n_pulses, sec, eps,
                                      opts.deviations);
      },
      sec.kappa, n_pulses);
}

}  // namespace qkd
