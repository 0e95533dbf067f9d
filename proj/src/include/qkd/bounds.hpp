#pragma once

// Finite-statistics estimators for the four-intensity decoy-state BB84
// protocol: vacuum/single-photon event bounds, phase-error bound, and the
// secret key length, composed by evaluate() with the kappa*l coupling
// resolved by fixed-point iteration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

namespace qkd {

enum class Basis { z, x };

// ---------------------------------------------------------------------------
// configuration types

struct SourceConfig {
  double mu = 0.0;        // signal intensity, sent in Z only
  double v1 = 0.0;        // decoy intensity, sent in Z only
  double v2 = 0.0;        // decoy intensity, sent in X only
  double omega = 0.0;     // weakest decoy, sent in both bases
  double p_mu = 0.0;
  double p_v1 = 0.0;
  double p_v2 = 0.0;
  double p_omega = 0.0;
  double p_z_given_omega = 0.0;  // Alice's Z bias for omega pulses
  double p_z_bob = 0.0;          // Bob's Z bias

  // Standard construction from the 7 free parameters; the omega basis bias
  // is tied to Bob's (the convention used throughout).
  static SourceConfig from_free(double mu, double v1, double v2, double omega,
                                double p_mu, double p_v1, double p_v2,
                                double p_z) {
    return SourceConfig{mu,   v1,   v2,   omega, p_mu, p_v1,
                        p_v2, 1.0 - p_mu - p_v1 - p_v2, p_z, p_z};
  }
};

inline void validate(const SourceConfig& c) {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("SourceConfig: " + msg);
  };
  if (!(c.omega >= 0.0)) fail("omega must be >= 0");
  if (!(c.mu > c.v1 + c.omega)) fail("mu must exceed v1 + omega");
  if (!(c.v1 > c.omega)) fail("v1 must exceed omega");
  if (!(c.v2 > c.omega)) fail("v2 must exceed omega");
  for (double p : {c.p_mu, c.p_v1, c.p_v2, c.p_omega})
    if (!(p > 0.0 && p < 1.0)) fail("selection probabilities must be in (0,1)");
  if (std::abs(c.p_mu + c.p_v1 + c.p_v2 + c.p_omega - 1.0) > 1e-9)
    fail("selection probabilities must sum to 1");
  if (!(c.p_z_given_omega > 0.0 && c.p_z_given_omega < 1.0))
    fail("p_z_given_omega must be in (0,1)");
  if (!(c.p_z_bob > 0.0 && c.p_z_bob < 1.0)) fail("p_z_bob must be in (0,1)");
}

struct ObservedCounts {
  double n_z_mu = 0.0, n_z_v1 = 0.0, n_z_omega = 0.0;   // sifted Z detections
  double m_z_mu = 0.0, m_z_v1 = 0.0, m_z_omega = 0.0;   // Z bit errors
  double n_x_v2 = 0.0, n_x_omega = 0.0;                 // sifted X detections
  double m_x_v2 = 0.0, m_x_omega = 0.0;                 // X bit errors

  double n_z() const { return n_z_mu + n_z_v1 + n_z_omega; }
  double m_z() const { return m_z_mu + m_z_v1 + m_z_omega; }
  double n_x() const { return n_x_v2 + n_x_omega; }
  double m_x() const { return m_x_v2 + m_x_omega; }
  bool all_zero() const { return n_z() == 0.0 && n_x() == 0.0; }
};

inline void validate(const ObservedCounts& c) {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("ObservedCounts: " + msg);
  };
  const double n[] = {c.n_z_mu, c.n_z_v1, c.n_z_omega, c.n_x_v2, c.n_x_omega};
  const double m[] = {c.m_z_mu, c.m_z_v1, c.m_z_omega, c.m_x_v2, c.m_x_omega};
  for (int i = 0; i < 5; ++i) {
    if (!(n[i] >= 0.0 && m[i] >= 0.0)) fail("counts must be non-negative");
    if (m[i] > n[i]) fail("error count exceeds detection count");
  }
}

struct SecurityParams {
  double eps_cor = 1e-15;  // correctness failure probability
  double kappa = 1e-15;    // secrecy leakage per final key bit: eps_sec = kappa*l
  double f_ec = 1.16;      // error-correction efficiency
  int error_terms = 17;    // 17 (four-intensity) or 21 (three-intensity)
};

inline void validate(const SecurityParams& s) {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("SecurityParams: " + msg);
  };
  if (!(s.eps_cor > 0.0 && s.eps_cor < 1.0)) fail("eps_cor must be in (0,1)");
  if (!(s.kappa > 0.0 && s.kappa < 1.0)) fail("kappa must be in (0,1)");
  if (!(s.f_ec >= 1.0)) fail("f_ec must be >= 1");
  if (s.error_terms != 17 && s.error_terms != 21)
    fail("error_terms must be 17 or 21");
}

// ---------------------------------------------------------------------------
// report types

struct EvalFlags {
  bool s_z0_clamped = false;
  bool s_z1_clamped = false;
  bool s_x1_clamped = false;
  bool v_x1_clamped_low = false;
  bool v_x1_clamped_high = false;
  bool e1_capped = false;
  bool b_regularized = false;   // zero error ratio replaced by half an error
  bool b_degenerate = false;    // error ratio >= 1, phase error pinned to 1/2
  bool fp_converged = true;
  int fp_iterations = 0;
};

struct KeyRateReport {
  double s_z0 = 0.0;
  double s_z1 = 0.0;
  double s_x1 = 0.0;
  double v_x1 = 0.0;
  double e1_pz = 0.0;
  double lambda_ec = 0.0;
  double raw_l = 0.0;     // pre-floor, pre-clamp key length (may be negative)
  long long l = 0;        // floor(raw_l) clamped at 0
  double rate = 0.0;      // l / N
  double eps_sec = 0.0;   // secrecy parameter the report was evaluated at
  bool feasible = false;
  EvalFlags flags;
};

struct EvalOptions {
  // When set, evaluate at this fixed eps_sec instead of solving eps = kappa*l.
  std::optional<double> fixed_eps_sec;
  // When false, all statistical deviation terms are forced to zero
  // (diagnostic / oracle mode).
  bool deviations = true;
};

// ---------------------------------------------------------------------------
// elementary functions

template <class Real = double>
Real binary_entropy(Real x) {
  if (!(x >= Real(0) && x <= Real(1)))
    throw std::domain_error("binary_entropy: argument outside [0,1]");
  if (x <= Real(0) || x >= Real(1)) return Real(0);
  return -x * std::log2(x) - (Real(1) - x) * std::log2(Real(1) - x);
}

namespace detail {

// entropy without the domain throw, for internal pipeline use
template <class Real>
Real h2(Real x) {
  if (x <= Real(0) || x >= Real(1)) return Real(0);
  return -x * std::log2(x) - (Real(1) - x) * std::log2(Real(1) - x);
}

}  // namespace detail

// tau(cfg, basis, i): probability that Alice emits an i-photon pulse in the
// given basis. Z sums over {mu, v1, omega}, X over {v2, omega}; mu and v1
// are Z-only, v2 is X-only, omega splits by p_z_given_omega.
inline double tau(const SourceConfig& c, Basis basis, int i) {
  if (i < 0) throw std::domain_error("tau: photon number must be >= 0");
  double fact = 1.0;
  for (int j = 2; j <= i; ++j) fact *= j;
  auto term = [&](double k, double p_select, double p_basis) {
    return p_select * p_basis * std::exp(-k) * std::pow(k, i) / fact;
  };
  if (basis == Basis::z)
    return term(c.mu, c.p_mu, 1.0) + term(c.v1, c.p_v1, 1.0) +
           term(c.omega, c.p_omega, c.p_z_given_omega);
  return term(c.v2, c.p_v2, 1.0) +
         term(c.omega, c.p_omega, 1.0 - c.p_z_given_omega);
}

// ---------------------------------------------------------------------------
// concentration bounds

template <class Real = double>
Real hoeffding_deviation(Real total, Real eps_sec, int terms) {
  if (eps_sec > Real(terms))
    throw std::domain_error("hoeffding_deviation: eps_sec exceeds terms");
  return std::sqrt(total / Real(2) * std::log(Real(terms) / eps_sec));
}

enum class Sign { plus, minus };

// Finite-statistics bound on the expected count for one intensity cell:
// (e^k / (P_k * P_{W|k})) * [count +- sqrt(total/2 * ln(terms/eps))].
inline double n_bound(double count, double total, double k, double p_k,
                      double p_z_given_k, double eps_sec, int terms,
                      Sign sign) {
  const double dev = hoeffding_deviation(total, eps_sec, terms);
  const double signed_dev = sign == Sign::plus ? dev : -dev;
  return std::exp(k) / (p_k * p_z_given_k) * (count + signed_dev);
}

// identical shape for error counts, with X-basis conditionals
inline double m_bound(double count, double total, double k, double p_k,
                      double p_x_given_k, double eps_sec, int terms,
                      Sign sign) {
  return n_bound(count, total, k, p_k, p_x_given_k, eps_sec, terms, sign);
}

namespace detail {

struct DecoyRow {
  double k = 0.0;        // intensity
  double p_k = 0.0;      // selection probability
  double p_w = 0.0;      // basis conditional P_{W|k}
  double count = 0.0;    // sifted counts in basis W for this intensity
};

inline double tau_rows(const DecoyRow* rows, int n_rows, int i) {
  double fact = 1.0;
  for (int j = 2; j <= i; ++j) fact *= j;
  double sum = 0.0;
  for (int r = 0; r < n_rows; ++r)
    sum += rows[r].p_k * rows[r].p_w * std::exp(-rows[r].k) *
           std::pow(rows[r].k, i) / fact;
  return sum;
}

// raw (unclamped) vacuum-event bound from a {strong, weak, weakest} chain
inline double decoy_s0_raw(const DecoyRow& weak, const DecoyRow& weakest,
                           double tau0, double total, double eps_sec,
                           int terms) {
  const double kv = weak.k, kom = weakest.k;
  const double minus =
      n_bound(weakest.count, total, kom, weakest.p_k, weakest.p_w, eps_sec,
              terms, Sign::minus);
  const double plus = n_bound(weak.count, total, kv, weak.p_k, weak.p_w,
                              eps_sec, terms, Sign::plus);
  return tau0 * (kv * minus - kom * plus) / (kv - kom);
}

// raw (unclamped) single-photon bound; takes the clamped s0 via s0/tau0
inline double decoy_s1_raw(const DecoyRow& strong, const DecoyRow& weak,
                           const DecoyRow& weakest, double tau1,
                           double s0_over_tau0, double total, double eps_sec,
                           int terms) {
  const double kmu = strong.k, kv = weak.k, kom = weakest.k;
  const double denom = kmu * (kv - kom) - kv * kv + kom * kom;
  if (!(denom > 0.0))
    throw std::domain_error("decoy_s1: non-positive denominator");
  const double weak_minus = n_bound(weak.count, total, kv, weak.p_k, weak.p_w,
                                    eps_sec, terms, Sign::minus);
  const double weakest_plus =
      n_bound(weakest.count, total, kom, weakest.p_k, weakest.p_w, eps_sec,
              terms, Sign::plus);
  const double strong_plus = n_bound(strong.count, total, kmu, strong.p_k,
                                     strong.p_w, eps_sec, terms, Sign::plus);
  return tau1 * kmu *
         (weak_minus - weakest_plus -
          (kv * kv - kom * kom) / (kmu * kmu) * (strong_plus - s0_over_tau0)) /
         denom;
}

struct DecoyEstimate {
  double s0 = 0.0;
  double s1 = 0.0;
  double tau0 = 0.0;
  double tau1 = 0.0;
  bool s0_clamped = false;
  bool s1_clamped = false;
};

// Vacuum and single-photon event bounds from a three-intensity decoy chain
// {strong, weak, weakest}. `total` is the basis-wide count under the
// deviation square root; `dev_on` = false forces zero deviations.
inline DecoyEstimate decoy_s0_s1(const DecoyRow& strong, const DecoyRow& weak,
                                 const DecoyRow& weakest, double total,
                                 double eps_sec, int terms, bool dev_on) {
  DecoyEstimate out;
  const DecoyRow rows[] = {strong, weak, weakest};
  out.tau0 = tau_rows(rows, 3, 0);
  out.tau1 = tau_rows(rows, 3, 1);
  const double eps = dev_on ? eps_sec : double(terms);
  const double s0_raw =
      decoy_s0_raw(weak, weakest, out.tau0, total, eps, terms);
  out.s0 = std::max(s0_raw, 0.0);
  out.s0_clamped = s0_raw < 0.0;
  const double s1_raw = decoy_s1_raw(strong, weak, weakest, out.tau1,
                                     out.s0 / out.tau0, total, eps, terms);
  out.s1 = std::max(s1_raw, 0.0);
  out.s1_clamped = s1_raw < 0.0;
  return out;
}

inline DecoyRow z_row_mu(const SourceConfig& c, const ObservedCounts& n) {
  return {c.mu, c.p_mu, 1.0, n.n_z_mu};
}
inline DecoyRow z_row_v1(const SourceConfig& c, const ObservedCounts& n) {
  return {c.v1, c.p_v1, 1.0, n.n_z_v1};
}
inline DecoyRow z_row_omega(const SourceConfig& c, const ObservedCounts& n) {
  return {c.omega, c.p_omega, c.p_z_given_omega, n.n_z_omega};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// event-count estimators

// lower bound on vacuum events in Z
inline double s_z0_lower(const SourceConfig& cfg, const ObservedCounts& counts,
                         double eps_sec, int terms,
                         EvalFlags* flags = nullptr) {
  const double raw = detail::decoy_s0_raw(
      detail::z_row_v1(cfg, counts), detail::z_row_omega(cfg, counts),
      tau(cfg, Basis::z, 0), counts.n_z(), eps_sec, terms);
  if (flags) flags->s_z0_clamped = raw < 0.0;
  return std::max(raw, 0.0);
}

// lower bound on single-photon events in Z; takes the (already clamped)
// vacuum bound as input
inline double s_z1_lower(const SourceConfig& cfg, const ObservedCounts& counts,
                         double s_z0, double eps_sec, int terms,
                         EvalFlags* flags = nullptr) {
  const double raw = detail::decoy_s1_raw(
      detail::z_row_mu(cfg, counts), detail::z_row_v1(cfg, counts),
      detail::z_row_omega(cfg, counts), tau(cfg, Basis::z, 1),
      s_z0 / tau(cfg, Basis::z, 0), counts.n_z(), eps_sec, terms);
  if (flags) flags->s_z1_clamped = raw < 0.0;
  return std::max(raw, 0.0);
}

// ---------------------------------------------------------------------------
// random-sampling-without-replacement bound (cross-basis transfer)

template <class Real = double>
Real sampling_c(Real x, Real y, Real z) {
  return std::exp(Real(1) / (Real(8) * (x + y)) + Real(1) / (Real(12) * y) -
                  Real(1) / (Real(12) * y * z + Real(1)) -
                  Real(1) / (Real(12) * y * (Real(1) - z) + Real(1)));
}

template <class Real = double>
Real sampling_g(Real x, Real y, Real z, Real eps) {
  const Real arg = std::sqrt(x + y) * sampling_c(x, y, z) /
                   (std::sqrt(Real(2) * std::numbers::pi_v<Real> * x * y * z *
                              (Real(1) - z)) *
                    eps);
  return std::sqrt(Real(2) * (x + y) * z * (Real(1) - z) / (x * y) *
                   std::max(std::log(arg), Real(0)));
}

// lower bound on single-photon events in X, transferred from the Z estimate
inline double s_x1_lower(const SourceConfig& cfg, double n_pulses, double s_z1,
                         double eps_sec, int terms, EvalFlags* flags = nullptr,
                         bool deviations = true) {
  const double n1z = n_pulses * tau(cfg, Basis::z, 1) * cfg.p_z_bob;
  const double n1x = n_pulses * tau(cfg, Basis::x, 1) * (1.0 - cfg.p_z_bob);
  if (!(s_z1 > 0.0 && n1z > 0.0 && n1x > 0.0))
    throw std::domain_error("s_x1_lower: non-positive inputs");
  const double z = s_z1 / n1z;
  if (!(z > 0.0 && z < 1.0))
    throw std::domain_error("s_x1_lower: transfer fraction outside (0,1)");
  const double dev =
      deviations ? sampling_g(n1x, n1z, z, eps_sec / terms) : 0.0;
  const double raw = n1x * z - 2.0 * n1x * dev;
  if (flags) flags->s_x1_clamped = raw < 0.0;
  return std::max(raw, 0.0);
}

// upper bound on single-photon bit errors in X
inline double v_x1_upper(const SourceConfig& cfg, const ObservedCounts& counts,
                         double eps_sec, int terms,
                         EvalFlags* flags = nullptr) {
  const double m_x = counts.m_x();
  const double tau_x1 = tau(cfg, Basis::x, 1);
  const double plus = m_bound(counts.m_x_v2, m_x, cfg.v2, cfg.p_v2, 1.0,
                              eps_sec, terms, Sign::plus);
  const double minus =
      m_bound(counts.m_x_omega, m_x, cfg.omega, cfg.p_omega,
              1.0 - cfg.p_z_given_omega, eps_sec, terms, Sign::minus);
  const double raw = tau_x1 * (plus - minus) / (cfg.v2 - cfg.omega);
  if (flags) {
    flags->v_x1_clamped_low = raw < 0.0;
    flags->v_x1_clamped_high = raw > m_x;
  }
  return std::clamp(raw, 0.0, m_x);
}

// ---------------------------------------------------------------------------
// phase error rate

template <class Real = double>
Real gamma_bound(Real a, Real b, Real c, Real d) {
  const Real ln2 = std::numbers::ln2_v<Real>;
  const Real arg = (c + d) / (c * d * (Real(1) - b) * b * a * a);
  return std::sqrt((c + d) * (Real(1) - b) * b / (c * d * ln2) *
                   std::max(std::log2(arg), Real(0)));
}

// upper bound on the single-photon phase error rate in Z, capped at 1/2
inline double phase_error_rate(double s_x1, double v_x1, double s_z1,
                               double eps_sec, int terms,
                               EvalFlags* flags = nullptr,
                               bool deviations = true) {
  if (!(s_x1 > 0.0 && s_z1 > 0.0))
    throw std::domain_error("phase_error_rate: non-positive event counts");
  const double b = v_x1 / s_x1;
  if (b >= 1.0) {
    if (flags) {
      flags->b_degenerate = true;
      flags->e1_capped = true;
    }
    return 0.5;
  }
  double b_gamma = b;
  if (b == 0.0) {
    b_gamma = 1.0 / (2.0 * s_x1);  // half an error, keeps gamma meaningful
    if (flags) flags->b_regularized = true;
  }
  const double gamma =
      deviations ? gamma_bound(eps_sec / terms, b_gamma, s_x1, s_z1) : 0.0;
  const double raw = b + gamma;
  if (flags) flags->e1_capped = raw > 0.5;
  return std::min(raw, 0.5);
}

// ---------------------------------------------------------------------------
// key length

inline double lambda_ec(double n_z, double e_z, double f_ec) {
  if (!(e_z >= 0.0 && e_z <= 0.5))
    throw std::domain_error("lambda_ec: error rate outside [0, 1/2]");
  return f_ec * n_z * detail::h2(e_z);
}

inline double key_length_raw(double s_z0, double s_z1, double e1_pz,
                             double lambda, double eps_sec, double eps_cor,
                             int terms) {
  return s_z0 + s_z1 * (1.0 - detail::h2(e1_pz)) - lambda -
         6.0 * std::log2(terms / eps_sec) - std::log2(2.0 / eps_cor);
}

inline long long key_length(double s_z0, double s_z1, double e1_pz,
                            double lambda, double eps_sec, double eps_cor,
                            int terms) {
  const double raw =
      key_length_raw(s_z0, s_z1, e1_pz, lambda, eps_sec, eps_cor, terms);
  return raw <= 0.0 ? 0 : static_cast<long long>(std::floor(raw));
}

// ---------------------------------------------------------------------------
// full pipeline

namespace detail {

inline KeyRateReport infeasible_report(double eps_sec, const EvalFlags& flags) {
  KeyRateReport r;
  r.eps_sec = eps_sec;
  r.feasible = false;
  r.flags = flags;
  return r;
}

// one pass of the four-intensity chain at a fixed eps_sec
inline KeyRateReport evaluate_once(const SourceConfig& cfg,
                                   const ObservedCounts& counts,
                                   double n_pulses, const SecurityParams& sec,
                                   double eps_sec, bool deviations) {
  KeyRateReport r;
  r.eps_sec = eps_sec;
  const int terms = sec.error_terms;
  const double eps = deviations ? eps_sec : double(terms);

  r.s_z0 = s_z0_lower(cfg, counts, eps, terms, &r.flags);
  r.s_z1 = s_z1_lower(cfg, counts, r.s_z0, eps, terms, &r.flags);
  if (r.s_z1 <= 0.0) return infeasible_report(eps_sec, r.flags);

  const double n1z = n_pulses * tau(cfg, Basis::z, 1) * cfg.p_z_bob;
  const double z = n1z > 0.0 ? r.s_z1 / n1z : 0.0;
  if (!(z > 0.0 && z < 1.0)) return infeasible_report(eps_sec, r.flags);
  r.s_x1 = s_x1_lower(cfg, n_pulses, r.s_z1, eps_sec, terms, &r.flags,
                      deviations);
  r.v_x1 = v_x1_upper(cfg, counts, eps, terms, &r.flags);
  if (r.s_x1 <= 0.0) return infeasible_report(eps_sec, r.flags);

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

// Resolves eps_sec = kappa * l by fixed-point iteration: l enters only
// logarithmically, so the map contracts rapidly. Non-convergence within
// max_fp_iterations is reported as infeasible.
inline constexpr int max_fp_iterations = 50;

template <class EvalFn>
KeyRateReport solve_fixed_point(EvalFn&& eval_at, double kappa,
                                double n_pulses) {
  double eps = kappa * n_pulses * 1e-3;
  double last_l = 0.0;
  bool have_last = false;
  for (int it = 1; it <= max_fp_iterations; ++it) {
    KeyRateReport r = eval_at(eps);
    r.flags.fp_iterations = it;
    if (!r.feasible) {
      r.flags.fp_converged = false;
      return r;
    }
    if (have_last && std::abs(r.raw_l - last_l) <= 1.0) {
      r.flags.fp_converged = true;
      return r;
    }
    last_l = r.raw_l;
    have_last = true;
    eps = kappa * std::max(r.raw_l, 1.0);
  }
  EvalFlags flags;
  flags.fp_converged = false;
  flags.fp_iterations = max_fp_iterations;
  return infeasible_report(eps, flags);
}

}  // namespace detail

// Full four-intensity evaluation. Solves the eps_sec = kappa*l coupling
// unless opts.fixed_eps_sec is given. Degenerate intermediates yield
// feasible = false with l = 0 and rate = 0.
inline KeyRateReport evaluate(const SourceConfig& cfg,
                              const ObservedCounts& counts, double n_pulses,
                              const SecurityParams& sec,
                              const EvalOptions& opts = {}) {
  validate(cfg);
  validate(sec);
  validate(counts);
  if (!(n_pulses >= 1.0))
    throw std::invalid_argument("evaluate: n_pulses must be >= 1");
  if (counts.all_zero()) {
    KeyRateReport r;
    r.eps_sec = opts.fixed_eps_sec.value_or(sec.kappa);
    return r;  // feasible = false, rate 0
  }
  if (opts.fixed_eps_sec)
    return detail::evaluate_once(cfg, counts, n_pulses, sec,
                                 *opts.fixed_eps_sec, opts.deviations);
  return detail::solve_fixed_point(
      [&](double eps) {
        return detail::evaluate_once(cfg, counts, n_pulses, sec, eps,
                                     opts.deviations);
      },
      sec.kappa, n_pulses);
}

}  // namespace qkd
