#pragma once

// Derivative-free maximization of the secret key rate over the free source
// parameters: multi-start Nelder-Mead in an unconstrained reparameterization
// (log-space sigmoid boxes for intensities, softmax for the selection
// simplex), deterministic per seed, warm-started across scan grids.
//
// The search objective is the pre-floor key length (negative values allowed)
// so the simplex sees a slope even where the reported rate is zero; the
// returned result is re-evaluated through the standard clamped pipeline.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <vector>

#include "qkd/baseline3.hpp"
#include "qkd/bounds.hpp"
#include "qkd/channel.hpp"

namespace qkd {

enum class Protocol { three, four };

struct OptProblem {
  SystemParams sys;
  SecurityParams sec;        // error_terms is overridden per protocol
  Protocol protocol = Protocol::four;
  double omega = 2e-4;       // lowest intensity, fixed unless omega_free
  bool omega_free = false;
  int restarts = 24;         // low-discrepancy restarts on top of anchors
  int max_evals_per_restart = 6000;
};

struct OptResult {
  Protocol protocol = Protocol::four;
  bool feasible = false;
  double rate = 0.0;
  long long key_length = 0;
  double raw_l = 0.0;
  SourceConfig cfg;          // populated for Protocol::four
  SourceConfig3 cfg3;        // populated for Protocol::three
  KeyRateReport report;
  long long evaluations = 0;
  int restarts_run = 0;
  std::vector<double> restart_bests;   // best raw_l after each restart
  std::vector<double> best_x;          // transform-space optimum (warm starts)
};

namespace opt_detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double u) {
  const double c = std::clamp(u, 1e-12, 1.0 - 1e-12);
  return std::log(c / (1.0 - c));
}

// box bounds, log-space for intensities
inline constexpr double mu_log_lo = -2.9957322735539909;   // ln 0.05
inline constexpr double mu_log_hi = 0.4054651081081644;    // ln 1.5
inline constexpr double v_log_lo = -7.6009024595420823;    // ln 5e-4
inline constexpr double v_log_hi = -0.2231435513142097;    // ln 0.8
inline constexpr double om_log_lo = -13.815510557964274;   // ln 1e-6
inline constexpr double om_log_hi = -5.2983173665480363;   // ln 5e-3
inline constexpr double pz_lo = 0.05;
inline constexpr double pz_hi = 0.999;

inline double box_exp(double x, double lo, double hi) {
  return std::exp(lo + sigmoid(x) * (hi - lo));
}

inline double box_exp_inv(double k, double lo, double hi) {
  return logit((std::log(k) - lo) / (hi - lo));
}

// last simplex weight is pinned to logit 0
template <int N>
std::array<double, N + 1> softmax_pinned(const double* x) {
  std::array<double, N + 1> e{};
  double sum = 1.0;  // pinned exp(0)
  for (int i = 0; i < N; ++i) {
    e[i] = std::exp(std::clamp(x[i], -40.0, 40.0));
    sum += e[i];
  }
  for (int i = 0; i < N; ++i) e[i] /= sum;
  e[N] = 1.0 / sum;
  return e;
}

inline SourceConfig unpack4(const std::vector<double>& x, double omega,
                            bool omega_free) {
  const auto p = softmax_pinned<3>(&x[3]);
  const double om =
      omega_free ? box_exp(x[7], om_log_lo, om_log_hi) : omega;
  SourceConfig c;
  c.mu = box_exp(x[0], mu_log_lo, mu_log_hi);
  c.v1 = box_exp(x[1], v_log_lo, v_log_hi);
  c.v2 = box_exp(x[2], v_log_lo, v_log_hi);
  c.omega = om;
  c.p_mu = p[0];
  c.p_v1 = p[1];
  c.p_v2 = p[2];
  c.p_omega = p[3];
  c.p_z_given_omega = pz_lo + sigmoid(x[6]) * (pz_hi - pz_lo);
  c.p_z_bob = c.p_z_given_omega;
  return c;
}

inline std::vector<double> pack4(const SourceConfig& c, bool omega_free) {
  std::vector<double> x(omega_free ? 8 : 7);
  x[0] = box_exp_inv(c.mu, mu_log_lo, mu_log_hi);
  x[1] = box_exp_inv(c.v1, v_log_lo, v_log_hi);
  x[2] = box_exp_inv(c.v2, v_log_lo, v_log_hi);
  x[3] = std::log(c.p_mu / c.p_omega);
  x[4] = std::log(c.p_v1 / c.p_omega);
  x[5] = std::log(c.p_v2 / c.p_omega);
  x[6] = logit((c.p_z_bob - pz_lo) / (pz_hi - pz_lo));
  if (omega_free) x[7] = box_exp_inv(c.omega, om_log_lo, om_log_hi);
  return x;
}

inline SourceConfig3 unpack3(const std::vector<double>& x, double omega,
                             bool omega_free) {
  const auto p = softmax_pinned<2>(&x[2]);
  const double om =
      omega_free ? box_exp(x[5], om_log_lo, om_log_hi) : omega;
  SourceConfig3 c;
  c.mu = box_exp(x[0], mu_log_lo, mu_log_hi);
  c.v = box_exp(x[1], v_log_lo, v_log_hi);
  c.omega = om;
  c.p_mu = p[0];
  c.p_v = p[1];
  c.p_omega = p[2];
  c.p_z_alice = pz_lo + sigmoid(x[4]) * (pz_hi - pz_lo);
  c.p_z_bob = c.p_z_alice;
  return c;
}

inline std::vector<double> pack3(const SourceConfig3& c, bool omega_free) {
  std::vector<double> x(omega_free ? 6 : 5);
  x[0] = box_exp_inv(c.mu, mu_log_lo, mu_log_hi);
  x[1] = box_exp_inv(c.v, v_log_lo, v_log_hi);
  x[2] = std::log(c.p_mu / c.p_omega);
  x[3] = std::log(c.p_v / c.p_omega);
  x[4] = logit((c.p_z_alice - pz_lo) / (pz_hi - pz_lo));
  if (omega_free) x[5] = box_exp_inv(c.omega, om_log_lo, om_log_hi);
  return x;
}

inline constexpr double penalty_base = -1e9;

// smooth penalty sloping back toward the admissible intensity ordering;
// returns 0 when mu > v_strongest + omega and every v exceeds omega
inline double ordering_violation(double mu, double v_strongest, double omega,
                                 std::initializer_list<double> vs) {
  double viol = 0.0;
  if (!(mu > v_strongest + omega)) viol += 1.0 + v_strongest + omega - mu;
  for (double v : vs)
    if (!(v > omega)) viol += 1.0 + omega - v;
  return viol;
}

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace opt_detail

// radical-inverse low-discrepancy sequence
inline double halton(uint64_t index, uint64_t base) {
  double f = 1.0, r = 0.0;
  for (uint64_t i = index; i > 0; i /= base) {
    f /= static_cast<double>(base);
    r += f * static_cast<double>(i % base);
  }
  return r;
}

struct NelderMeadOptions {
  int max_evals = 6000;
  double f_tol = 1e-10;
  double x_tol = 1e-10;
  double initial_step = 0.25;
};

struct NelderMeadResult {
  std::vector<double> x;
  double f = std::numeric_limits<double>::infinity();
  long long evaluations = 0;
};

// standard downhill simplex, minimizes f; deterministic
template <class F>
NelderMeadResult nelder_mead(F&& f, std::vector<double> x0,
                             const NelderMeadOptions& opt = {}) {
  const size_t n = x0.size();
  long long evals = 0;
  auto eval = [&](const std::vector<double>& x) {
    ++evals;
    return f(x);
  };

  std::vector<std::vector<double>> simplex(n + 1, x0);
  std::vector<double> fx(n + 1);
  for (size_t i = 0; i < n; ++i) simplex[i + 1][i] += opt.initial_step;
  for (size_t i = 0; i <= n; ++i) fx[i] = eval(simplex[i]);

  std::vector<size_t> order(n + 1);
  for (size_t i = 0; i <= n; ++i) order[i] = i;

  while (evals < opt.max_evals) {
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return fx[a] < fx[b]; });
    const size_t best = order[0], worst = order[n], second = order[n - 1];

    double fspread = fx[worst] - fx[best];
    double xspread = 0.0;
    for (size_t i = 0; i < n; ++i)
      xspread = std::max(
          xspread, std::abs(simplex[worst][i] - simplex[best][i]));
    if (fspread <= opt.f_tol && xspread <= opt.x_tol) break;

    std::vector<double> centroid(n, 0.0);
    for (size_t i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (size_t d = 0; d < n; ++d) centroid[d] += simplex[i][d];
    }
    for (size_t d = 0; d < n; ++d) centroid[d] /= static_cast<double>(n);

    auto blend = [&](double t) {
      std::vector<double> x(n);
      for (size_t d = 0; d < n; ++d)
        x[d] = centroid[d] + t * (simplex[worst][d] - centroid[d]);
      return x;
    };

    const auto reflected = blend(-1.0);
    const double fr = eval(reflected);
    if (fr < fx[best]) {
      const auto expanded = blend(-2.0);
      const double fe = eval(expanded);
      if (fe < fr) {
        simplex[worst] = expanded;
        fx[worst] = fe;
      } else {
        simplex[worst] = reflected;
        fx[worst] = fr;
      }
      continue;
    }
    if (fr < fx[second]) {
      simplex[worst] = reflected;
      fx[worst] = fr;
      continue;
    }
    const auto contracted = blend(fr < fx[worst] ? -0.5 : 0.5);
    const double fc = eval(contracted);
    if (fc < std::min(fr, fx[worst])) {
      simplex[worst] = contracted;
      fx[worst] = fc;
      continue;
    }
    for (size_t i = 0; i <= n; ++i) {  // shrink toward the best vertex
      if (i == best) continue;
      for (size_t d = 0; d < n; ++d)
        simplex[i][d] = simplex[best][d] + 0.5 * (simplex[i][d] - simplex[best][d]);
      fx[i] = eval(simplex[i]);
    }
  }

  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return fx[a] < fx[b]; });
  return {simplex[order[0]], fx[order[0]], evals};
}

namespace opt_detail {

// anchor operating points: known-good optima shapes for warm starts
inline std::vector<std::vector<double>> anchor_starts(Protocol protocol,
                                                      double omega,
                                                      bool omega_free) {
  std::vector<std::vector<double>> starts;
  if (protocol == Protocol::four) {
    starts.push_back(pack4(
        SourceConfig::from_free(0.47, 0.183, 0.32, omega, 0.16, 0.407, 0.22,
                                0.82),
        omega_free));
    starts.push_back(pack4(
        SourceConfig::from_free(0.65, 0.1, 0.17, omega, 0.5, 0.25, 0.15, 0.94),
        omega_free));
  } else {
    starts.push_back(pack3(
        SourceConfig3::from_free(0.551, 0.188, omega, 0.127, 0.599, 0.669),
        omega_free));
    starts.push_back(pack3(
        SourceConfig3::from_free(0.65, 0.13, omega, 0.5, 0.36, 0.92),
        omega_free));
  }
  return starts;
}

}  // namespace opt_detail

// Multi-start maximization of the key rate. Deterministic per seed; the
// restart sequence is prefix-stable, so increasing the restart budget can
// only improve the returned best.
inline OptResult optimize(const OptProblem& prob, uint64_t seed,
                          const std::vector<std::vector<double>>& warm_starts
                          = {}) {
  validate(prob.sys);
  const bool four = prob.protocol == Protocol::four;
  const size_t dim = (four ? 7 : 5) + (prob.omega_free ? 1 : 0);
  SecurityParams sec = prob.sec;
  sec.error_terms = four ? 17 : 21;

  long long evaluations = 0;
  auto objective = [&](const std::vector<double>& x) -> double {
    ++evaluations;
    if (four) {
      const SourceConfig c = opt_detail::unpack4(x, prob.omega,
                                                 prob.omega_free);
      const double viol =
          opt_detail::ordering_violation(c.mu, c.v1, c.omega, {c.v1, c.v2});
      if (viol > 0.0) return -opt_detail::penalty_base * viol;
      const auto counts = expected_counts(c, prob.sys);
      const auto r = evaluate(c, counts, prob.sys.n_pulses, sec);
      return r.feasible ? -r.raw_l : -opt_detail::penalty_base * 1e-3;
    }
    const SourceConfig3 c = opt_detail::unpack3(x, prob.omega,
                                                prob.omega_free);
    const double viol =
        opt_detail::ordering_violation(c.mu, c.v, c.omega, {c.v});
    if (viol > 0.0) return -opt_detail::penalty_base * viol;
    const auto counts = expected_counts3(c, prob.sys);
    const auto r = evaluate3(c, counts, prob.sys.n_pulses, sec);
    return r.feasible ? -r.raw_l : -opt_detail::penalty_base * 1e-3;
  };

  // start list: anchors, caller-provided warm starts, low-discrepancy points
  std::vector<std::vector<double>> starts =
      opt_detail::anchor_starts(prob.protocol, prob.omega, prob.omega_free);
  for (const auto& w : warm_starts)
    if (w.size() == dim) starts.push_back(w);
  static constexpr uint64_t bases[] = {2, 3, 5, 7, 11, 13, 17, 19};
  uint64_t state = seed;
  const uint64_t offset = 1 + (opt_detail::splitmix64(state) & 1023);
  for (int i = 0; i < prob.restarts; ++i) {
    std::vector<double> x(dim);
    for (size_t d = 0; d < dim; ++d)
      x[d] = opt_detail::logit(
          halton(offset + static_cast<uint64_t>(i), bases[d]));
    starts.push_back(std::move(x));
  }

  NelderMeadOptions nm;
  nm.max_evals = prob.max_evals_per_restart;
  OptResult out;
  out.protocol = prob.protocol;
  double best_f = std::numeric_limits<double>::infinity();
  std::vector<double> best_x;
  for (const auto& s : starts) {
    const auto r = nelder_mead(objective, s, nm);
    if (r.f < best_f) {
      best_f = r.f;
      best_x = r.x;
    }
    out.restart_bests.push_back(-best_f);
    ++out.restarts_run;
  }
  // polish the incumbent with a tighter budget
  {
    NelderMeadOptions polish = nm;
    polish.initial_step = 0.02;
    polish.max_evals = nm.max_evals * 2;
    const auto r = nelder_mead(objective, best_x, polish);
    if (r.f < best_f) {
      best_f = r.f;
      best_x = r.x;
    }
  }
  out.evaluations = evaluations;
  out.best_x = best_x;
  out.raw_l = -best_f;

  // re-evaluate the incumbent through the reporting pipeline
  const auto fallback = opt_detail::anchor_starts(prob.protocol, prob.omega,
                                                  prob.omega_free)[0];
  if (four) {
    out.cfg = opt_detail::unpack4(best_x, prob.omega, prob.omega_free);
    if (opt_detail::ordering_violation(out.cfg.mu, out.cfg.v1, out.cfg.omega,
                                       {out.cfg.v1, out.cfg.v2}) == 0.0) {
      const auto counts = expected_counts(out.cfg, prob.sys);
      out.report = evaluate(out.cfg, counts, prob.sys.n_pulses, sec);
    } else {
      out.cfg = opt_detail::unpack4(fallback, prob.omega, prob.omega_free);
    }
  } else {
    out.cfg3 = opt_detail::unpack3(best_x, prob.omega, prob.omega_free);
    if (opt_detail::ordering_violation(out.cfg3.mu, out.cfg3.v,
                                       out.cfg3.omega, {out.cfg3.v}) == 0.0) {
      const auto counts = expected_counts3(out.cfg3, prob.sys);
      out.report = evaluate3(out.cfg3, counts, prob.sys.n_pulses, sec);
    } else {
      out.cfg3 = opt_detail::unpack3(fallback, prob.omega, prob.omega_free);
    }
  }
  out.feasible = out.report.feasible && out.report.l > 0;
  out.key_length = out.report.l;
  out.rate = out.report.rate;
  return out;
}

struct ScanPoint {
  double distance_km = 0.0;
  double omega = 2e-4;
  OptResult result;
};

// Optimizes over a (distance x omega) grid with warm starts chained from the
// previous grid point, then a reverse polish pass. Per-point failures are
// recorded in the row, never thrown.
inline std::vector<ScanPoint> scan(const OptProblem& prob_template,
                                   const std::vector<double>& distances,
                                   const std::vector<double>& omegas,
                                   uint64_t seed) {
  std::vector<double> oms = omegas.empty()
                                ? std::vector<double>{prob_template.omega}
                                : omegas;
  std::vector<ScanPoint> points;
  for (double d : distances)
    for (double om : oms) points.push_back({d, om, {}});

  std::vector<std::vector<double>> warm;
  for (auto& pt : points) {
    OptProblem prob = prob_template;
    prob.sys.length_km = pt.distance_km;
    prob.omega = pt.omega;
    pt.result = optimize(prob, seed, warm);
    warm.clear();
    if (!pt.result.best_x.empty()) warm.push_back(pt.result.best_x);
  }
  // reverse pass: offer each point its successor's optimum
  for (size_t i = points.size(); i-- > 1;) {
    auto& pt = points[i - 1];
    OptProblem prob = prob_template;
    prob.sys.length_km = pt.distance_km;
    prob.omega = pt.omega;
    prob.restarts = 0;
    const auto refined =
        optimize(prob, seed, {points[i].result.best_x, pt.result.best_x});
    if (refined.raw_l > pt.result.raw_l) pt.result = refined;
  }
  return points;
}

}  // namespace qkd
