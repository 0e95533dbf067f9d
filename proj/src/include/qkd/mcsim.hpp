#pragma once

// Event-level Monte-Carlo of the four-intensity source against the threshold
// detector model, plus a statistical validator that replays the estimator
// chain on simulated counts and scores it against the per-event ground truth.
//
// Speed notes: the per-pulse fast path is two uniform draws (joint
// cell/basis bucket, then marginal detection). Photon numbers are only
// sampled for detected pulses, from the exact posterior P(n | detection),
// which leaves the joint law unchanged. After-pulses are memoryless: each
// sifted detection spawns at most one echo in the same cell carrying the
// parent's photon number and a random bit, which reproduces the
// (1 + p_ap) count scaling and the p_ap/2 error term of the analytic model.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "qkd/bounds.hpp"
#include "qkd/channel.hpp"

namespace qkd {

namespace mc_detail {

struct SplitMix64 {
  uint64_t state;
  uint64_t next() {
    uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
};

struct Xoshiro256pp {
  std::array<uint64_t, 4> s{};

  explicit Xoshiro256pp(uint64_t seed) {
    SplitMix64 sm{seed};
    for (auto& w : s) w = sm.next();
    if ((s[0] | s[1] | s[2] | s[3]) == 0) s[0] = 1;
  }

  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t next() {
    const uint64_t result = rotl(s[0] + s[3], 23) + s[0];
    const uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
  }

  // uniform in [0, 1) with 53 random bits
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

}  // namespace mc_detail

inline constexpr int mc_max_photons = 40;
inline constexpr int mc_cells = 5;  // (mu,Z) (v1,Z) (omega,Z) (v2,X) (omega,X)

// per-event ground truth, tallied alongside the observable counts
struct TruthTally {
  long long emitted[mc_cells] = {};  // pulses prepared per (intensity, basis)
  long long hist[mc_cells][mc_max_photons + 1] = {};  // detections by photons
  long long vacuum_z = 0;         // sifted Z detections from 0-photon pulses
  long long single_z = 0;         // sifted Z detections from 1-photon pulses
  long long single_z_errors = 0;  // ... of which carried a bit error
  long long single_x = 0;         // sifted X detections from 1-photon pulses
  long long single_x_errors = 0;  // ... of which carried a bit error
};

struct SimResult {
  ObservedCounts counts;
  TruthTally truth;
};

namespace mc_detail {

struct IntensityTable {
  double det_marginal = 0.0;                     // P(click) incl. dark counts
  int n_max = 0;
  double posterior_cdf[mc_max_photons + 1] = {};  // CDF of n given a click
  double err_given_det[mc_max_photons + 1] = {};  // P(bit error | click, n)
};

inline IntensityTable make_intensity_table(double k, double eta,
                                           const SystemParams& sys) {
  IntensityTable t;
  const double keep = 1.0 - eta;
  double pois = std::exp(-k);  // P(n = 0)
  double pois_cum = 0.0;
  double post_cum = 0.0;
  double survive = 1.0;  // (1 - eta)^n
  int n = 0;
  for (; n <= mc_max_photons; ++n) {
    const double d_n = 1.0 - (1.0 - 2.0 * sys.p_dc) * survive;
    const double a_n = 1.0 - survive;  // photon-caused click probability
    t.posterior_cdf[n] = (post_cum += pois * d_n);
    t.err_given_det[n] =
        d_n > 0.0 ? (a_n * sys.e_mis + (d_n - a_n) * 0.5) / d_n : 0.5;
    pois_cum += pois;
    if (1.0 - pois_cum < 1e-15 && n >= 1) break;
    pois *= k / (n + 1);
    survive *= keep;
  }
  t.n_max = std::min(n, mc_max_photons);
  t.det_marginal = post_cum;  // sum of P(n) * D_n over the retained support
  if (post_cum > 0.0)
    for (int i = 0; i <= t.n_max; ++i) t.posterior_cdf[i] /= post_cum;
  t.posterior_cdf[t.n_max] = 1.0;
  return t;
}

}  // namespace mc_detail

// Simulates n_pulses source pulses and returns the sifted observable counts
// together with the hidden per-event tallies. Deterministic per seed.
inline SimResult simulate(const SourceConfig& cfg, const SystemParams& sys,
                          uint64_t seed) {
  validate(cfg);
  validate(sys);
  const long long n_pulses = std::llround(sys.n_pulses);
  if (n_pulses < 1)
    throw std::invalid_argument("simulate: n_pulses must be >= 1");

  const double eta = transmittance(sys);
  // cell order: (mu,Z) (v1,Z) (omega,Z) (v2,X) (omega,X)
  const double p_cell[mc_cells] = {
      cfg.p_mu, cfg.p_v1, cfg.p_omega * cfg.p_z_given_omega, cfg.p_v2,
      cfg.p_omega * (1.0 - cfg.p_z_given_omega)};
  const int cell_intensity[mc_cells] = {0, 1, 3, 2, 3};
  const double intensities[4] = {cfg.mu, cfg.v1, cfg.v2, cfg.omega};

  mc_detail::IntensityTable tables[4];
  for (int i = 0; i < 4; ++i)
    tables[i] = mc_detail::make_intensity_table(intensities[i], eta, sys);

  // joint buckets: per cell, Bob matching then Bob mismatching
  double cum[2 * mc_cells];
  {
    double acc = 0.0;
    for (int c = 0; c < mc_cells; ++c) {
      const double p_bob_match = c < 3 ? cfg.p_z_bob : 1.0 - cfg.p_z_bob;
      cum[2 * c] = (acc += p_cell[c] * p_bob_match);
      cum[2 * c + 1] = (acc += p_cell[c] * (1.0 - p_bob_match));
    }
    cum[2 * mc_cells - 1] = 1.0;
  }

  SimResult out;
  long long sifted[mc_cells] = {};
  long long errors[mc_cells] = {};
  mc_detail::Xoshiro256pp rng(seed);

  auto tally = [&](int c, int n, bool err) {
    ++sifted[c];
    if (err) ++errors[c];
    ++out.truth.hist[c][n];
    const bool z_basis = c < 3;
    if (n == 0 && z_basis) ++out.truth.vacuum_z;
    if (n == 1) {
      if (z_basis) {
        ++out.truth.single_z;
        if (err) ++out.truth.single_z_errors;
      } else {
        ++out.truth.single_x;
        if (err) ++out.truth.single_x_errors;
      }
    }
  };

  for (long long p = 0; p < n_pulses; ++p) {
    const double u = rng.uniform();
    int bucket = 0;
    while (bucket < 2 * mc_cells - 1 && u >= cum[bucket]) ++bucket;
    const int cell = bucket >> 1;
    ++out.truth.emitted[cell];
    if (bucket & 1) continue;  // basis mismatch, discarded by sifting

    const auto& tbl = tables[cell_intensity[cell]];
    if (rng.uniform() >= tbl.det_marginal) continue;

    int n = 0;
    {
      const double un = rng.uniform();
      while (n < tbl.n_max && un >= tbl.posterior_cdf[n]) ++n;
    }
    tally(cell, n, rng.uniform() < tbl.err_given_det[n]);
    if (rng.uniform() < sys.p_ap)  // echo inherits the parent pulse
      tally(cell, n, rng.uniform() < 0.5);
  }

  out.counts.n_z_mu = static_cast<double>(sifted[0]);
  out.counts.n_z_v1 = static_cast<double>(sifted[1]);
  out.counts.n_z_omega = static_cast<double>(sifted[2]);
  out.counts.n_x_v2 = static_cast<double>(sifted[3]);
  out.counts.n_x_omega = static_cast<double>(sifted[4]);
  out.counts.m_z_mu = static_cast<double>(errors[0]);
  out.counts.m_z_v1 = static_cast<double>(errors[1]);
  out.counts.m_z_omega = static_cast<double>(errors[2]);
  out.counts.m_x_v2 = static_cast<double>(errors[3]);
  out.counts.m_x_omega = static_cast<double>(errors[4]);
  return out;
}

struct EstimatorCheck {
  long long checked = 0;
  long long violations = 0;
  double frequency() const {
    return checked > 0 ? static_cast<double>(violations) /
                             static_cast<double>(checked)
                       : 0.0;
  }
};

struct ValidationReport {
  long long trials = 0;
  double eps_sec = 0.0;
  EstimatorCheck s_z0;   // lower bound vs. true vacuum detections (Z)
  EstimatorCheck s_z1;   // lower bound vs. true single-photon detections (Z)
  EstimatorCheck s_x1;   // lower bound vs. true single-photon detections (X)
  EstimatorCheck v_x1;   // upper bound vs. true single-photon errors (X)
  EstimatorCheck e1_pz;  // rate bound vs. realized single-photon error rate
};

// Replays the finite-sample estimators on independent simulated experiments
// at a fixed security budget and counts how often each bound fails to cover
// the realized ground truth. A sound chain violates each bound with
// frequency at most eps_sec.
inline ValidationReport validate_bounds(const SourceConfig& cfg,
                                        const SystemParams& sys,
                                        const SecurityParams& sec,
                                        long long trials, uint64_t seed,
                                        double eps_sec = 1e-3) {
  validate(sec);
  if (trials < 1)
    throw std::invalid_argument("validate_bounds: trials must be >= 1");
  if (!(eps_sec > 0.0 && eps_sec < sec.error_terms))
    throw std::invalid_argument("validate_bounds: eps_sec out of range");

  ValidationReport rep;
  rep.trials = trials;
  rep.eps_sec = eps_sec;
  const int terms = sec.error_terms;
  // slack for float-vs-integer comparisons only; never relaxes a real miss
  constexpr double tol = 1e-9;

  mc_detail::SplitMix64 stream{seed};
  for (long long t = 0; t < trials; ++t) {
    const SimResult sim = simulate(cfg, sys, stream.next());
    const ObservedCounts& c = sim.counts;
    const TruthTally& truth = sim.truth;
    EvalFlags flags;

    const double s_z0 = s_z0_lower(cfg, c, eps_sec, terms, &flags);
    ++rep.s_z0.checked;
    if (s_z0 > static_cast<double>(truth.vacuum_z) + tol)
      ++rep.s_z0.violations;

    const double s_z1 = s_z1_lower(cfg, c, s_z0, eps_sec, terms, &flags);
    ++rep.s_z1.checked;
    if (s_z1 > static_cast<double>(truth.single_z) + tol)
      ++rep.s_z1.violations;

    const double v_x1 = v_x1_upper(cfg, c, eps_sec, terms, &flags);
    ++rep.v_x1.checked;
    if (v_x1 < static_cast<double>(truth.single_x_errors) - tol)
      ++rep.v_x1.violations;

    double s_x1 = 0.0;
    bool s_x1_defined = false;
    if (s_z1 > 0.0) {
      const double n1z = sys.n_pulses * tau(cfg, Basis::z, 1) * cfg.p_z_bob;
      const double z = n1z > 0.0 ? s_z1 / n1z : 0.0;
      if (z > 0.0 && z < 1.0) {
        s_x1 = s_x1_lower(cfg, sys.n_pulses, s_z1, eps_sec, terms, &flags);
        s_x1_defined = true;
      }
    }
    // a clamped-to-zero lower bound holds trivially and is still a claim
    ++rep.s_x1.checked;
    if (s_x1 > static_cast<double>(truth.single_x) + tol)
      ++rep.s_x1.violations;

    if (s_x1_defined && s_x1 > 0.0 && truth.single_z > 0) {
      const double e1 =
          phase_error_rate(s_x1, v_x1, s_z1, eps_sec, terms, &flags);
      const double realized = static_cast<double>(truth.single_z_errors) /
                              static_cast<double>(truth.single_z);
      ++rep.e1_pz.checked;
      if (e1 < realized - 1e-12) ++rep.e1_pz.violations;
    }
  }
  return rep;
}

}  // namespace qkd
