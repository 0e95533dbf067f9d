#pragma once

// Expected-observables model for a fiber channel with threshold detectors:
// dark counts (two-detector convention), misalignment errors, and a
// multiplicative after-pulse contribution.

#include "qkd/baseline3.hpp"
#include "qkd/bounds.hpp"

namespace qkd {

struct SystemParams {
  double p_dc = 6e-7;    // dark count probability per pulse per detector
  double p_ap = 0.04;    // after-pulse probability per detection
  double e_mis = 5e-3;   // misalignment error rate
  double eta_b = 0.1;    // detector efficiency
  double alpha = 0.2;    // fiber attenuation, dB/km
  double length_km = 0.0;
  double n_pulses = 1e9;
};

inline void validate(const SystemParams& s) {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("SystemParams: " + msg);
  };
  for (double p : {s.p_dc, s.p_ap, s.e_mis, s.eta_b})
    if (!(p >= 0.0 && p <= 1.0)) fail("probabilities must be in [0,1]");
  if (!(s.alpha > 0.0)) fail("alpha must be > 0");
  if (!(s.length_km >= 0.0)) fail("length_km must be >= 0");
  if (!(s.n_pulses >= 1.0)) fail("n_pulses must be >= 1");
}

// end-to-end transmittance: detector efficiency times fiber loss
inline double transmittance(const SystemParams& sys) {
  return sys.eta_b * std::pow(10.0, -sys.alpha * sys.length_km / 10.0);
}

namespace detail {

// detection probability per sent pulse of intensity k
inline double detection_probability(double k, double eta, double p_dc) {
  return 1.0 - (1.0 - 2.0 * p_dc) * std::exp(-eta * k);
}

// error probability per sent pulse of intensity k
inline double error_probability(double k, double eta,
                                const SystemParams& sys) {
  return sys.p_dc + sys.e_mis * (1.0 - std::exp(-eta * k)) +
         sys.p_ap * detection_probability(k, eta, sys.p_dc) / 2.0;
}

struct CellExpectation {
  double n = 0.0;
  double m = 0.0;
};

inline CellExpectation expect_cell(double k, double p_select,
                                   double p_basis_alice, double p_basis_bob,
                                   const SystemParams& sys, double eta) {
  const double base = sys.n_pulses * p_select * p_basis_alice * p_basis_bob;
  return {base * detection_probability(k, eta, sys.p_dc) * (1.0 + sys.p_ap),
          base * error_probability(k, eta, sys)};
}

}  // namespace detail

// expected sifted detection and error counts, four-intensity source
inline ObservedCounts expected_counts(const SourceConfig& cfg,
                                      const SystemParams& sys) {
  const double eta = transmittance(sys);
  const double pz = cfg.p_z_bob;
  ObservedCounts out;
  auto zmu = detail::expect_cell(cfg.mu, cfg.p_mu, 1.0, pz, sys, eta);
  auto zv1 = detail::expect_cell(cfg.v1, cfg.p_v1, 1.0, pz, sys, eta);
  auto zom = detail::expect_cell(cfg.omega, cfg.p_omega, cfg.p_z_given_omega,
                                 pz, sys, eta);
  auto xv2 = detail::expect_cell(cfg.v2, cfg.p_v2, 1.0, 1.0 - pz, sys, eta);
  auto xom = detail::expect_cell(cfg.omega, cfg.p_omega,
                                 1.0 - cfg.p_z_given_omega, 1.0 - pz, sys, eta);
  out.n_z_mu = zmu.n;
  out.m_z_mu = zmu.m;
  out.n_z_v1 = zv1.n;
  out.m_z_v1 = zv1.m;
  out.n_z_omega = zom.n;
  out.m_z_omega = zom.m;
  out.n_x_v2 = xv2.n;
  out.m_x_v2 = xv2.m;
  out.n_x_omega = xom.n;
  out.m_x_omega = xom.m;
  return out;
}

// expected sifted detection and error counts, three-intensity source
inline ObservedCounts3 expected_counts3(const SourceConfig3& cfg,
                                        const SystemParams& sys) {
  const double eta = transmittance(sys);
  const double pz = cfg.p_z_alice;
  ObservedCounts3 out;
  auto fill = [&](double k, double p_select, double& nz, double& mz,
                  double& nx, double& mx) {
    auto z = detail::expect_cell(k, p_select, pz, cfg.p_z_bob, sys, eta);
    auto x = detail::expect_cell(k, p_select, 1.0 - pz, 1.0 - cfg.p_z_bob,
                                 sys, eta);
    nz = z.n;
    mz = z.m;
    nx = x.n;
    mx = x.m;
  };
  fill(cfg.mu, cfg.p_mu, out.n_z_mu, out.m_z_mu, out.n_x_mu, out.m_x_mu);
  fill(cfg.v, cfg.p_v, out.n_z_v, out.m_z_v, out.n_x_v, out.m_x_v);
  fill(cfg.omega, cfg.p_omega, out.n_z_omega, out.m_z_omega, out.n_x_omega,
       out.m_x_omega);
  return out;
}

}  // namespace qkd
