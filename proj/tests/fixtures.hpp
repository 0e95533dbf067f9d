#pragma once

// Canonical operating points and their frozen reference observables, shared
// across the test suite. Counts come from expected_values.hpp so estimator
// tests stay independent of the channel model implementation.

#include "expected_values.hpp"
#include "qkd/baseline3.hpp"
#include "qkd/bounds.hpp"
#include "qkd/channel.hpp"

namespace qkd::fixtures {

inline constexpr double n_pulses = 1e9;

inline SourceConfig config4() {
  return SourceConfig::from_free(0.47, 0.183, 0.32, 2e-4, 0.16, 0.407, 0.22,
                                 0.82);
}

inline SourceConfig3 config3() {
  return SourceConfig3::from_free(0.551, 0.188, 2e-4, 0.127, 0.599, 0.669);
}

inline ObservedCounts counts4() {
  ObservedCounts c;
  c.n_z_mu = expected::C4_NZ_MU;
  c.m_z_mu = expected::C4_MZ_MU;
  c.n_z_v1 = expected::C4_NZ_V1;
  c.m_z_v1 = expected::C4_MZ_V1;
  c.n_z_omega = expected::C4_NZ_OM;
  c.m_z_omega = expected::C4_MZ_OM;
  c.n_x_v2 = expected::C4_NX_V2;
  c.m_x_v2 = expected::C4_MX_V2;
  c.n_x_omega = expected::C4_NX_OM;
  c.m_x_omega = expected::C4_MX_OM;
  return c;
}

inline ObservedCounts3 counts3() {
  ObservedCounts3 c;
  c.n_z_mu = expected::C3_NZ_MU;
  c.m_z_mu = expected::C3_MZ_MU;
  c.n_x_mu = expected::C3_NX_MU;
  c.m_x_mu = expected::C3_MX_MU;
  c.n_z_v = expected::C3_NZ_V;
  c.m_z_v = expected::C3_MZ_V;
  c.n_x_v = expected::C3_NX_V;
  c.m_x_v = expected::C3_MX_V;
  c.n_z_omega = expected::C3_NZ_OM;
  c.m_z_omega = expected::C3_MZ_OM;
  c.n_x_omega = expected::C3_NX_OM;
  c.m_x_omega = expected::C3_MX_OM;
  return c;
}

inline SecurityParams sec4() {
  SecurityParams s;
  s.error_terms = 17;
  return s;
}

inline SecurityParams sec3() {
  SecurityParams s;
  s.error_terms = 21;
  return s;
}

inline SystemParams system_at(double length_km, double pulses = n_pulses) {
  SystemParams sys;
  sys.length_km = length_km;
  sys.n_pulses = pulses;
  return sys;
}

}  // namespace qkd::fixtures
