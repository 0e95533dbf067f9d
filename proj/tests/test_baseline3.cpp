#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fixtures.hpp"
#include "qkd/baseline3.hpp"

using Catch::Approx;
using namespace qkd;
namespace ex = qkd::expected;
namespace fx = qkd::fixtures;

TEST_CASE("three-intensity evaluation", "[baseline3]") {
  const SourceConfig3 cfg = fx::config3();
  const ObservedCounts3 c = fx::counts3();
  const SecurityParams sec = fx::sec3();

  SECTION("self-consistent budget matches the reference") {
    const auto r = evaluate3(cfg, c, fx::n_pulses, sec);
    REQUIRE(r.feasible);
    REQUIRE(r.flags.fp_converged);
    REQUIRE(r.l == static_cast<long long>(ex::FP3_L));
    REQUIRE(r.rate == Approx(ex::FP3_RATE).epsilon(1e-12));
    REQUIRE(r.eps_sec == Approx(ex::FP3_EPS).epsilon(1e-9));
    REQUIRE(r.s_z1 == Approx(ex::FP3_S_Z1).epsilon(1e-9));
    REQUIRE(r.s_x1 == Approx(ex::FP3_S_X1).epsilon(1e-9));
    REQUIRE(r.e1_pz == Approx(ex::FP3_E1).epsilon(1e-9));
  }

  SECTION("all-zero counts are infeasible") {
    const auto r = evaluate3(cfg, ObservedCounts3{}, fx::n_pulses, sec);
    REQUIRE_FALSE(r.feasible);
    REQUIRE(r.l == 0);
    REQUIRE(r.rate == 0.0);
  }

  SECTION("estimators respect their ranges") {
    const auto r = evaluate3(cfg, c, fx::n_pulses, sec);
    REQUIRE(r.s_z0 >= 0.0);
    REQUIRE(r.s_z1 >= 0.0);
    REQUIRE(r.s_x1 >= 0.0);
    REQUIRE(r.v_x1 >= 0.0);
    REQUIRE(r.v_x1 <= c.m_x() + 1e-9);
    REQUIRE(r.e1_pz <= 0.5);
  }

  SECTION("wider error budget never shortens the key") {
    EvalOptions tight, loose;
    tight.fixed_eps_sec = 1e-12;
    loose.fixed_eps_sec = 1e-6;
    REQUIRE(evaluate3(cfg, c, fx::n_pulses, sec, loose).l >=
            evaluate3(cfg, c, fx::n_pulses, sec, tight).l);
  }

  SECTION("deviation-free mode only improves the key length") {
    EvalOptions opts;
    opts.fixed_eps_sec = 1e-10;
    const auto strict = evaluate3(cfg, c, fx::n_pulses, sec, opts);
    opts.deviations = false;
    const auto ideal = evaluate3(cfg, c, fx::n_pulses, sec, opts);
    REQUIRE(ideal.raw_l >= strict.raw_l);
  }
}

TEST_CASE("three-intensity validation", "[baseline3]") {
  SECTION("canonical source is valid") {
    REQUIRE_NOTHROW(validate(fx::config3()));
  }

  SECTION("rejects a signal weaker than decoy plus vacuum") {
    SourceConfig3 bad = fx::config3();
    bad.mu = bad.v;
    REQUIRE_THROWS_AS(validate(bad), std::invalid_argument);
  }

  SECTION("rejects probabilities that do not sum to one") {
    SourceConfig3 bad = fx::config3();
    bad.p_mu += 0.1;
    REQUIRE_THROWS_AS(validate(bad), std::invalid_argument);
  }

  SECTION("rejects errors above detections") {
    ObservedCounts3 bad = fx::counts3();
    bad.m_x_v = bad.n_x_v + 1.0;
    REQUIRE_THROWS_AS(validate(bad), std::invalid_argument);
  }
}

TEST_CASE("protocol comparison at the canonical points", "[baseline3]") {
  // the four-intensity scheme outperforms the three-intensity baseline at
  // the printed 100 km operating points
  const auto r4 =
      evaluate(fx::config4(), fx::counts4(), fx::n_pulses, fx::sec4());
  const auto r3 =
      evaluate3(fx::config3(), fx::counts3(), fx::n_pulses, fx::sec3());
  REQUIRE(r4.feasible);
  REQUIRE(r3.feasible);
  REQUIRE(r4.rate > r3.rate);
  REQUIRE(r4.rate / r3.rate == Approx(ex::FP4_RATE / ex::FP3_RATE)
                                   .epsilon(1e-12));
}
