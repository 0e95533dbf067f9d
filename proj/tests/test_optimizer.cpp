#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "qkd/optimizer.hpp"

using Catch::Approx;
using namespace qkd;
namespace ex = qkd::expected;
namespace fx = qkd::fixtures;

namespace {

OptProblem problem_at(double distance, Protocol protocol, int restarts) {
  OptProblem prob;
  prob.sys = fx::system_at(distance);
  prob.protocol = protocol;
  prob.restarts = restarts;
  return prob;
}

}  // namespace

TEST_CASE("low-discrepancy sequence", "[optimizer]") {
  SECTION("base 2 radical inverse") {
    REQUIRE(halton(1, 2) == 0.5);
    REQUIRE(halton(2, 2) == 0.25);
    REQUIRE(halton(3, 2) == 0.75);
    REQUIRE(halton(4, 2) == 0.125);
  }

  SECTION("base 3 radical inverse") {
    REQUIRE(halton(1, 3) == Approx(1.0 / 3.0).epsilon(1e-15));
    REQUIRE(halton(2, 3) == Approx(2.0 / 3.0).epsilon(1e-15));
    REQUIRE(halton(3, 3) == Approx(1.0 / 9.0).epsilon(1e-15));
  }

  SECTION("values stay in the open unit interval") {
    for (uint64_t i = 1; i < 200; ++i) {
      REQUIRE(halton(i, 5) > 0.0);
      REQUIRE(halton(i, 5) < 1.0);
    }
  }
}

TEST_CASE("simplex minimizer", "[optimizer]") {
  SECTION("shifted quadratic in three dimensions") {
    auto f = [](const std::vector<double>& x) {
      const double a = x[0] - 1.0, b = x[1] + 2.0, c = x[2] - 0.5;
      return a * a + 2.0 * b * b + 3.0 * c * c;
    };
    const auto r = nelder_mead(f, {0.0, 0.0, 0.0});
    REQUIRE(r.f < 1e-12);
    REQUIRE(r.x[0] == Approx(1.0).margin(1e-5));
    REQUIRE(r.x[1] == Approx(-2.0).margin(1e-5));
    REQUIRE(r.x[2] == Approx(0.5).margin(1e-5));
  }

  SECTION("banana valley") {
    auto f = [](const std::vector<double>& x) {
      const double a = 1.0 - x[0];
      const double b = x[1] - x[0] * x[0];
      return a * a + 100.0 * b * b;
    };
    NelderMeadOptions opt;
    opt.max_evals = 20000;
    const auto r = nelder_mead(f, {-1.2, 1.0}, opt);
    REQUIRE(r.x[0] == Approx(1.0).margin(1e-3));
    REQUIRE(r.x[1] == Approx(1.0).margin(1e-3));
  }

  SECTION("bounded evaluation budget") {
    long long calls = 0;
    auto f = [&](const std::vector<double>& x) {
      ++calls;
      return x[0] * x[0];
    };
    NelderMeadOptions opt;
    opt.max_evals = 50;
    nelder_mead(f, {10.0}, opt);
    REQUIRE(calls <= 50 + 2);  // final shrink step may finish its sweep
  }
}

TEST_CASE("parameter transform round trips", "[optimizer]") {
  SECTION("four-intensity packing") {
    const SourceConfig cfg = fx::config4();
    const auto x = opt_detail::pack4(cfg, false);
    const SourceConfig back = opt_detail::unpack4(x, cfg.omega, false);
    REQUIRE(back.mu == Approx(cfg.mu).epsilon(1e-10));
    REQUIRE(back.v1 == Approx(cfg.v1).epsilon(1e-10));
    REQUIRE(back.v2 == Approx(cfg.v2).epsilon(1e-10));
    REQUIRE(back.p_mu == Approx(cfg.p_mu).epsilon(1e-10));
    REQUIRE(back.p_v1 == Approx(cfg.p_v1).epsilon(1e-10));
    REQUIRE(back.p_v2 == Approx(cfg.p_v2).epsilon(1e-10));
    REQUIRE(back.p_z_bob == Approx(cfg.p_z_bob).epsilon(1e-10));
    REQUIRE_NOTHROW(validate(back));
  }

  SECTION("three-intensity packing") {
    const SourceConfig3 cfg = fx::config3();
    const auto x = opt_detail::pack3(cfg, false);
    const SourceConfig3 back = opt_detail::unpack3(x, cfg.omega, false);
    REQUIRE(back.mu == Approx(cfg.mu).epsilon(1e-10));
    REQUIRE(back.v == Approx(cfg.v).epsilon(1e-10));
    REQUIRE(back.p_mu == Approx(cfg.p_mu).epsilon(1e-10));
    REQUIRE(back.p_z_alice == Approx(cfg.p_z_alice).epsilon(1e-10));
  }

  SECTION("any transform point yields a well-formed probability simplex") {
    for (double t : {-30.0, -3.0, 0.0, 2.5, 30.0}) {
      const SourceConfig c =
          opt_detail::unpack4({t, -t, 0.3 * t, t, -0.5 * t, 2.0, -t}, 2e-4,
                              false);
      REQUIRE(c.p_mu + c.p_v1 + c.p_v2 + c.p_omega == Approx(1.0).epsilon(1e-12));
      REQUIRE(c.p_omega > 0.0);
      REQUIRE(c.p_z_bob > 0.0);
      REQUIRE(c.p_z_bob < 1.0);
    }
  }
}

TEST_CASE("rate optimization at 100 km", "[optimizer]") {
  SECTION("four-intensity search beats the hand-picked operating point") {
    const auto res = optimize(problem_at(100.0, Protocol::four, 6), 1);
    REQUIRE(res.feasible);
    REQUIRE_NOTHROW(validate(res.cfg));
    REQUIRE(res.rate >= ex::FP4_RATE);
    REQUIRE(res.rate == Approx(ex::OPT4_RATE_100KM).epsilon(0.01));
  }

  SECTION("three-intensity search beats the hand-picked operating point") {
    const auto res = optimize(problem_at(100.0, Protocol::three, 6), 1);
    REQUIRE(res.feasible);
    REQUIRE_NOTHROW(validate(res.cfg3));
    REQUIRE(res.rate >= ex::FP3_RATE);
    REQUIRE(res.rate == Approx(ex::OPT3_RATE_100KM).epsilon(0.01));
  }

  SECTION("reported result replays through the evaluation pipeline") {
    const auto res = optimize(problem_at(100.0, Protocol::four, 4), 1);
    SecurityParams sec = fx::sec4();
    const auto replay = evaluate(res.cfg, expected_counts(res.cfg, fx::system_at(100.0)),
                                 fx::n_pulses, sec);
    REQUIRE(std::llabs(replay.l - res.key_length) <= 1);
  }
}

TEST_CASE("optimizer determinism and restart monotonicity", "[optimizer]") {
  SECTION("identical seeds give identical results") {
    const auto a = optimize(problem_at(60.0, Protocol::four, 4), 7);
    const auto b = optimize(problem_at(60.0, Protocol::four, 4), 7);
    REQUIRE(a.raw_l == b.raw_l);
    REQUIRE(a.cfg.mu == b.cfg.mu);
    REQUIRE(a.cfg.p_z_bob == b.cfg.p_z_bob);
    REQUIRE(a.evaluations == b.evaluations);
  }

  SECTION("a larger restart budget never hurts") {
    const auto small = optimize(problem_at(60.0, Protocol::four, 2), 7);
    const auto big = optimize(problem_at(60.0, Protocol::four, 8), 7);
    REQUIRE(big.raw_l >= small.restart_bests[small.restart_bests.size() - 1] -
                             1e-9);
    // the prefix of restart bests is shared
    for (size_t i = 0; i < small.restart_bests.size(); ++i)
      REQUIRE(big.restart_bests[i] == small.restart_bests[i]);
  }

  SECTION("warm starts are honored") {
    const auto cold = optimize(problem_at(60.0, Protocol::four, 0), 7);
    const auto warm =
        optimize(problem_at(60.0, Protocol::four, 0), 7, {cold.best_x});
    REQUIRE(warm.raw_l >= cold.raw_l - 1e-6);
  }
}

TEST_CASE("distance and omega scans", "[optimizer]") {
  SECTION("rate decreases with distance") {
    const auto pts =
        scan(problem_at(0.0, Protocol::four, 4), {60.0, 80.0, 100.0}, {}, 1);
    REQUIRE(pts.size() == 3);
    REQUIRE(pts[0].result.rate > pts[1].result.rate);
    REQUIRE(pts[1].result.rate > pts[2].result.rate);
  }

  SECTION("grid is the cartesian product in row-major order") {
    const auto pts = scan(problem_at(0.0, Protocol::three, 2), {40.0, 50.0},
                          {1e-4, 2e-4}, 1);
    REQUIRE(pts.size() == 4);
    REQUIRE(pts[0].distance_km == 40.0);
    REQUIRE(pts[0].omega == 1e-4);
    REQUIRE(pts[1].distance_km == 40.0);
    REQUIRE(pts[1].omega == 2e-4);
    REQUIRE(pts[3].distance_km == 50.0);
    for (const auto& pt : pts) REQUIRE(pt.result.feasible);
  }

  SECTION("no feasible point reports a zero rate and a valid source") {
    OptProblem prob = problem_at(300.0, Protocol::four, 2);
    prob.sys.n_pulses = 1e6;
    const auto res = optimize(prob, 1);
    REQUIRE_FALSE(res.feasible);
    REQUIRE(res.rate == 0.0);
    REQUIRE(res.key_length == 0);
    REQUIRE_NOTHROW(validate(res.cfg));
  }
}
