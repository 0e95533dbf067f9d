#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "qkd/io.hpp"

using namespace qkd;

TEST_CASE("configuration parsing", "[io]") {
  SECTION("keys, values, comments, and blank lines") {
    std::istringstream in(
        "# source parameters\n"
        "mu = 0.47\n"
        "\n"
        "p_z=0.82   # trailing comment\n"
        "  name  =  four intensity  \n");
    const auto cfg = parse_config(in);
    REQUIRE(cfg.size() == 3);
    REQUIRE(cfg.at("mu") == "0.47");
    REQUIRE(cfg.at("p_z") == "0.82");
    REQUIRE(cfg.at("name") == "four intensity");
  }

  SECTION("duplicate keys keep the last occurrence") {
    std::istringstream in("a = 1\na = 2\n");
    REQUIRE(parse_config(in).at("a") == "2");
  }

  SECTION("missing separator reports the line number") {
    std::istringstream in("mu = 0.47\nbroken line\n");
    REQUIRE_THROWS_WITH(parse_config(in),
                        Catch::Matchers::ContainsSubstring("line 2"));
  }

  SECTION("empty keys are rejected") {
    std::istringstream in("= 5\n");
    REQUIRE_THROWS_AS(parse_config(in), std::runtime_error);
  }
}

TEST_CASE("numeric configuration access", "[io]") {
  std::istringstream in("mu = 4.7e-1\nlabel = text\n");
  const auto cfg = parse_config(in);

  SECTION("scientific notation parses") {
    REQUIRE(config_double(cfg, "mu") == 0.47);
  }

  SECTION("missing and malformed keys throw") {
    REQUIRE_THROWS_AS(config_double(cfg, "absent"), std::runtime_error);
    REQUIRE_THROWS_AS(config_double(cfg, "label"), std::runtime_error);
  }

  SECTION("fallback applies only when the key is absent") {
    REQUIRE(config_double_or(cfg, "absent", 9.0) == 9.0);
    REQUIRE(config_double_or(cfg, "mu", 9.0) == 0.47);
  }
}

TEST_CASE("deterministic number formatting", "[io]") {
  SECTION("formatted doubles round-trip exactly") {
    for (double v : {1.0 / 3.0, 2.5e-300, 1.53e-5, 345.8002680904508,
                     -0.08320953980456916, 0.0})
      REQUIRE(std::stod(format_double(v)) == v);
  }

  SECTION("seventeen significant digits") {
    REQUIRE(format_double(1.0 / 3.0) == "3.3333333333333331e-01");
  }
}

TEST_CASE("CSV field quoting", "[io]") {
  SECTION("plain fields pass through") {
    REQUIRE(csv_field("plain") == "plain");
    REQUIRE(csv_field("1.5e-3") == "1.5e-3");
  }

  SECTION("separators and quotes trigger quoting") {
    REQUIRE(csv_field("a,b") == "\"a,b\"");
    REQUIRE(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    REQUIRE(csv_field("two\nlines") == "\"two\nlines\"");
  }
}

TEST_CASE("CSV row writing", "[io]") {
  std::ostringstream out;
  CsvWriter csv(out);
  csv.row({"distance_km", "R"});
  csv.row({"100", "1.53e-5"});
  csv.row({"with,comma", "x"});
  REQUIRE(out.str() ==
          "distance_km,R\n100,1.53e-5\n\"with,comma\",x\n");
}
