#include <doctest.h>

#include <cmath>
#include <set>

#include "tuna/configspace.hpp"
#include "tuna/error.hpp"

using namespace tuna;

namespace {

ConfigSpace mixed_space() {
  return ConfigSpace({
      ParameterDef::continuous("x", 0.0, 100.0, false, 25.0),
      ParameterDef::continuous("mem", 1.0, 10000.0, true, 100.0),
      ParameterDef::integer("threads", 1, 64, false, 8),
      ParameterDef::integer("depth", 1, 256, true),
      ParameterDef::categorical("mode", {"a", "b", "c"}, "b"),
  });
}

}  // namespace

TEST_CASE("sample_random is deterministic and in-domain") {
  ConfigSpace s({ParameterDef::continuous("p", 0.0, 1.0)});
  auto a = sample_random(s, 7, 3);
  auto b = sample_random(s, 7, 3);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a[i] == b[i]);
    const double v = a[i].number("p");
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(sample_random(s, 8, 3)[0].id() != a[0].id());
}

TEST_CASE("sample_random covers every categorical choice") {
  ConfigSpace s({ParameterDef::categorical("c", {"a", "b"})});
  std::map<std::string, int> counts;
  for (const auto& c : sample_random(s, 11, 1000)) counts[c.choice("c")]++;
  CHECK(counts["a"] > 0);
  CHECK(counts["b"] > 0);
  CHECK(counts["a"] + counts["b"] == 1000);
}

TEST_CASE("sample_random preconditions") {
  ConfigSpace s({ParameterDef::continuous("p", 0.0, 1.0)});
  CHECK_THROWS_AS(sample_random(s, 1, 0), DomainError);
  CHECK_THROWS_AS(sample_random(ConfigSpace{}, 1, 1), DomainError);
}

TEST_CASE("samples always validate and log-scale draws are uniform in log space") {
  const ConfigSpace s = mixed_space();
  int below_100 = 0;
  const auto configs = s.sample_random(3, 4000);
  for (const auto& c : configs) {
    CHECK_NOTHROW(s.validate(c));
    if (c.number("mem") < 100.0) ++below_100;
  }
  // log10(100) is the midpoint of [0, 4].
  CHECK(std::abs(below_100 / 4000.0 - 0.5) < 0.04);
}

TEST_CASE("integer sampling reaches both endpoints") {
  ConfigSpace s({ParameterDef::integer("k", 1, 4)});
  std::set<std::int64_t> seen;
  for (const auto& c : s.sample_random(5, 2000)) seen.insert(std::get<std::int64_t>(c.at("k")));
  CHECK(seen == std::set<std::int64_t>{1, 2, 3, 4});
}

TEST_CASE("default_config uses declared defaults") {
  ConfigSpace s({ParameterDef::integer("p", 0, 10, false, 5)});
  const auto c = default_config(s);
  CHECK(std::get<std::int64_t>(c.at("p")) == 5);
  CHECK(default_config(s).id() == c.id());
}

TEST_CASE("default_config falls back to range midpoints") {
  ConfigSpace s({
      ParameterDef::continuous("lin", 10.0, 30.0),
      ParameterDef::continuous("log", 1.0, 10000.0, true),
      ParameterDef::integer("odd", 1, 4),
      ParameterDef::categorical("cat", {"x", "y"}),
  });
  const auto c = s.default_config();
  CHECK(c.number("lin") == doctest::Approx(20.0));
  CHECK(c.number("log") == doctest::Approx(100.0));
  // (1 + 4) / 2 = 2.5 rounds half-to-even.
  CHECK(std::get<std::int64_t>(c.at("odd")) == 2);
  CHECK(c.choice("cat") == "x");
}

TEST_CASE("encode examples") {
  ConfigSpace lin({ParameterDef::continuous("p", 0.0, 100.0)});
  CHECK(encode(lin, Configuration({{"p", 25.0}}))[0] == doctest::Approx(0.25));

  ConfigSpace cat({ParameterDef::categorical("c", {"a", "b", "c"})});
  CHECK(encode(cat, Configuration({{"c", std::string("b")}})) == std::vector<double>{0.0, 1.0, 0.0});

  ConfigSpace lg({ParameterDef::continuous("p", 1.0, 10000.0, true)});
  CHECK(encode(lg, Configuration({{"p", 100.0}}))[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("encode rejects out-of-domain values") {
  ConfigSpace s({ParameterDef::continuous("p", 0.0, 1.0)});
  CHECK_THROWS_AS(s.encode(Configuration({{"p", 2.0}})), ValidationError);
  CHECK_THROWS_AS(s.encode(Configuration({{"q", 0.5}})), ValidationError);
}

TEST_CASE("encode/decode round trip") {
  const ConfigSpace s = mixed_space();
  CHECK(s.encoded_width() == 7);
  for (const auto& c : s.sample_random(21, 500)) {
    const auto e = s.encode(c);
    REQUIRE(e.size() == s.encoded_width());
    const auto d = s.decode(e);
    CHECK(d.at("threads") == c.at("threads"));
    CHECK(d.at("depth") == c.at("depth"));
    CHECK(d.at("mode") == c.at("mode"));
    CHECK(std::abs(d.number("x") - c.number("x")) <= 1e-9);
    CHECK(std::abs(d.number("mem") - c.number("mem")) <= 1e-9 * c.number("mem"));
  }
}

TEST_CASE("sample_encoded decodes to valid configurations") {
  const ConfigSpace s = mixed_space();
  Rng rng(4);
  for (int i = 0; i < 200; ++i) CHECK_NOTHROW(s.validate(s.decode(s.sample_encoded(rng))));
}

TEST_CASE("config ids ignore insertion order and survive JSON") {
  std::map<std::string, ParamValue> a{{"x", 1.5}, {"mode", std::string("a")}};
  std::map<std::string, ParamValue> b;
  b.emplace("mode", std::string("a"));
  b.emplace("x", 1.5);
  CHECK(Configuration(a).id() == Configuration(b).id());
  const Configuration c(a);
  CHECK(Configuration::from_json(c.to_json()) == c);
  CHECK(ConfigId::from_hex(c.id().hex()) == c.id());
}

TEST_CASE("parameter definition invariants") {
  CHECK_THROWS_AS(ConfigSpace({ParameterDef::continuous("p", 1.0, 1.0)}), ValidationError);
  CHECK_THROWS_AS(ConfigSpace({ParameterDef::continuous("p", 0.0, 1.0, true)}), ValidationError);
  CHECK_THROWS_AS(ConfigSpace({ParameterDef::categorical("c", {"a"})}), ValidationError);
  CHECK_THROWS_AS(ConfigSpace({ParameterDef::categorical("c", {"a", "a"})}), ValidationError);
  CHECK_THROWS_AS(ConfigSpace({ParameterDef::continuous("p", 0.0, 1.0, false, 2.0)}), ValidationError);
  CHECK_THROWS_AS(ConfigSpace({ParameterDef::continuous("p", 0.0, 1.0), ParameterDef::continuous("p", 0.0, 2.0)}),
                  ValidationError);
}

TEST_CASE("space JSON round trip and config file parsing") {
  const ConfigSpace s = mixed_space();
  const ConfigSpace t = ConfigSpace::from_json(s.to_json());
  CHECK(t.to_json() == s.to_json());
  CHECK(t.default_config() == s.default_config());

  const auto c = s.parse(nlohmann::json::parse(R"({"x": 50, "mem": 10, "threads": 4, "depth": 16, "mode": "c"})"));
  CHECK(c.number("x") == 50.0);
  CHECK(std::get<std::int64_t>(c.at("threads")) == 4);
  CHECK_THROWS_AS(s.parse(nlohmann::json::parse(R"({"x": 50})")), ValidationError);
}
