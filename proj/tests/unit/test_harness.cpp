#include <doctest.h>

#include <cmath>
#include <fstream>

#include "fsq/errors.hpp"
#include "fsq/harness.hpp"
#include "fsq/units.hpp"

using namespace fsq;
using namespace fsq::harness;

namespace {

const std::filesystem::path kData = FSQ_DATA_DIR;

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("fsq_harness_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t count(const std::string& text, const std::string& what) {
  std::size_t n = 0;
  for (auto pos = text.find(what); pos != std::string::npos; pos = text.find(what, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("empty scenario reports the missing name") {
  CHECK_THROWS_WITH_AS(parse_scenario("", "empty.scenario"), doctest::Contains("missing scenario name"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_scenario("# only a comment\n", "c.scenario"), doctest::Contains("missing scenario name"),
                       ConfigError);
}

TEST_CASE("detuning without a unit is a parse error with a line number") {
  const std::string text = "name = t\nkind = rabi\n\n[raman]\ndetuning = -6\n";
  CHECK_THROWS_WITH_AS(parse_scenario(text, "t.scenario"), doctest::Contains("t.scenario:5"), ConfigError);
}

TEST_CASE("unknown keys and kinds are rejected") {
  CHECK_THROWS_AS(parse_scenario("name = t\nkind = rabi\n[raman]\ndetunning = 1 GHz\n"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_scenario("name = t\nkind = teleport\n"), doctest::Contains("autler-townes"), ConfigError);
}

TEST_CASE("fig3d preset resolves to the Rabi run parameters") {
  const auto s = load_scenario(preset_path("fig3d", kData));
  CHECK(s.kind == "rabi");
  CHECK(s.config.number("raman", "detuning") == doctest::Approx(-units::two_pi * 6e9));
  CHECK(s.config.number("raman", "rabi_up") == doctest::Approx(units::two_pi * 36e6));
  CHECK(s.config.number("raman", "rabi_down") == doctest::Approx(units::two_pi * 36e6));
  CHECK(s.hash.size() == 64);
  // the hash follows the parameters, not the comments
  const auto again = parse_scenario("# note\n" + slurp(s.path), "copy");
  CHECK(again.hash == s.hash);
}

TEST_CASE("every preset parses") {
  for (const auto& id : presets()) {
    INFO(id);
    const auto s = load_scenario(preset_path(id, kData));
    CHECK(s.name == id);
  }
}

TEST_CASE("unknown preset lists the available ids") {
  CHECK_THROWS_WITH_AS(preset_path("fig9z", kData), doctest::Contains("fig1c, fig2a"), ConfigError);
}

TEST_CASE("sha256 of a known string") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("normalize_readout divides by constant references") {
  const auto r = normalize_readout({0, 1, 2}, {50, 40, 30}, {10, 20, 30}, {0, 2}, {100, 100}, 1.0);
  CHECK(r.up == std::vector<double>{0.5, 0.4, 0.3});
  CHECK(r.down == std::vector<double>{0.1, 0.2, 0.3});
  CHECK(r.warnings.empty());
}

TEST_CASE("normalize_readout removes a linear 10 % drift") {
  std::vector<double> t, up, ref_t, ref_n;
  for (int i = 0; i <= 20; ++i) {
    t.push_back(i);
    up.push_back(0.7 * 1000.0 * (1.0 + 0.1 * i / 20.0));
  }
  for (int i = 0; i <= 20; i += 5) {
    ref_t.push_back(i);
    ref_n.push_back(1000.0 * (1.0 + 0.1 * i / 20.0));
  }
  const auto r = normalize_readout(t, up, {}, ref_t, ref_n);
  for (double v : r.up) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("normalize_readout applies the LZ factor to down only") {
  const auto r = normalize_readout({1}, {100}, {100}, {0, 2}, {200, 200}, 0.975);
  CHECK(r.up[0] == doctest::Approx(0.5));
  CHECK(r.down[0] == doctest::Approx(0.4875));
}

TEST_CASE("normalize_readout warns when extrapolating and rejects bad references") {
  const auto r = normalize_readout({-1, 0.5, 3}, {1, 1, 1}, {}, {0, 1}, {10, 10});
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("2 measurement") != std::string::npos);
  CHECK_THROWS_AS(normalize_readout({0}, {1}, {}, {0}, {1}), ConfigError);
  CHECK_THROWS_AS(normalize_readout({0}, {1}, {}, {0, 0}, {1, 1}), ConfigError);
  CHECK_THROWS_AS(normalize_readout({0}, {1}, {}, {0, 1}, {1, 0}), ConfigError);
}

TEST_CASE("two-point series renders one polyline") {
  Series s;
  s.label = "a";
  s.x = {0, 1};
  s.y = {0, 1};
  const auto svg = render_svg({s}, {"t", {"x", "s"}, {"y", ""}});
  CHECK(count(svg, "<polyline") == 1);
  CHECK(svg.find("x (s)") != std::string::npos);
  CHECK(render_svg({s}, {"t", {"x", "s"}, {"y", ""}}) == svg);
}

TEST_CASE("log-x contrast plot with two marker styles and two fits") {
  Series a{"ramsey", {0.1, 1, 3}, {0.99, 0.8, 0.1}, {}, false, Marker::Circle};
  Series b{"echo", {5, 20, 60}, {0.98, 0.75, 0.08}, {}, false, Marker::Square};
  Series fa{"fit a", {0.1, 1, 3}, {0.99, 0.79, 0.11}};
  Series fb{"fit b", {5, 20, 60}, {0.98, 0.74, 0.09}};
  const auto svg = render_svg({a, b, fa, fb}, {"c", {"T", "ms", true}, {"contrast", ""}});
  CHECK(count(svg, "<polyline") == 2);
  CHECK(count(svg, "<circle") >= 3);
  CHECK(count(svg, "<rect") >= 3 + 1);
}

TEST_CASE("empty or malformed series are rejected") {
  CHECK_THROWS_AS(render_svg({}, {}), ConfigError);
  CHECK_THROWS_AS(render_svg({Series{"e", {}, {}}}, {}), ConfigError);
  CHECK_THROWS_AS(render_svg({Series{"m", {1, 2}, {1}}}, {}), ConfigError);
  Series log_bad{"l", {0, -1}, {1, 2}};  // nothing positive to place on a log axis
  CHECK_THROWS_AS(render_svg({log_bad}, {"", {"x", "", true}, {"y", ""}}), ConfigError);
}

TEST_CASE("tables round-trip through csv") {
  Table t{{"a", "b"}, {}};
  t.add({1.5, -2});
  t.add({std::nan(""), 1e-300});
  const auto dir = scratch("table");
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "t.csv") << t.csv();
  const auto back = read_table(dir / "t.csv");
  CHECK(back.columns == t.columns);
  CHECK(back.rows[0] == t.rows[0]);
  CHECK(std::isnan(back.rows[1][0]));
  CHECK_THROWS_AS(t.add({1}), ConfigError);
}

TEST_CASE("run bundle: summary flags follow checks.csv and reruns are byte identical") {
  const std::string text =
      "name = tiny_trap\nkind = lightshift\nseed = 5\n"
      "[trap]\ntable = " + (kData / "polarizability_sample.csv").string() +
      "\nwavelength = 1064 nm\nslope = 192 Hz/uK\ndepths = 10, 20, 30 uK\nfrequency_noise = 10 Hz\n";
  const auto s = parse_scenario(text, "tiny");
  const auto first = scratch("bundle1");
  RunSettings rs;
  rs.output_dir = first;
  rs.timestamp = false;
  const auto b1 = run_scenario(s, rs);
  CHECK(b1.checks.empty());  // not a preset id
  CHECK(recheck(rs.output_dir).empty());
  rs.output_dir = scratch("bundle2");
  run_scenario(s, rs);
  for (const auto& f : b1.files) CHECK(slurp(first / f) == slurp(rs.output_dir / f));
  CHECK(slurp(b1.directory / "manifest.json").find("1970-01-01") != std::string::npos);
}

TEST_CASE("recheck notices a tampered summary") {
  const auto dir = scratch("tamper");
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "checks.csv") << "name,value,low,high,pass\nx,2,0,1,false\n";
  std::ofstream(dir / "summary.json") << R"({"passed": true, "checks": [{"name": "x", "pass": true}]})";
  const auto bad = recheck(dir);
  CHECK(bad.size() == 2);
}

TEST_CASE("part selection only applies to coherence scenarios") {
  const auto s = parse_scenario("name = p\nkind = pipeline\n");
  RunSettings rs;
  rs.part = "echo";
  rs.output_dir = scratch("part");
  CHECK_THROWS_AS(run_scenario(s, rs), ConfigError);
}
