#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fsq/errors.hpp"
#include "fsq/trap.hpp"

using namespace fsq;
using namespace fsq::trap;
using atom::Manifold;

namespace {

PolarizabilityTable sample() { return load_polarizability_csv(FSQ_DATA_DIR "/polarizability_sample.csv"); }

const double magic_beta = std::acos(1.0 / std::sqrt(3.0));

}  // namespace

TEST_CASE("polarizability formula endpoints") {
  const auto t = sample();
  const auto row = t.at(Manifold::P2_3, 914);
  CHECK(polarizability(Manifold::P2_3, 914, magic_beta, t).value == doctest::Approx(row.alpha_s).epsilon(1e-14));
  CHECK(polarizability(Manifold::P2_3, 914, 0.0, t).value == doctest::Approx(row.alpha_s - row.alpha_t));
  CHECK(polarizability(Manifold::P2_3, 914, units::pi / 2, t).value == doctest::Approx(row.alpha_s + row.alpha_t / 2));
  const auto p0 = t.at(Manifold::P0_3, 914);
  for (double b : {0.0, 0.3, 1.2}) CHECK(polarizability(Manifold::P0_3, 914, b, t).value == p0.alpha_s);
}

TEST_CASE("interpolation is exact at nodes and continuous between them") {
  const auto t = sample();
  CHECK(t.at(Manifold::P2_3, 1064).alpha_s == doctest::Approx(257.3250610589256).epsilon(1e-15));
  const auto mid = t.at(Manifold::P2_3, 989);
  CHECK(mid.alpha_s == doctest::Approx(0.5 * (300.0 + 257.3250610589256)));
  CHECK(mid.alpha_t == doctest::Approx(5.0));
  const double below = t.at(Manifold::P2_3, 914 - 1e-9).alpha_s;
  const double above = t.at(Manifold::P2_3, 914 + 1e-9).alpha_s;
  CHECK(std::abs(below - above) < 1e-6);
  CHECK_THROWS_AS(t.at(Manifold::P2_3, 1100), ModelError);
  CHECK_THROWS_AS(t.at(Manifold::P2_3, 700), ModelError);
}

TEST_CASE("magic angle at 914 nm and none at 1064 nm") {
  const auto t = sample();
  const auto m = magic_angle(914, t);
  REQUIRE(m.angle.has_value());
  CHECK(*m.angle / units::deg == doctest::Approx(79.0).epsilon(1e-6));
  CHECK(m.sigma > 0.0);
  const double a2 = polarizability(Manifold::P2_3, 914, *m.angle, t).value;
  const double a0 = polarizability(Manifold::P0_3, 914, *m.angle, t).value;
  CHECK(std::abs(a2 - a0) < 1e-6 * a0);
  const auto none = magic_angle(1064, t);
  CHECK_FALSE(none.angle.has_value());
  CHECK_FALSE(none.degenerate);
}

TEST_CASE("degenerate magic angle when alpha_t = 0 and scalars match") {
  PolarizabilityTable t;
  t.add(Manifold::P0_3, {900, 280, 1, 0, 0});
  t.add(Manifold::P2_3, {900, 280, 1, 0, 0});
  const auto m = magic_angle(900, t);
  CHECK(m.degenerate);
  CHECK_FALSE(m.angle.has_value());
}

TEST_CASE("recoil energies of 88Sr") {
  CHECK(recoil_energy(914).hz == doctest::Approx(2716.8).epsilon(1e-3));
  CHECK(recoil_energy(1064).hz == doctest::Approx(2004.9).epsilon(1e-3));
  CHECK(recoil_energy(1828).hz == doctest::Approx(recoil_energy(914).hz / 4).epsilon(1e-14));
  const auto r = recoil_energy(914);
  CHECK(r.uk * hz_per_uk() == doctest::Approx(r.hz).epsilon(1e-12));
  LatticeConfig a{914, 150, DepthUnit::RecoilEnergy, 0.0, "horizontal"};
  LatticeConfig b{914, a.depth_uk(), DepthUnit::Microkelvin, 0.0, "horizontal"};
  CHECK(b.depth_hz() == doctest::Approx(a.depth_hz()).epsilon(1e-12));
  CHECK(a.depth_hz() == doctest::Approx(150 * r.hz).epsilon(1e-12));
}

TEST_CASE("shift slope") {
  const auto t = sample();
  const auto s = shift_slope(t, 1064, units::pi / 2);
  CHECK(s.value == doctest::Approx(192.0).epsilon(1e-9));
  CHECK(s.sigma > 0.0);
  const auto m = magic_angle(914, t);
  CHECK(std::abs(shift_slope(t, 914, *m.angle).value) < 1e-6);
  PolarizabilityTable z;
  z.add(Manifold::P0_3, {900, 1, 0, 0, 0});
  z.add(Manifold::P2_3, {900, 0, 0, 0, 0});
  CHECK_THROWS_AS(shift_slope(z, 900, 0.0), ModelError);
  // 1 % differential is 1 % of depth in frequency
  PolarizabilityTable one;
  one.add(Manifold::P0_3, {900, 99, 0, 0, 0});
  one.add(Manifold::P2_3, {900, 100, 0, 0, 0});
  CHECK(shift_slope(one, 900, 0.0).value / hz_per_uk() == doctest::Approx(0.01));
}

TEST_CASE("thermal spread and T2*") {
  CHECK(thermal_shift_spread(0.0, 192, 10) == 0.0);
  const double s = thermal_shift_spread(2.5, 192, 10);
  CHECK(s == doctest::Approx(240.0));
  CHECK(gaussian_t2star(s) * 1e3 == doctest::Approx(0.938).epsilon(1e-3));
  CHECK(gaussian_t2star(thermal_shift_spread(2.5, 384, 10)) == doctest::Approx(gaussian_t2star(s) / 2));
}

TEST_CASE("polarizability CSV strict parsing") {
  std::istringstream bad_header("state,lambda\n");
  CHECK_THROWS_WITH_AS(parse_polarizability_csv(bad_header, "p.csv"), doctest::Contains("p.csv:1"), ConfigError);
  std::istringstream order(
      "state,wavelength_nm,alpha_s,alpha_s_sigma,alpha_t,alpha_t_sigma\n3P2,914,1,0,1,0\n3P2,813,1,0,1,0\n");
  CHECK_THROWS_WITH_AS(parse_polarizability_csv(order, "p.csv"), doctest::Contains("p.csv:3"), ConfigError);
  std::istringstream j0("state,wavelength_nm,alpha_s,alpha_s_sigma,alpha_t,alpha_t_sigma\n3P0,914,1,0,0.5,0\n");
  CHECK_THROWS_WITH_AS(parse_polarizability_csv(j0, "p.csv"), doctest::Contains("alpha_t = 0"), ConfigError);
  std::istringstream num("state,wavelength_nm,alpha_s,alpha_s_sigma,alpha_t,alpha_t_sigma\n1S0,914,abc,0,0,0\n");
  CHECK_THROWS_WITH_AS(parse_polarizability_csv(num, "p.csv"), doctest::Contains("alpha_s"), ConfigError);
  std::istringstream neg("state,wavelength_nm,alpha_s,alpha_s_sigma,alpha_t,alpha_t_sigma\n1S0,914,1,-1,0,0\n");
  CHECK_THROWS_AS(parse_polarizability_csv(neg, "p.csv"), ConfigError);
}
