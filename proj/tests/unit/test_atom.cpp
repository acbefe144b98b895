#include <doctest.h>

#include <cmath>
#include <map>

#include "fsq/atom.hpp"
#include "fsq/errors.hpp"
#include "fsq/units.hpp"

using namespace fsq;
using namespace fsq::atom;

TEST_CASE("Zeeman shift of 3P2 m=1 at 20 G is about 42 MHz") {
  MagneticEnvironment env;
  env.field_gauss = 20.0;
  const double f = zeeman_shift({Manifold::P2_3, 1}, env) / units::two_pi;
  CHECK(f == doctest::Approx(41.98872e6).epsilon(1e-6));
  CHECK(zeeman_shift({Manifold::P2_3, -1}, env) == doctest::Approx(-zeeman_shift({Manifold::P2_3, 1}, env)));
  CHECK(zeeman_shift({Manifold::P0_3, 0}, env) == 0.0);
  env.field_gauss = 0.0;
  CHECK(zeeman_shift({Manifold::S1_3, 1}, env) == 0.0);
  env.g_j[static_cast<int>(Manifold::P1_3)].reset();
  env.field_gauss = 1.0;
  CHECK_THROWS_AS(zeeman_shift({Manifold::P1_3, 1}, env), ConfigError);
}

TEST_CASE("Zeeman shift is linear in B") {
  MagneticEnvironment a, b;
  a.field_gauss = 3.0;
  b.field_gauss = 6.0;
  CHECK(zeeman_shift({Manifold::S1_3, 1}, b) == doctest::Approx(2.0 * zeeman_shift({Manifold::S1_3, 1}, a)));
}

TEST_CASE("Clebsch-Gordan values against tabulated squares") {
  // <2 m; 1 q | 1 M>^2 from standard tables.
  CHECK(clebsch_gordan_sq(2, 0, 1, 0, 1, 0) == doctest::Approx(2.0 / 5));
  CHECK(clebsch_gordan_sq(2, 1, 1, -1, 1, 0) == doctest::Approx(3.0 / 10));
  CHECK(clebsch_gordan_sq(2, 2, 1, -1, 1, 1) == doctest::Approx(3.0 / 5));
  CHECK(clebsch_gordan_sq(2, 1, 1, 0, 1, 1) == doctest::Approx(3.0 / 10));
  CHECK(clebsch_gordan_sq(2, 0, 1, 1, 1, 1) == doctest::Approx(1.0 / 10));
  CHECK(clebsch_gordan_sq(1, 0, 1, 0, 1, 0) == doctest::Approx(0.0));
  CHECK(clebsch_gordan_sq(1, 1, 1, -1, 1, 0) == doctest::Approx(0.5));
  CHECK(clebsch_gordan(1, 1, 1, -1, 0, 0) == doctest::Approx(std::sqrt(1.0 / 3)));
  CHECK(clebsch_gordan(0, 0, 1, 1, 1, 1) == doctest::Approx(1.0));
}

TEST_CASE("scheme sizes and named indices") {
  const auto sr = strontium88();
  const auto full = LevelScheme::full(sr);
  CHECK(full.size() == 13);
  CHECK(full.name(*full.g()) == "g");
  CHECK(full.level(*full.up()).manifold == Manifold::P2_3);
  CHECK(full.level(*full.down()).manifold == Manifold::P0_3);
  CHECK(full.level(*full.s()).manifold == Manifold::S1_3);
  const auto lam = LevelScheme::lambda(sr);
  REQUIRE(lam.size() == 3);
  CHECK(*lam.up() == 0);
  CHECK(*lam.s() == 1);
  CHECK(*lam.down() == 2);
  CHECK_THROWS_AS(LevelScheme::custom({{Manifold::P0_3, 1, 0.0}}), ModelError);
}

TEST_CASE("energy ordering and fine-structure splitting") {
  const auto sr = strontium88();
  CHECK(sr.energy(Manifold::P0_3) < sr.energy(Manifold::P1_3));
  CHECK(sr.energy(Manifold::P1_3) < sr.energy(Manifold::P2_3));
  CHECK(sr.energy(Manifold::P2_3) < sr.energy(Manifold::S1_3));
  const double split = (sr.energy(Manifold::P2_3) - sr.energy(Manifold::P0_3)) / units::two_pi;
  CHECK(split == doctest::Approx(17.4193e12).epsilon(1e-4));
  CHECK(sr.energy(Manifold::P2_3) == doctest::Approx(-sr.energy(Manifold::P0_3)));
}

TEST_CASE("decay rates from 3S1") {
  const auto sr = strontium88();
  const auto full = LevelScheme::full(sr);
  const auto rates = decay_rates(full, sr.decay);
  std::map<std::string, double> from_s;
  double total_s0 = 0.0;
  for (const auto& r : rates) {
    if (r.from == ref_s) {
      from_s[level_label(r.to)] += r.rate;
      total_s0 += r.rate;
    }
  }
  const double gs = 2 * M_PI * 11e6;
  CHECK(from_s["3P2_m0"] == doctest::Approx(0.217 * gs));
  CHECK(from_s["3P2_m0"] == doctest::Approx(1.4998e7).epsilon(1e-3));
  CHECK(from_s["3P0_m0"] == doctest::Approx(0.116 * gs));
  CHECK(from_s["3P2_m+1"] == doctest::Approx(0.163 * gs));
  CHECK(from_s["3P2_m-1"] == doctest::Approx(0.163 * gs));
  CHECK(from_s.count("3P2_m+2") == 0);
  CHECK(from_s["3P1_m+1"] == doctest::Approx(0.170 * gs));
  CHECK(from_s.count("3P1_m0") == 0);
  CHECK(total_s0 == doctest::Approx(gs).epsilon(2e-3));

  // m=+1 source: J-level totals preserved, split 3/5, 3/10, 1/10 inside 3P2.
  std::map<std::string, double> from_p1;
  double total_p1 = 0.0;
  for (const auto& r : rates) {
    if (r.from == LevelRef{Manifold::S1_3, 1}) {
      from_p1[level_label(r.to)] += r.rate;
      total_p1 += r.rate;
    }
  }
  CHECK(from_p1["3P2_m+2"] == doctest::Approx(0.6 * 0.543 * gs));
  CHECK(from_p1["3P2_m+1"] == doctest::Approx(0.3 * 0.543 * gs));
  CHECK(from_p1["3P2_m0"] == doctest::Approx(0.1 * 0.543 * gs));
  CHECK(from_p1["3P0_m0"] == doctest::Approx(0.116 * gs));
  CHECK(total_p1 == doctest::Approx(total_s0));

  // Sequential 3P1 -> 1S0.
  int p1_channels = 0;
  for (const auto& r : rates) {
    if (r.from.manifold == Manifold::P1_3) {
      ++p1_channels;
      CHECK(r.to == ref_g);
      CHECK(r.rate == doctest::Approx(1.0 / 21.4e-6));
    }
  }
  CHECK(p1_channels == 3);
}

TEST_CASE("effective intercombination mode feeds 1S0 directly") {
  auto sr = strontium88();
  sr.decay.intercombination = IntercombinationMode::Effective;
  const auto rates = decay_rates(LevelScheme::full(sr), sr.decay);
  double to_g = 0.0;
  for (const auto& r : rates) {
    CHECK(r.from.manifold != Manifold::P1_3);
    if (r.from == ref_s && r.to == ref_g) to_g += r.rate;
  }
  CHECK(to_g == doctest::Approx(0.34 * 2 * M_PI * 11e6));
}

TEST_CASE("decay table validation") {
  const auto sr = strontium88();
  CHECK(sr.decay.fraction_sum() == doctest::Approx(0.999));
  CHECK_NOTHROW(sr.decay.validate(sr.manifold_energy));
  auto bad = sr.decay;
  bad.channels[0].fraction = 0.3;
  CHECK_THROWS_AS(bad.validate(sr.manifold_energy), ModelError);
  auto uphill = sr.decay;
  uphill.channels[0].from = Manifold::P0_3;
  CHECK_THROWS_AS(uphill.validate(sr.manifold_energy), ModelError);
  DecayTable empty;
  CHECK(decay_rates(LevelScheme::full(sr), empty).empty());
}

TEST_CASE("atom data file round trip") {
  const char* text = R"(
[atom]
name = Sr88
mass = 87.9056 u
[levels]
3P0 = 429.2285 THz
3P1 = 434.8296 THz
3P2 = 446.6478 THz
3S1 = 870.5592 THz
[zeeman]
field = 20 G
[decay]
linewidth = 11 MHz
3P1_lifetime = 21.4 us
intercombination = sequential
[channel.up]
from = 3S1
to = 3P2
target = m0
fraction = 21.7 %
[channel.down]
from = 3S1
to = 3P0
target = m0
fraction = 11.6 %
[channel.p1]
from = 3S1
to = 3P1
target = all
fraction = 34.0 %
[channel.p2]
from = 3S1
to = 3P2
target = nonzero
fraction = 32.6 %
)";
  const auto a = parse_atom_data(text, "sr.atom");
  const auto b = strontium88();
  for (Manifold m : all_manifolds) CHECK(a.energy(m) == doctest::Approx(b.energy(m)));
  CHECK(a.magnetic.field_gauss == 20.0);
  CHECK(a.decay.channels.size() == 4);
  CHECK(a.decay.gamma_s == doctest::Approx(b.decay.gamma_s));
  CHECK_THROWS_AS(parse_atom_data("[decay]\nlinewidth = 11 MHz\n[channel.x]\nfrom = 3S1\nto = 3P9\ntarget = all\nfraction = 1\n"),
                  ConfigError);
}
