#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "fsq/driven.hpp"
#include "fsq/errors.hpp"
#include "fsq/units.hpp"

using namespace fsq;
using namespace fsq::driven;

namespace {

const atom::AtomData sr = atom::strontium88();
const atom::LevelScheme lam = atom::LevelScheme::lambda(sr);

ModelOptions full() {
  ModelOptions o;
  o.elimination = Elimination::ForceFull;
  return o;
}

}  // namespace

TEST_CASE("Lambda Hamiltonian structure") {
  const double d1 = -units::mhz * 50, d2 = units::khz * 30;
  const auto cfg = RamanConfig::make(units::mhz * 3, units::mhz * 2, d1, d2);
  CHECK(cfg.two_photon_detuning() == doctest::Approx(d2));
  const auto m = build_lambda_model(cfg, {}, lam, sr, full());
  REQUIRE(m.dim() == 3);
  CHECK(m.labels[0] == "up");
  CHECK(m.labels[1] == "s");
  CHECK(m.labels[2] == "down");
  CHECK(m.hamiltonian(0, 0).real() == doctest::Approx(0.0));
  CHECK(m.hamiltonian(1, 1).real() == doctest::Approx(-d1));
  CHECK(m.hamiltonian(2, 2).real() == doctest::Approx(-d2));
  CHECK(std::abs(m.hamiltonian(1, 0)) == doctest::Approx(units::mhz * 1.5));
  CHECK(std::abs(m.hamiltonian(1, 2)) == doctest::Approx(units::mhz * 1.0));
  CHECK(std::abs(m.hamiltonian(0, 2)) == 0.0);
  CHECK((m.hamiltonian - m.hamiltonian.adjoint()).norm() == 0.0);
  const auto* ax = m.detuning_axis("up");
  REQUIRE(ax);
  CHECK((*ax)[1] == -1.0);
}

TEST_CASE("resonant Lambda eigenvalues") {
  const double ou = units::mhz * 3, od = units::mhz * 4;
  const auto m = build_lambda_model(RamanConfig::make(ou, od, 0.0), {}, lam, sr, full());
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.hamiltonian);
  auto ev = es.eigenvalues();
  const double w = 0.5 * std::sqrt(ou * ou + od * od);
  CHECK(ev[0] == doctest::Approx(-w));
  CHECK(std::abs(ev[1]) < 1e-6);
  CHECK(ev[2] == doctest::Approx(w));
}

TEST_CASE("paper configuration is Hermitian and auto-eliminates") {
  const auto cfg = RamanConfig::make(units::mhz * 36, units::mhz * 36, -units::ghz * 6);
  const auto fullm = build_lambda_model(cfg, {}, lam, sr, full());
  CHECK((fullm.hamiltonian - fullm.hamiltonian.adjoint()).norm() < 1e-12 * fullm.hamiltonian.norm());
  const auto eff = build_lambda_model(cfg, {}, lam, sr);
  CHECK(eff.eliminated);
  REQUIRE(eff.dim() == 2);
  // Effective coupling magnitude is half the Raman Rabi frequency.
  const double raman = (units::mhz * 36) * (units::mhz * 36) / (2 * units::ghz * 6);
  CHECK(std::abs(eff.hamiltonian(0, 1)) == doctest::Approx(raman / 2).epsilon(1e-6));
  // Balanced powers: no differential light shift.
  CHECK(std::abs((eff.hamiltonian(0, 0) - eff.hamiltonian(1, 1)).real()) < 1e-6 * raman);
  CHECK((eff.hamiltonian - eff.hamiltonian.adjoint()).norm() < 1e-9);
  // Scattering from each state: Gamma_s Omega^2 / (4 Delta^2).
  double up_rate = 0.0;
  for (const auto& c : eff.collapse) {
    for (const auto& [j, v] : c.sources) {
      if (j == 0) up_rate += std::norm(v);
    }
  }
  const double gs = sr.decay.gamma_s * sr.decay.fraction_sum();
  CHECK(up_rate == doctest::Approx(gs * std::pow(units::mhz * 36, 2) / (4 * std::pow(units::ghz * 6, 2))).epsilon(1e-4));
}

TEST_CASE("scattering off removes jumps") {
  ModelOptions o;
  o.scattering = false;
  o.elimination = Elimination::ForceEffective;
  const auto m = build_lambda_model(RamanConfig::make(units::mhz * 36, units::mhz * 36, -units::ghz * 6), {}, lam, sr, o);
  CHECK(m.collapse.empty());
}

TEST_CASE("forbidden drives are rejected") {
  DriveField f;
  f.lower = atom::ref_up;
  f.upper = atom::ref_down;
  f.rabi = 1.0;
  CHECK_THROWS_AS(f.validate(), ModelError);
  f.lower = atom::ref_g;
  f.upper = atom::ref_up;
  CHECK_THROWS_AS(f.validate(), ModelError);
  f.coupling = Coupling::Quadrupole;
  CHECK_NOTHROW(f.validate());
  DriveField g{"x", {atom::Manifold::P1_3, 0}, {atom::Manifold::S1_3, 0}, 1.0, 0.0, 0.0, Coupling::Dipole};
  CHECK_THROWS_AS(build_single_drive_model(g, {}, atom::LevelScheme::full(sr), sr), ModelError);
  CHECK(dipole_allowed(atom::ref_down, atom::ref_s));
  CHECK_FALSE(dipole_allowed(atom::ref_g, atom::ref_down));
}

TEST_CASE("full scheme: pi laser drives m=+-1 with sqrt(3/4) relative strength") {
  const auto scheme = atom::LevelScheme::full(sr);
  DriveField up{"up", atom::ref_up, atom::ref_s, units::mhz * 36, -units::ghz * 6, 0.0, Coupling::Dipole};
  atom::MagneticEnvironment env;
  env.field_gauss = 20.0;
  const auto m = build_single_drive_model(up, env, scheme, sr);
  REQUIRE(m.dim() == 13);
  const auto p1 = m.index("3P2_m+1"), s1 = m.index("3S1_m+1");
  CHECK(std::abs(m.hamiltonian(s1, p1)) == doctest::Approx(0.5 * units::mhz * 36 * std::sqrt(0.75)));
  const auto p2 = m.index("3P2_m+2");
  CHECK(m.hamiltonian.row(p2).cwiseAbs().sum() == doctest::Approx(std::abs(m.hamiltonian(p2, p2))));
  // Detuning of the m=+1 pair is shifted by the differential Zeeman shift.
  const double dz = atom::zeeman_shift({atom::Manifold::S1_3, 1}, env) - atom::zeeman_shift({atom::Manifold::P2_3, 1}, env);
  const double eff = (m.hamiltonian(s1, s1) - m.hamiltonian(p1, p1)).real();
  CHECK(eff == doctest::Approx(-up.detuning + dz));
  CHECK(m.has_loss() == false);
}

TEST_CASE("zero-amplitude field gives a pure decay model") {
  DriveField up{"up", atom::ref_up, atom::ref_s, 0.0, -units::ghz * 6, 0.0, Coupling::Dipole};
  const auto m = build_single_drive_model(up, {}, atom::LevelScheme::full(sr), sr);
  for (Eigen::Index i = 0; i < m.hamiltonian.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.hamiltonian.cols(); ++j) {
      if (i != j) CHECK(std::abs(m.hamiltonian(i, j)) == 0.0);
    }
  }
  CHECK(!m.collapse.empty());
}

TEST_CASE("phase enters as a conjugation of the off-diagonal element") {
  auto cfg = RamanConfig::make(units::mhz, units::mhz, -units::mhz * 200);
  const auto a = build_lambda_model(cfg, {}, lam, sr, full());
  cfg.up_field.phase = 0.7;
  const auto b = build_lambda_model(cfg, {}, lam, sr, full());
  CHECK(std::abs(b.hamiltonian(1, 0) - a.hamiltonian(1, 0) * std::polar(1.0, 0.7)) < 1e-9);
  CHECK(std::abs(b.hamiltonian(0, 1) - std::conj(b.hamiltonian(1, 0))) == 0.0);
}

TEST_CASE("two-level transfer model with quadrupole line") {
  DriveField prep{"prep", atom::ref_g, atom::ref_up, units::hz * 173, units::khz * 2, 0.0, Coupling::Quadrupole};
  const auto m = build_single_drive_model(prep, {}, atom::LevelScheme::transfer(sr), sr);
  REQUIRE(m.dim() == 2);
  CHECK(m.hamiltonian(1, 1).real() == doctest::Approx(-units::khz * 2));
  CHECK((*m.detuning_axis("prep"))[1] == -1.0);
  CHECK(m.collapse.empty());
}
