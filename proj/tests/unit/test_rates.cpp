#include <doctest.h>

#include <cmath>

#include "fsq/closedform.hpp"
#include "fsq/errors.hpp"
#include "fsq/evolver.hpp"
#include "fsq/rates.hpp"
#include "fsq/units.hpp"

using namespace fsq;
using namespace fsq::rates;

namespace {

driven::DriveField up_field(double rabi, double delta) {
  driven::DriveField f;
  f.id = "up";
  f.lower = atom::ref_up;
  f.upper = atom::ref_s;
  f.rabi = rabi;
  f.detuning = delta;
  return f;
}

}  // namespace

TEST_CASE("rate model conserves population and pumps at the closed-form rate") {
  const auto atom = atom::strontium88();
  const auto m = build_rate_model(up_field(36 * units::mhz, -6 * units::ghz), atom, atom.magnetic);
  REQUIRE(m.dim() == 13);
  const Eigen::MatrixXd G = m.generator();
  CHECK(m.conservation_error() < 1e-12 * G.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < G.rows(); ++i) {
    for (Eigen::Index j = 0; j < G.cols(); ++j) {
      if (i != j) CHECK(G(i, j) >= 0.0);
    }
  }
  const double closed = closedform::scattering_rate(36 * units::mhz, 6 * units::ghz, atom.decay.gamma_s);
  CHECK(-G(m.index("up"), m.index("up")) == doctest::Approx(closed).epsilon(0.05));
  CHECK(m.scattering_rate() == doctest::Approx(closed).epsilon(0.05));
  // 1S0 absorbing
  CHECK(G.col(m.index("g")).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero pump leaves pure decay") {
  const auto atom = atom::strontium88();
  const auto m = build_rate_model(up_field(0.0, -6 * units::ghz), atom, atom.magnetic);
  CHECK(m.gamma_sc == 0.0);
  CHECK((m.generator() - m.decay).cwiseAbs().maxCoeff() == 0.0);
  const auto sv = survival(m, {0.0, 1e-3, 1e-2});
  for (double v : sv) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rate evolution: start, conservation and absorbing limit") {
  const auto atom = atom::strontium88();
  const auto m = build_rate_model(up_field(36 * units::mhz, -6 * units::ghz), atom, atom.magnetic);
  const auto traj = evolve_rates(m, {0.0, 1e-4, 1e-3, 1e-2, 1.0});
  CHECK(traj.populations[0][m.index("up")] == 1.0);
  for (const auto& row : traj.populations) {
    double sum = 0;
    for (double p : row) {
      CHECK(p >= -1e-12);
      sum += p;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
  const auto& last = traj.populations.back();
  const double absorbed = last[m.index("g")] + last[m.index("down")] + last[m.index("3P2_m+2")] +
                          last[m.index("3P2_m-2")];
  CHECK(absorbed == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("rate model agrees with the 13-level Lindblad dynamics") {
  const auto atom = atom::strontium88();
  const auto field = up_field(36 * units::mhz, -6 * units::ghz);
  const auto m = build_rate_model(field, atom, atom.magnetic);
  const std::vector<double> times{2e-4, 1e-3, 3e-3};
  const auto rate = survival(m, times);
  const auto scheme = atom::LevelScheme::full(atom);
  driven::ModelOptions opt;
  opt.elimination = driven::Elimination::ForceFull;
  const auto lind = driven::build_single_drive_model(field, atom.magnetic, scheme, atom, opt);
  const auto rho0 = evolver::DensityMatrix::pure(lind.dim(), lind.index("up"));
  const auto traj = evolver::evolve(lind, rho0, times);
  const auto up = traj.column("up");
  for (std::size_t i = 0; i < times.size(); ++i) CHECK(up[i] == doctest::Approx(rate[i]).epsilon(0.02));
}

TEST_CASE("scattering-rate fit round trip and tau_max") {
  const auto atom = atom::strontium88();
  const auto base = build_rate_model(up_field(36 * units::mhz, -6 * units::ghz), atom, atom.magnetic);
  const auto truth = base.with_scattering_rate(867.0);
  std::vector<double> t;
  for (int i = 0; i <= 20; ++i) t.push_back(1e-5 * std::pow(1e3, i / 20.0));
  const auto y = survival(truth, t);
  const auto fit = fit_scattering_rate(base, t, y);
  CHECK(fit.gamma_sc == doctest::Approx(867.0).epsilon(0.01));
  CHECK(fit.tau_max * 1e3 == doctest::Approx(1.153).epsilon(1e-3));
  CHECK(fit.tau_max == doctest::Approx(1.0 / fit.gamma_sc).epsilon(1e-15));
  CHECK_FALSE(fit.non_decaying);

  std::vector<double> flat(t.size(), 1.0);
  const auto nd = fit_scattering_rate(base, t, flat);
  CHECK(nd.non_decaying);
  CHECK(std::isinf(nd.tau_max));
}

TEST_CASE("doubling the detuning divides the scattering rate by four") {
  const auto atom = atom::strontium88();
  const auto a = build_rate_model(up_field(36 * units::mhz, -6 * units::ghz), atom, atom.magnetic);
  const auto b = build_rate_model(up_field(36 * units::mhz, -12 * units::ghz), atom, atom.magnetic);
  CHECK(a.gamma_sc / b.gamma_sc == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("tau_max = a Delta^2 fit") {
  std::vector<double> d, tau;
  const double a = 39e-6 / (units::ghz * units::ghz);
  for (double g : {2.0, 4.0, 6.0, 8.0}) {
    d.push_back(g * units::ghz);
    tau.push_back(a * d.back() * d.back());
  }
  const auto fit = fit_tau_scaling(d, tau);
  CHECK(tau_coefficient_us_per_ghz2(fit.value("a")) == doctest::Approx(39.0).epsilon(1e-12));
  CHECK_THROWS_AS(fit_tau_scaling({0.0, 0.0}, {1.0, 2.0}), FitError);
}
