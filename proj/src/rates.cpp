#include "fsq/rates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <unsupported/Eigen/MatrixFunctions>

#include "fsq/errors.hpp"
#include "fsq/units.hpp"

namespace fsq::rates {

std::size_t RateModel::index(const std::string& label) const {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return i;
  }
  throw ModelError("rate model has no level '" + label + "'");
}

Eigen::MatrixXd RateModel::generator() const {
  Eigen::MatrixXd g = decay;
  for (const auto& p : pumps) {
    const double r = p.weight * gamma_sc;
    const auto l = static_cast<Eigen::Index>(p.lower), u = static_cast<Eigen::Index>(p.upper);
    g(u, l) += r;
    g(l, l) -= r;
    g(l, u) += r;
    g(u, u) -= r;
  }
  return g;
}

double RateModel::scattering_rate() const { return gamma_sc; }

RateModel RateModel::with_scattering_rate(double rate) const {
  RateModel m = *this;
  m.gamma_sc = rate;
  return m;
}

double RateModel::conservation_error() const {
  return generator().colwise().sum().cwiseAbs().maxCoeff();
}

namespace {

double pump(double rabi, double delta, double gamma) {
  return gamma * 0.25 * rabi * rabi / (delta * delta + 0.25 * gamma * gamma);
}

}  // namespace

RateModel build_rate_model(const driven::DriveField& field, const atom::AtomData& atom,
                           const atom::MagneticEnvironment& env, const std::string& initial) {
  const auto scheme = atom::LevelScheme::full(atom);
  driven::DriveField probe = field;
  const bool dark = field.rabi == 0.0;
  // A zero-amplitude field still defines the pumping profile.
  if (dark) probe.rabi = 1e-3 * atom.decay.gamma_s;
  driven::ModelOptions opt;
  opt.elimination = driven::Elimination::ForceFull;
  const auto lind = driven::build_single_drive_model(probe, env, scheme, atom, opt);

  RateModel m;
  m.labels = lind.labels;
  m.refs = lind.refs;
  const auto n = static_cast<Eigen::Index>(lind.dim());
  m.decay = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd out_rate = Eigen::VectorXd::Zero(n);
  for (const auto& c : lind.collapse) {
    if (c.sources.size() != 1) throw ModelError("rate model needs single-source decay operators");
    const auto s = static_cast<Eigen::Index>(c.sources.front().first);
    const double r = std::norm(c.sources.front().second);
    m.decay(s, s) -= r;
    out_rate[s] += r;
    if (c.target) m.decay(static_cast<Eigen::Index>(*c.target), s) += r;
  }

  const auto lo_ref = scheme.index(field.lower), up_ref = scheme.index(field.upper);
  std::vector<std::pair<PumpedPair, double>> raw;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double amp = std::abs(lind.hamiltonian(i, j));
      if (amp == 0.0) continue;
      const auto ri = lind.refs[static_cast<std::size_t>(i)], rj = lind.refs[static_cast<std::size_t>(j)];
      const bool j_upper = atom.energy(rj.manifold) > atom.energy(ri.manifold);
      const Eigen::Index u = j_upper ? j : i, l = j_upper ? i : j;
      if (lind.refs[static_cast<std::size_t>(l)].manifold == atom::Manifold::S0_1) continue;
      const double delta = (lind.hamiltonian(u, u) - lind.hamiltonian(l, l)).real();
      const double r = pump(2.0 * amp, delta, out_rate[u]);
      raw.push_back({{static_cast<std::size_t>(l), static_cast<std::size_t>(u), 0.0}, r});
    }
  }
  double r_ref = 0.0;
  for (std::size_t k = 0; k < raw.size(); ++k) {
    if (raw[k].first.lower == lo_ref && raw[k].first.upper == up_ref) {
      m.reference = k;
      r_ref = raw[k].second;
    }
  }
  if (!(r_ref > 0.0)) throw ModelError("field '" + field.id + "' does not pump its defining pair");
  for (auto& [p, r] : raw) {
    p.weight = r / r_ref;
    m.pumps.push_back(p);
  }
  m.gamma_sc = dark ? 0.0 : r_ref;

  m.initial = Eigen::VectorXd::Zero(n);
  m.initial[static_cast<Eigen::Index>(m.index(initial))] = 1.0;
  return m;
}

evolver::Trajectory evolve_rates(const RateModel& model, const std::vector<double>& times) {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 0.0) || (i > 0 && times[i] < times[i - 1])) {
      throw ModelError("rate evolution times must be >= 0 and non-decreasing");
    }
  }
  const Eigen::MatrixXd G = model.generator();
  evolver::Trajectory traj;
  traj.names = model.labels;
  Eigen::VectorXd p = model.initial;
  double t_prev = 0.0;
  for (double t : times) {
    if (t > t_prev) {
      Eigen::MatrixXd step = (G * (t - t_prev)).exp();
      // Scaling and squaring leaves O(1e-9) column-sum drift at |G t| ~ 1e8;
      // restore the exact invariant 1^T exp(G t) = 1^T on the diagonal.
      const Eigen::RowVectorXd drift = Eigen::RowVectorXd::Ones(step.cols()) - step.colwise().sum();
      step.diagonal() += drift.transpose();
      p = step * p;
      t_prev = t;
    }
    traj.times.push_back(t);
    traj.populations.emplace_back(p.data(), p.data() + p.size());
  }
  traj.steps = times.size();
  return traj;
}

std::vector<double> survival(const RateModel& model, const std::vector<double>& times, const std::string& level) {
  const auto k = model.index(level);
  const double p0 = model.initial[static_cast<Eigen::Index>(k)];
  if (!(p0 > 0.0)) throw ModelError("level '" + level + "' is not initially populated");
  const auto traj = evolve_rates(model, times);
  std::vector<double> out;
  for (const auto& row : traj.populations) out.push_back(row[k] / p0);
  return out;
}

ScatteringFit fit_scattering_rate(const RateModel& model, const std::vector<double>& times,
                                  const std::vector<double>& data, const std::vector<double>& sigma,
                                  const std::string& level) {
  if (times.size() != data.size()) throw FitError("times and survival lengths differ");
  if (times.size() < 3) throw FitError("scattering fit needs at least 3 points");
  std::vector<std::size_t> order(times.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  std::vector<double> t, y, s;
  for (auto i : order) {
    t.push_back(times[i]);
    y.push_back(data[i]);
    if (!sigma.empty()) s.push_back(sigma[i]);
  }

  // Start: log-linear decay rate corrected for decays back into the level.
  const auto k = model.index(level);
  const auto& ref = model.pumps.at(model.reference);
  double back = 0.0;
  if (ref.lower == k) {
    const double out = -model.decay(static_cast<Eigen::Index>(ref.upper), static_cast<Eigen::Index>(ref.upper));
    if (out > 0.0) back = model.decay(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(ref.upper)) / out;
  }
  std::vector<double> lt, ly;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (y[i] > 0.05 * y.front() && y[i] > 0.0) {
      lt.push_back(t[i]);
      ly.push_back(std::log(y[i]));
    }
  }
  double g0 = model.gamma_sc;
  if (lt.size() >= 2) {
    try {
      const double slope = dsp::fit_linear(lt, ly).value("slope");
      if (slope < 0.0) g0 = -slope / std::max(1.0 - back, 0.05);
    } catch (const FitError&) {
    }
  }
  if (!(g0 > 0.0)) g0 = 1.0 / std::max(t.back(), 1e-12);

  dsp::VectorModel f = [&](const Eigen::VectorXd& p) {
    const auto sv = survival(model.with_scattering_rate(p[0]), t, level);
    Eigen::VectorXd v(static_cast<Eigen::Index>(sv.size()));
    for (std::size_t i = 0; i < sv.size(); ++i) v[static_cast<Eigen::Index>(i)] = p[1] * sv[i];
    return v;
  };
  Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  Eigen::VectorXd sv = s.empty() ? Eigen::VectorXd()
                                 : Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size())));
  ScatteringFit out;
  out.fit = dsp::nlls(f, yv, Eigen::Vector2d(g0, y.front() > 0.0 ? 1.0 : 0.5), {"gamma_sc", "amplitude"}, sv);
  out.gamma_sc = out.fit.values[0];
  out.gamma_sc_sigma = out.fit.sigma[0];
  const double span = t.back() - t.front();
  if (out.gamma_sc <= 0.0 || out.gamma_sc < 2.0 * out.gamma_sc_sigma || out.gamma_sc * span < 1e-9) {
    out.non_decaying = true;
    out.fit.flags.push_back("non_decaying");
    out.tau_max = std::numeric_limits<double>::infinity();
    out.tau_max_sigma = std::numeric_limits<double>::infinity();
  } else {
    out.tau_max = 1.0 / out.gamma_sc;
    out.tau_max_sigma = out.gamma_sc_sigma / (out.gamma_sc * out.gamma_sc);
  }
  return out;
}

ScatteringFit fit_scattering_rate(const RateModel& model, const dsp::Trace& trace, const std::string& level) {
  trace.validate(3);
  return fit_scattering_rate(model, trace.times(), trace.y, trace.sigma, level);
}

dsp::FitResult fit_tau_scaling(const std::vector<double>& delta, const std::vector<double>& tau,
                               const std::vector<double>& sigma) {
  if (delta.size() != tau.size()) throw FitError("detuning and tau lengths differ");
  if (!sigma.empty() && sigma.size() != tau.size()) throw FitError("sigma length differs");
  if (delta.size() < 2) throw FitError("tau scaling fit needs at least 2 points");
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const double x = delta[i] * delta[i];
    const double w = sigma.empty() ? 1.0 : 1.0 / (sigma[i] * sigma[i]);
    sxx += w * x * x;
    sxy += w * x * tau[i];
  }
  if (!(sxx > 0.0)) throw FitError("all detunings are zero");
  dsp::FitResult r;
  r.names = {"a"};
  r.values = Eigen::VectorXd::Constant(1, sxy / sxx);
  double rss = 0.0;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const double e = tau[i] - r.values[0] * delta[i] * delta[i];
    rss += sigma.empty() ? e * e : e * e / (sigma[i] * sigma[i]);
  }
  r.rss = rss;
  r.dof = delta.size() - 1;
  const double var = sigma.empty() ? rss / static_cast<double>(r.dof) / sxx : 1.0 / sxx;
  r.covariance = Eigen::MatrixXd::Constant(1, 1, var);
  r.sigma = Eigen::VectorXd::Constant(1, std::sqrt(var));
  r.converged = true;
  return r;
}

double tau_coefficient_us_per_ghz2(double a) { return a * units::ghz * units::ghz * 1e6; }

}  // namespace fsq::rates
