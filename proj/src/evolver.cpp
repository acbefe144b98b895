#include "fsq/evolver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "fsq/errors.hpp"
#include "fsq/parallel.hpp"

namespace fsq::evolver {

namespace {

using Vec = Eigen::VectorXcd;

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

DensityMatrix DensityMatrix::pure(std::size_t n, std::size_t level) {
  if (level >= n) throw ModelError("initial level index out of range");
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  m(level, level) = 1.0;
  return DensityMatrix(std::move(m));
}

DensityMatrix DensityMatrix::from_state(const Eigen::VectorXcd& psi) {
  const double norm = psi.norm();
  if (norm == 0.0) throw ModelError("zero state vector");
  const Eigen::VectorXcd u = psi / norm;
  return DensityMatrix(u * u.adjoint());
}

std::vector<double> DensityMatrix::populations() const {
  std::vector<double> p(dim());
  for (std::size_t i = 0; i < dim(); ++i) p[i] = population(i);
  return p;
}

double DensityMatrix::hermiticity_error() const { return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff(); }

double DensityMatrix::min_eigenvalue() const {
  const Matrix h = 0.5 * (rho_ + rho_.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void DensityMatrix::validate(double tol, bool unit_trace) const {
  if (rho_.rows() != rho_.cols() || rho_.rows() == 0) throw NumericalError("density matrix must be square and non-empty");
  if (!rho_.allFinite()) throw NumericalError("density matrix has non-finite entries");
  if (hermiticity_error() > tol) throw NumericalError("density matrix is not Hermitian");
  if (unit_trace && std::abs(trace() - 1.0) > tol) throw NumericalError("density matrix trace differs from 1");
  if (min_eigenvalue() < -tol) throw NumericalError("density matrix has a negative eigenvalue");
}

Eigen::VectorXcd vec(const Matrix& rho) { return Eigen::Map<const Eigen::VectorXcd>(rho.data(), rho.size()); }

Matrix unvec(const Eigen::VectorXcd& v, std::size_t n) {
  return Eigen::Map<const Matrix>(v.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
}

Matrix liouvillian(const RotatingFrameModel& model) {
  const auto n = static_cast<Eigen::Index>(model.dim());
  Matrix hnh = model.hamiltonian;
  for (const auto& c : model.collapse) {
    // L^dagger L = |v><v| with v_j = conj(c_j) for a rank-one jump.
    for (const auto& [j, cj] : c.sources) {
      for (const auto& [k, ck] : c.sources) hnh(j, k) -= cplx(0.0, 0.5) * std::conj(cj) * ck;
    }
  }
  const Matrix id = Matrix::Identity(n, n);
  Matrix L = cplx(0.0, -1.0) * Eigen::kroneckerProduct(id, hnh).eval() +
             cplx(0.0, 1.0) * Eigen::kroneckerProduct(hnh.conjugate(), id).eval();
  for (const auto& c : model.collapse) {
    if (c.leaves_subspace()) continue;
    const Matrix j = c.matrix(model.dim());
    L += Eigen::kroneckerProduct(j.conjugate(), j).eval();
  }
  return L;
}

Matrix propagator(const Matrix& L, double dt) { return (L * dt).exp(); }

Matrix propagator(const RotatingFrameModel& model, double dt) { return propagator(liouvillian(model), dt); }

std::vector<double> uniform_grid(double duration, std::size_t samples) {
  if (samples < 2) return {duration};
  std::vector<double> t(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    t[i] = duration * static_cast<double>(i) / static_cast<double>(samples - 1);
  }
  return t;
}

namespace {

struct Rhs {
  const Matrix& L;
  const Eigen::VectorXd* axis = nullptr;
  const std::function<double(double)>* schedule = nullptr;
  Eigen::Index n = 0;

  void operator()(double t, const Vec& y, Vec& dy) const {
    dy.noalias() = L * y;
    if (axis && schedule && *schedule) {
      const double d = (*schedule)(t);
      if (d != 0.0) {
        for (Eigen::Index j = 0; j < n; ++j) {
          for (Eigen::Index i = 0; i < n; ++i) {
            const double w = d * ((*axis)[i] - (*axis)[j]);
            if (w != 0.0) dy[i + n * j] += cplx(0.0, -w) * y[i + n * j];
          }
        }
      }
    }
  }
};

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

class DormandPrince {
 public:
  DormandPrince(const Rhs& f, const EvolveOptions& opt, double rate_scale)
      : f_(f), opt_(opt), rate_scale_(rate_scale) {}

  // Advances y from t0 to t1.
  void advance(double t0, double t1, Vec& y, std::size_t& steps) {
    if (t1 <= t0) return;
    double t = t0;
    const auto m = y.size();
    if (k1_.size() != m) {
      for (Vec* v : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &tmp_, &ynew_}) v->resize(m);
      f_(t, y, k1_);
      fsal_valid_ = true;
    } else if (!fsal_valid_ || last_t_ != t0) {
      f_(t, y, k1_);
    }
    if (h_ <= 0.0) h_ = initial_step(t1 - t0);
    while (t < t1) {
      double h = opt_.fixed_step > 0.0 ? opt_.fixed_step : h_;
      if (opt_.max_step > 0.0) h = std::min(h, opt_.max_step);
      bool last = false;
      if (t + h >= t1 || t1 - (t + h) < 1e-12 * h) {
        h = t1 - t;
        last = true;
      }
      if (h < 1e-15 * std::max(std::abs(t), t1 - t0) || h <= 0.0) {
        std::ostringstream os;
        os << "step size underflow at t = " << t << " s (h = " << h << " s); stiffness ratio "
           << "max rate x interval = " << rate_scale_ * (t1 - t0);
        throw IntegrationError(os.str());
      }
      if (++steps > opt_.max_steps) throw IntegrationError("maximum step count exceeded");
      step(t, h, y);
      double err = 0.0;
      if (opt_.fixed_step <= 0.0) {
        for (Eigen::Index i = 0; i < m; ++i) {
          const double sc = opt_.atol + opt_.rtol * std::max(std::abs(y[i]), std::abs(ynew_[i]));
          const double r = std::abs(tmp_[i]) / sc;
          err += r * r;
        }
        err = std::sqrt(err / static_cast<double>(m));
      }
      if (err <= 1.0) {
        t = last ? t1 : t + h;
        y.swap(ynew_);
        k1_.swap(k7_);
        if (opt_.renormalize) renormalize(y);
        if (opt_.fixed_step <= 0.0) {
          const double fac = err == 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(err, -0.2)));
          if (!last) h_ = h * fac;
          else h_ = std::max(h_, h * fac);
        }
      } else {
        h_ = h * std::max(0.2, 0.9 * std::pow(err, -0.2));
      }
    }
    last_t_ = t1;
    fsal_valid_ = !opt_.renormalize;
  }

 private:
  void renormalize(Vec& y) const {
    const auto n = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(y.size()))));
    cplx tr = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) tr += y[i + n * i];
    if (std::abs(tr) > 0.0) y /= tr.real();
  }

  double initial_step(double span) const {
    const double h = 0.01 / std::max(rate_scale_, 1e-300);
    return std::min(h, span);
  }

  void step(double t, double h, const Vec& y) {
    tmp_ = y + h * a21 * k1_;
    f_(t + c2 * h, tmp_, k2_);
    tmp_ = y + h * (a31 * k1_ + a32 * k2_);
    f_(t + c3 * h, tmp_, k3_);
    tmp_ = y + h * (a41 * k1_ + a42 * k2_ + a43 * k3_);
    f_(t + c4 * h, tmp_, k4_);
    tmp_ = y + h * (a51 * k1_ + a52 * k2_ + a53 * k3_ + a54 * k4_);
    f_(t + c5 * h, tmp_, k5_);
    tmp_ = y + h * (a61 * k1_ + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
    f_(t + h, tmp_, k6_);
    ynew_ = y + h * (b1 * k1_ + b3 * k3_ + b4 * k4_ + b5 * k5_ + b6 * k6_);
    f_(t + h, ynew_, k7_);
    tmp_ = h * (e1 * k1_ + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k7_);
  }

  const Rhs& f_;
  const EvolveOptions& opt_;
  double rate_scale_;
  double h_ = 0.0;
  double last_t_ = 0.0;
  bool fsal_valid_ = false;
  Vec k1_, k2_, k3_, k4_, k5_, k6_, k7_, tmp_, ynew_;
};

void record(Trajectory& traj, const RotatingFrameModel& model, double t, const Vec& y, bool keep) {
  const std::size_t n = model.dim();
  const auto ni = static_cast<Eigen::Index>(n);
  traj.times.push_back(t);
  std::vector<double> p(n);
  double tr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = y[static_cast<Eigen::Index>(i) * (ni + 1)].real();
    tr += p[i];
  }
  traj.populations.push_back(std::move(p));
  if (traj.track_loss) traj.lost.push_back(1.0 - tr);
  if (keep) traj.states.push_back(unvec(y, n));
}

bool close_rel(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b)); }

}  // namespace

Trajectory evolve(const RotatingFrameModel& model, const DensityMatrix& rho0, const std::vector<double>& times,
                  const EvolveOptions& options) {
  if (rho0.dim() != model.dim()) throw ModelError("initial state dimension does not match the model");
  if (times.empty()) throw ModelError("empty sampling grid");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 0.0) || (i > 0 && times[i] < times[i - 1])) {
      throw ModelError("sampling times must be non-negative and non-decreasing");
    }
  }
  if (times.back() <= 0.0 && times.size() > 1) throw ModelError("duration must be > 0");

  Trajectory traj;
  traj.names = model.labels;
  traj.track_loss = model.has_loss();

  const Matrix L = liouvillian(model);
  Vec y = vec(rho0.matrix());

  const bool ramped = static_cast<bool>(options.detuning_schedule);
  const Eigen::VectorXd* axis = nullptr;
  if (ramped) {
    axis = model.detuning_axis(options.ramp_field);
    if (!axis) throw ModelError("ramped field '" + options.ramp_field + "' is not part of the model");
    if (model.eliminated) throw ModelError("frequency ramps need the full (non-eliminated) model");
  }
  Method method = options.method;
  if (method == Method::Auto) method = ramped || options.fixed_step > 0.0 ? Method::RungeKutta : Method::Propagator;
  if (method == Method::Propagator && ramped) throw ModelError("propagator method cannot follow a detuning ramp");

  if (method == Method::Propagator) {
    std::vector<std::pair<double, Matrix>> cache;
    auto prop = [&](double dt) -> const Matrix& {
      for (const auto& [d, P] : cache) {
        if (close_rel(d, dt)) return P;
      }
      cache.emplace_back(dt, propagator(L, dt));
      return cache.back().second;
    };
    double t = 0.0;
    for (double ts : times) {
      if (ts > t) {
        y = prop(ts - t) * y;
        ++traj.steps;
        if (options.renormalize) {
          const auto n = static_cast<Eigen::Index>(model.dim());
          cplx tr = 0.0;
          for (Eigen::Index i = 0; i < n; ++i) tr += y[i * (n + 1)];
          y /= tr.real();
        }
        t = ts;
      }
      record(traj, model, ts, y, options.keep_states);
    }
    if (!y.allFinite()) throw NumericalError("propagation produced non-finite values");
    return traj;
  }

  double rate_scale = model.max_rate();
  if (axis && options.detuning_schedule) {
    const double d0 = std::abs(options.detuning_schedule(0.0));
    const double d1 = std::abs(options.detuning_schedule(times.back()));
    rate_scale = std::max({rate_scale, d0 * axis->cwiseAbs().maxCoeff(), d1 * axis->cwiseAbs().maxCoeff()});
  }
  Rhs rhs{L, axis, &options.detuning_schedule, static_cast<Eigen::Index>(model.dim())};
  DormandPrince dp(rhs, options, rate_scale);
  double t = 0.0;
  for (double ts : times) {
    dp.advance(t, ts, y, traj.steps);
    t = std::max(t, ts);
    record(traj, model, ts, y, options.keep_states);
  }
  if (!y.allFinite()) throw IntegrationError("integration produced non-finite values");
  return traj;
}

Trajectory evolve(const RotatingFrameModel& model, const DensityMatrix& rho0, double duration, std::size_t samples,
                  const EvolveOptions& options) {
  if (!(duration > 0.0)) throw ModelError("duration must be > 0");
  return evolve(model, rho0, uniform_grid(duration, samples), options);
}

DensityMatrix evolve_state(const RotatingFrameModel& model, const DensityMatrix& rho0, double duration,
                           const EvolveOptions& options) {
  if (duration == 0.0) return rho0;
  EvolveOptions opt = options;
  opt.keep_states = true;
  auto traj = evolve(model, rho0, std::vector<double>{duration}, opt);
  return DensityMatrix(traj.states.back());
}

DensityMatrix steady_state(const RotatingFrameModel& model) {
  const std::size_t n = model.dim();
  const Matrix L = liouvillian(model);
  Eigen::BDCSVD<Matrix> svd(L, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const Eigen::Index k = s.size();
  const double top = s[0];
  if (top == 0.0) throw NumericalError("steady state undefined: Liouvillian is zero (every state is stationary)");
  if (s[k - 1] > 1e-9 * top) {
    throw NumericalError("steady state undefined: Liouvillian has no null vector (population leaks out)");
  }
  if (k >= 2 && s[k - 2] < 1e-11 * top) {
    throw NumericalError("steady state is degenerate; add a small dephasing to select one");
  }
  Matrix rho = unvec(svd.matrixV().col(k - 1), n);
  const cplx tr = rho.trace();
  if (std::abs(tr) < 1e-12) throw NumericalError("steady-state null vector is traceless");
  rho /= tr;
  rho = 0.5 * (rho + rho.adjoint());
  return DensityMatrix(std::move(rho));
}

double slowest_rate(const RotatingFrameModel& model) {
  const Matrix L = liouvillian(model);
  Eigen::ComplexEigenSolver<Matrix> es(L, false);
  const auto& ev = es.eigenvalues();
  const double scale = ev.cwiseAbs().maxCoeff();
  double slow = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    const double r = -ev[i].real();
    if (r > 1e-10 * scale && (slow == 0.0 || r < slow)) slow = r;
  }
  return slow;
}

double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  if (a.dim() != b.dim()) throw ModelError("trace distance between states of different dimension");
  Matrix d = a.matrix() - b.matrix();
  d = 0.5 * (d + d.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(d, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

double observe(const RotatingFrameModel& model, const DensityMatrix& rho, const std::string& observable) {
  if (observable == "lost") return 1.0 - rho.trace();
  return rho.population(model.index(observable));
}

std::vector<SpectrumPoint> scan(const std::function<RotatingFrameModel(double)>& factory,
                                const std::vector<double>& grid, const ScanSpec& spec) {
  if (grid.empty()) throw ModelError("scan grid is empty");
  return parallel_map<SpectrumPoint>(
      grid.size(),
      [&](std::size_t i) {
        const double p = grid[i];
        try {
          const auto model = factory(p);
          DensityMatrix rho;
          if (spec.protocol == Protocol::SteadyState) {
            rho = steady_state(model);
          } else {
            const auto init = DensityMatrix::pure(model.dim(), model.index(spec.initial));
            rho = evolve_state(model, init, spec.duration, spec.options);
          }
          return SpectrumPoint{p, observe(model, rho, spec.observable)};
        } catch (const NumericalError& e) {
          throw NumericalError("scan point " + format_double(p) + ": " + e.what());
        } catch (const ModelError& e) {
          throw ModelError("scan point " + format_double(p) + ": " + e.what());
        }
      },
      spec.workers);
}

std::vector<double> Trajectory::column(const std::string& name) const {
  std::vector<double> out;
  out.reserve(times.size());
  if (name == "t_s") return times;
  if (name == "lost") {
    if (!track_loss) return std::vector<double>(times.size(), 0.0);
    return lost;
  }
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ModelError("trajectory has no column '" + name + "'");
  const auto k = static_cast<std::size_t>(it - names.begin());
  for (const auto& row : populations) out.push_back(row[k]);
  return out;
}

void Trajectory::write_csv(std::ostream& out) const {
  out << "t_s";
  for (const auto& n : names) out << ',' << n;
  if (track_loss) out << ",lost";
  out << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < times.size(); ++i) {
    out << times[i];
    for (double p : populations[i]) out << ',' << p;
    if (track_loss) out << ',' << lost[i];
    out << '\n';
  }
}

void Trajectory::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  write_csv(out);
}

Trajectory Trajectory::read_csv(std::istream& in, const std::string& source) {
  Trajectory t;
  std::string line;
  int line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (header.empty()) {
      header = cells;
      if (header.empty() || header[0] != "t_s") {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": trajectory CSV must start with column t_s");
      }
      for (std::size_t i = 1; i < header.size(); ++i) {
        if (header[i] == "lost") {
          if (i + 1 != header.size()) throw ConfigError(source + ":" + std::to_string(line_no) + ": 'lost' must be the last column");
          t.track_loss = true;
        } else {
          t.names.push_back(header[i]);
        }
      }
      continue;
    }
    if (cells.size() != header.size()) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                        " columns, found " + std::to_string(cells.size()));
    }
    std::vector<double> vals;
    for (const auto& c : cells) {
      try {
        std::size_t pos = 0;
        vals.push_back(std::stod(c, &pos));
        if (pos != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": not a number: '" + c + "'");
      }
    }
    t.times.push_back(vals[0]);
    t.populations.emplace_back(vals.begin() + 1, vals.begin() + 1 + static_cast<long>(t.names.size()));
    if (t.track_loss) t.lost.push_back(vals.back());
  }
  if (header.empty()) throw ConfigError(source + ": empty trajectory CSV");
  return t;
}

Trajectory Trajectory::read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return read_csv(in, path);
}

}  // namespace fsq::evolver
