#include "fsq/dsp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/FFT>

#include "fsq/errors.hpp"
#include "fsq/units.hpp"

namespace fsq::dsp {

namespace {

using Vec = Eigen::VectorXd;
using cd = std::complex<double>;

constexpr double inf = std::numeric_limits<double>::infinity();

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<long>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

}  // namespace

std::vector<double> Trace::times() const {
  std::vector<double> t(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) t[i] = time(i);
  return t;
}

void Trace::validate(std::size_t min_samples) const {
  if (y.size() < min_samples) {
    throw ConfigError("trace has " + std::to_string(y.size()) + " samples, need at least " + std::to_string(min_samples));
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("trace sample interval must be > 0");
  if (!sigma.empty() && sigma.size() != y.size()) throw ConfigError("trace sigma length differs from sample count");
  for (double v : y) {
    if (!std::isfinite(v)) throw ConfigError("trace contains non-finite samples");
  }
}

double FitResult::value(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return values[static_cast<Eigen::Index>(i)];
  }
  throw FitError("fit has no parameter '" + name + "'");
}

double FitResult::error(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return sigma[static_cast<Eigen::Index>(i)];
  }
  throw FitError("fit has no parameter '" + name + "'");
}

bool FitResult::has_flag(const std::string& flag) const {
  return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

// ---------------------------------------------------------------- nlls

namespace {

Eigen::MatrixXd numeric_jacobian(const VectorModel& model, const Vec& p, const Vec& p0, const Vec& w) {
  const auto P = p.size();
  Eigen::MatrixXd J;
  for (Eigen::Index k = 0; k < P; ++k) {
    const double h = std::max(6e-6 * std::max(std::abs(p[k]), std::abs(p0[k])), 1e-9);
    Vec hi = p, lo = p;
    hi[k] += h;
    lo[k] -= h;
    const Vec d = (model(hi) - model(lo)) / (hi[k] - lo[k]);
    if (J.size() == 0) J.resize(d.size(), P);
    // Jacobian of the residual r = w (y - f).
    J.col(k) = -d.cwiseProduct(w);
  }
  return J;
}

// Throws FitError naming the most degenerate parameter pair.
void check_identifiable(const Eigen::MatrixXd& A, const std::vector<std::string>& names) {
  const auto P = A.rows();
  Vec d(P);
  for (Eigen::Index k = 0; k < P; ++k) {
    if (!(A(k, k) > 0.0)) {
      throw FitError("singular J^T J: parameter '" + names[static_cast<std::size_t>(k)] +
                     "' does not influence the model");
    }
    d[k] = 1.0 / std::sqrt(A(k, k));
  }
  const Eigen::MatrixXd C = d.asDiagonal() * A * d.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() > 1e-13 * static_cast<double>(P)) return;
  double worst = -1.0;
  Eigen::Index a = 0, b = P > 1 ? 1 : 0;
  for (Eigen::Index i = 0; i < P; ++i) {
    for (Eigen::Index j = i + 1; j < P; ++j) {
      if (std::abs(C(i, j)) > worst) {
        worst = std::abs(C(i, j));
        a = i;
        b = j;
      }
    }
  }
  throw FitError("singular J^T J: parameters '" + names[static_cast<std::size_t>(a)] + "' and '" +
                 names[static_cast<std::size_t>(b)] + "' are degenerate");
}

}  // namespace

FitResult nlls(const VectorModel& model, const Eigen::VectorXd& y, const Eigen::VectorXd& initial,
               const std::vector<std::string>& names, const Eigen::VectorXd& sigma, const NllsOptions& options) {
  const auto N = y.size();
  const auto P = initial.size();
  if (static_cast<std::size_t>(P) != names.size()) throw FitError("parameter names do not match the initial vector");
  if (!initial.allFinite()) throw FitError("initial parameters must be finite");
  if (N < P + 1) {
    throw FitError("need at least " + std::to_string(P + 1) + " data points for " + std::to_string(P) +
                   " parameters, got " + std::to_string(N));
  }
  Vec w = Vec::Ones(N);
  if (sigma.size() != 0) {
    if (sigma.size() != N) throw FitError("sigma length differs from data length");
    for (Eigen::Index i = 0; i < N; ++i) {
      if (!(sigma[i] > 0.0)) throw FitError("sigma must be > 0");
      w[i] = 1.0 / sigma[i];
    }
  }

  auto residual = [&](const Vec& p) -> Vec {
    const Vec f = model(p);
    if (f.size() != N) throw FitError("model returned the wrong number of points");
    return (y - f).cwiseProduct(w);
  };

  FitResult out;
  out.names = names;
  Vec p = initial;
  Vec r = residual(p);
  if (!r.allFinite()) throw FitError("model is not finite at the initial parameters");
  double cost = 0.5 * r.squaredNorm();
  double lambda = options.initial_lambda;
  bool converged = false;
  std::size_t it = 0;
  const double tiny = 1e-300;

  for (; it < options.max_iterations && !converged; ++it) {
    if (cost <= 1e-30 * static_cast<double>(N) * std::max(1.0, y.squaredNorm() / static_cast<double>(N))) {
      converged = true;
      break;
    }
    const Eigen::MatrixXd J = numeric_jacobian(model, p, initial, w);
    const Vec g = J.transpose() * r;
    if (g.lpNorm<Eigen::Infinity>() < options.gradient_tol) {
      converged = true;
      break;
    }
    const Eigen::MatrixXd A = J.transpose() * J;
    const double dmax = A.diagonal().maxCoeff();
    while (true) {
      Eigen::MatrixXd M = A;
      for (Eigen::Index k = 0; k < P; ++k) M(k, k) += lambda * std::max(A(k, k), 1e-12 * dmax + tiny);
      const Vec step = M.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= 10.0;
        if (lambda > 1e16) break;
        continue;
      }
      const Vec pn = p + step;
      Vec rn;
      bool ok = true;
      try {
        rn = residual(pn);
        ok = rn.allFinite();
      } catch (const ModelError&) {
        ok = false;
      }
      const double cn = ok ? 0.5 * rn.squaredNorm() : inf;
      if (cn < cost) {
        const double rel = (cost - cn) / std::max(cost, tiny);
        p = pn;
        r = rn;
        cost = cn;
        lambda = std::max(lambda / 10.0, 1e-12);
        if (rel < options.rel_cost_tol) converged = true;
        break;
      }
      if (ok && cn == cost) {
        converged = true;
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e16) {
        // No descent direction left at machine precision.
        converged = true;
        break;
      }
    }
  }

  out.values = p;
  out.iterations = it;
  out.converged = converged;
  out.rss = 2.0 * cost;
  out.dof = static_cast<std::size_t>(N - P);
  const Eigen::MatrixXd J = numeric_jacobian(model, p, initial, w);
  const Eigen::MatrixXd A = J.transpose() * J;
  check_identifiable(A, names);
  const double s2 = out.rss / static_cast<double>(out.dof);
  Vec d(P);
  for (Eigen::Index k = 0; k < P; ++k) d[k] = 1.0 / std::sqrt(A(k, k));
  const Eigen::MatrixXd C = d.asDiagonal() * A * d.asDiagonal();
  out.covariance = s2 * d.asDiagonal() * C.inverse() * d.asDiagonal();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  out.sigma = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  if (!converged) out.flags.push_back("max_iterations");
  return out;
}

FitResult nlls(const PointModel& model, const std::vector<double>& x, const std::vector<double>& y,
               const Eigen::VectorXd& initial, const std::vector<std::string>& names, const std::vector<double>& sigma,
               const NllsOptions& options) {
  if (x.size() != y.size()) throw FitError("x and y lengths differ");
  VectorModel vm = [&](const Vec& p) {
    Vec f(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) f[static_cast<Eigen::Index>(i)] = model(x[i], p);
    return f;
  };
  return nlls(vm, to_vec(y), initial, names, sigma.empty() ? Vec() : to_vec(sigma), options);
}

// ---------------------------------------------------------------- spectra

std::vector<std::complex<double>> fft_complex(const std::vector<double>& y) {
  Eigen::FFT<double> fft;
  std::vector<cd> out;
  fft.fwd(out, y);
  return out;
}

Spectrum fft_spectrum(const Trace& trace) {
  trace.validate(8);
  const std::size_t n = trace.size();
  const double mean = std::accumulate(trace.y.begin(), trace.y.end(), 0.0) / static_cast<double>(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = trace.y[i] - mean;
  const auto Y = fft_complex(y);
  Spectrum s;
  const double df = 1.0 / (static_cast<double>(n) * trace.dt);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    s.frequency.push_back(df * static_cast<double>(k));
    const double scale = (k == 0 || (n % 2 == 0 && k == n / 2)) ? 1.0 : 2.0;
    s.magnitude.push_back(scale * std::abs(Y[k]) / static_cast<double>(n));
  }
  return s;
}

double lorentzian(double x, double center, double fwhm, double amplitude, double offset) {
  const double hw = 0.5 * fwhm;
  return offset + amplitude * hw * hw / ((x - center) * (x - center) + hw * hw);
}

FitResult fit_lorentzian(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw FitError("x and y lengths differ");
  if (x.size() < 5) throw FitError("Lorentzian fit needs at least 5 points");
  const double off = median(y);
  std::size_t pk = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (std::abs(y[i] - off) > best) {
      best = std::abs(y[i] - off);
      pk = i;
    }
  }
  if (pk == 0 || pk + 1 == y.size()) throw FitError("Lorentzian peak lies on the boundary of the data");
  const double amp = y[pk] - off;
  auto crossing = [&](int dir) -> std::optional<double> {
    for (long i = static_cast<long>(pk); i >= 0 && i < static_cast<long>(y.size()); i += dir) {
      const auto u = static_cast<std::size_t>(i);
      if (std::abs(y[u] - off) <= 0.5 * std::abs(amp)) {
        const auto v = static_cast<std::size_t>(i - dir);
        const double f0 = std::abs(y[u] - off), f1 = std::abs(y[v] - off);
        const double frac = (0.5 * std::abs(amp) - f0) / (f1 - f0);
        return x[u] + frac * (x[v] - x[u]);
      }
    }
    return std::nullopt;
  };
  const auto lo = crossing(-1), hi = crossing(+1);
  double fwhm;
  if (lo && hi) fwhm = *hi - *lo;
  else if (lo) fwhm = 2.0 * (x[pk] - *lo);
  else if (hi) fwhm = 2.0 * (*hi - x[pk]);
  else fwhm = 0.25 * (x.back() - x.front());
  fwhm = std::abs(fwhm);
  if (fwhm == 0.0) fwhm = std::abs(x[1] - x[0]);

  // Fit on u = (x - x_peak) / fwhm so the finite-difference steps match the line scale.
  std::vector<double> u;
  for (double v : x) u.push_back((v - x[pk]) / fwhm);
  Vec p0(4);
  p0 << 0.0, 1.0, amp, off;
  auto fit = nlls([](double xx, const Vec& p) { return lorentzian(xx, p[0], p[1], p[2], p[3]); }, u, y, p0,
                  {"center", "fwhm", "amplitude", "offset"});
  Vec scale = Vec::Ones(4);
  scale.head(2).setConstant(fwhm);
  fit.values = fit.values.cwiseProduct(scale);
  fit.values[0] += x[pk];
  fit.sigma = fit.sigma.cwiseProduct(scale);
  fit.covariance = scale.asDiagonal() * fit.covariance * scale.asDiagonal();
  fit.values[1] = std::abs(fit.values[1]);
  return fit;
}

FitResult fit_lorentzian_peak(const Spectrum& spectrum, std::size_t half_window) {
  const std::size_t n = spectrum.magnitude.size();
  if (n < 5) throw FitError("spectrum too short for a Lorentzian fit");
  std::size_t pk = 1;
  for (std::size_t k = 1; k < n; ++k) {
    if (spectrum.magnitude[k] > spectrum.magnitude[pk]) pk = k;
  }
  if (pk <= 1 || pk + 1 >= n) throw FitError("spectral peak lies on the boundary of the spectrum");
  const std::size_t lo = pk > half_window + 1 ? pk - half_window : 1;
  const std::size_t hi = std::min(n - 1, pk + half_window);
  std::vector<double> x(spectrum.frequency.begin() + static_cast<long>(lo),
                        spectrum.frequency.begin() + static_cast<long>(hi) + 1);
  std::vector<double> y(spectrum.magnitude.begin() + static_cast<long>(lo),
                        spectrum.magnitude.begin() + static_cast<long>(hi) + 1);
  return fit_lorentzian(x, y);
}

// ---------------------------------------------------------------- filters

std::vector<Biquad> butterworth_bandpass_design(double f_lo, double f_hi, double fs) {
  const double nyq = 0.5 * fs;
  if (!(f_lo > 0.0) || !(f_hi > f_lo)) throw FitError("band-pass needs 0 < f_lo < f_hi");
  if (!(f_hi < nyq)) throw FitError("band-pass cut-off must be below the Nyquist frequency");
  const double w_lo = 2.0 * fs * std::tan(units::pi * f_lo / fs);
  const double w_hi = 2.0 * fs * std::tan(units::pi * f_hi / fs);
  const double w0 = std::sqrt(w_lo * w_hi);
  const double bw = w_hi - w_lo;
  // Second-order prototype pole in the upper half plane; its conjugate
  // produces the conjugate band-pass poles.
  const cd p = std::polar(1.0, 0.75 * units::pi);
  const cd disc = std::sqrt(p * p * bw * bw - 4.0 * w0 * w0);
  const cd s_poles[2] = {0.5 * (p * bw + disc), 0.5 * (p * bw - disc)};
  std::vector<Biquad> sos;
  const double wc = 2.0 * std::atan(w0 / (2.0 * fs));  // digital centre, rad/sample
  const cd zc = std::polar(1.0, -wc);
  for (const cd& s : s_poles) {
    const cd z = (1.0 + s / (2.0 * fs)) / (1.0 - s / (2.0 * fs));
    Biquad q{1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)};
    const cd h = (q.b0 + q.b1 * zc + q.b2 * zc * zc) / (1.0 + q.a1 * zc + q.a2 * zc * zc);
    const double g = 1.0 / std::abs(h);
    q.b0 *= g;
    q.b1 *= g;
    q.b2 *= g;
    sos.push_back(q);
  }
  return sos;
}

std::complex<double> frequency_response(const std::vector<Biquad>& sos, double f, double fs) {
  const cd z1 = std::polar(1.0, -units::two_pi * f / fs);
  cd h = 1.0;
  for (const auto& q : sos) h *= (q.b0 + q.b1 * z1 + q.b2 * z1 * z1) / (1.0 + q.a1 * z1 + q.a2 * z1 * z1);
  return h;
}

namespace {

// Steady-state transposed direct-form II state for a unit step through the cascade.
std::vector<std::array<double, 2>> sos_zi(const std::vector<Biquad>& sos) {
  std::vector<std::array<double, 2>> zi;
  double scale = 1.0;
  for (const auto& q : sos) {
    const double gain = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    const double z1 = q.b2 - q.a2 * gain;
    const double z0 = q.b1 - q.a1 * gain + z1;
    zi.push_back({scale * z0, scale * z1});
    scale *= gain;
  }
  return zi;
}

std::vector<double> run_cascade(const std::vector<Biquad>& sos, std::vector<double> x,
                                const std::vector<std::array<double, 2>>* zi, double zi_scale) {
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const auto& q = sos[k];
    double z0 = zi ? (*zi)[k][0] * zi_scale : 0.0;
    double z1 = zi ? (*zi)[k][1] * zi_scale : 0.0;
    for (double& v : x) {
      const double in = v;
      const double out = q.b0 * in + z0;
      z0 = q.b1 * in - q.a1 * out + z1;
      z1 = q.b2 * in - q.a2 * out;
      v = out;
    }
  }
  return x;
}

}  // namespace

std::vector<double> sosfilt(const std::vector<Biquad>& sos, const std::vector<double>& x,
                            const std::vector<double>* zi_scale) {
  if (zi_scale && !zi_scale->empty()) {
    const auto zi = sos_zi(sos);
    return run_cascade(sos, x, &zi, zi_scale->front());
  }
  return run_cascade(sos, x, nullptr, 0.0);
}

std::vector<double> sosfiltfilt(const std::vector<Biquad>& sos, const std::vector<double>& x) {
  const std::size_t pad = 3 * (2 * sos.size() + 1);
  const std::size_t n = x.size();
  if (n <= pad) throw FitError("signal too short for zero-phase filtering (need > " + std::to_string(pad) + " samples)");
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x.front() - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x.back() - x[n - 1 - i]);
  const auto zi = sos_zi(sos);
  auto fwd = run_cascade(sos, ext, &zi, ext.front());
  std::reverse(fwd.begin(), fwd.end());
  auto bwd = run_cascade(sos, fwd, &zi, fwd.front());
  std::reverse(bwd.begin(), bwd.end());
  return std::vector<double>(bwd.begin() + static_cast<long>(pad), bwd.begin() + static_cast<long>(pad + n));
}

Trace butterworth_bandpass(const Trace& trace, double f_lo, double f_hi, bool zero_phase) {
  trace.validate(8);
  const double fs = 1.0 / trace.dt;
  const auto sos = butterworth_bandpass_design(f_lo, f_hi, fs);
  Trace out = trace;
  out.sigma.clear();
  if (zero_phase) {
    out.y = sosfiltfilt(sos, trace.y);
  } else {
    const std::vector<double> scale{trace.y.front()};
    out.y = sosfilt(sos, trace.y, &scale);
  }
  return out;
}

// ---------------------------------------------------------------- envelope

Envelope hilbert_envelope(const Trace& trace, double edge_fraction) {
  trace.validate(8);
  const std::size_t n = trace.size();
  Eigen::FFT<double> fft;
  std::vector<cd> Y;
  fft.fwd(Y, trace.y);
  std::vector<cd> Z(n, 0.0);
  Z[0] = Y[0];
  const std::size_t half = n / 2;
  for (std::size_t k = 1; k < (n + 1) / 2; ++k) Z[k] = 2.0 * Y[k];
  if (n % 2 == 0) Z[half] = Y[half];
  std::vector<cd> z;
  fft.inv(z, Z);
  Envelope e;
  e.envelope = trace;
  e.envelope.sigma.clear();
  for (std::size_t i = 0; i < n; ++i) e.envelope.y[i] = std::abs(z[i]);
  e.edge = static_cast<std::size_t>(std::ceil(edge_fraction * static_cast<double>(n)));
  if (2 * e.edge >= n) throw FitError("edge exclusion leaves no envelope samples");
  return e;
}

namespace {

ExponentialFit exponential_fit(const std::vector<double>& t, const std::vector<double>& y) {
  if (t.size() < 3) throw FitError("exponential fit needs at least 3 samples");
  // Log-linear start on the positive samples.
  std::vector<double> lt, ly;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (y[i] > 0.0) {
      lt.push_back(t[i]);
      ly.push_back(std::log(y[i]));
    }
  }
  if (lt.size() < 2) throw FitError("exponential fit needs positive envelope samples");
  double k0 = 0.0, a0 = std::exp(ly.front());
  try {
    const auto lin = fit_linear(lt, ly);
    k0 = -lin.value("slope");
    a0 = std::exp(lin.value("intercept"));
  } catch (const FitError&) {
  }
  Vec p0(2);
  p0 << a0, k0;
  ExponentialFit out;
  out.fit = nlls([](double x, const Vec& p) { return p[0] * std::exp(-p[1] * x); }, t, y, p0, {"amplitude", "rate"});
  out.amplitude = out.fit.values[0];
  const double k = out.fit.values[1], sk = out.fit.sigma[1];
  const double span = t.back() - t.front();
  if (k <= 0.0 || k < 2.0 * sk || k * span < 1e-9) {
    out.non_decaying = true;
    out.fit.flags.push_back("non_decaying");
    out.tau = inf;
    out.tau_sigma = inf;
  } else {
    out.tau = 1.0 / k;
    out.tau_sigma = sk / (k * k);
  }
  return out;
}

}  // namespace

ExponentialFit fit_exponential(const Envelope& envelope) {
  std::vector<double> t, y;
  for (std::size_t i = 0; i < envelope.envelope.size(); ++i) {
    if (!envelope.valid(i)) continue;
    t.push_back(envelope.envelope.time(i));
    y.push_back(envelope.envelope.y[i]);
  }
  return exponential_fit(t, y);
}

ExponentialFit fit_exponential(const Trace& trace, std::size_t skip_each_side) {
  trace.validate(3);
  std::vector<double> t, y;
  for (std::size_t i = skip_each_side; i + skip_each_side < trace.size(); ++i) {
    t.push_back(trace.time(i));
    y.push_back(trace.y[i]);
  }
  return exponential_fit(t, y);
}

// ---------------------------------------------------------------- pipeline

RabiExtraction extract_rabi(const Trace& trace, const ExtractOptions& options) {
  RabiExtraction r;
  auto stage = [](const char* name, auto&& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      throw FitError(std::string("extract_rabi [") + name + "]: " + e.what());
    }
  };
  trace.validate(8);
  const auto spectrum = stage("fft", [&] { return fft_spectrum(trace); });
  r.spectrum_fit = stage("lorentzian", [&] { return fit_lorentzian_peak(spectrum, options.lorentzian_half_window); });
  const double f0 = r.spectrum_fit.value("center");
  r.rabi = units::two_pi * f0;
  r.rabi_sigma = units::two_pi * r.spectrum_fit.error("center");
  r.filtered = stage("band-pass", [&] {
    return butterworth_bandpass(trace, f0 * (1.0 - options.band_fraction), f0 * (1.0 + options.band_fraction),
                                options.zero_phase);
  });
  r.envelope = stage("envelope", [&] { return hilbert_envelope(r.filtered); });
  r.envelope_fit = stage("exponential", [&] { return fit_exponential(r.envelope); });
  r.tau = r.envelope_fit.tau;
  r.tau_sigma = r.envelope_fit.tau_sigma;
  r.non_decaying = r.envelope_fit.non_decaying;
  if (r.non_decaying) {
    r.cycles = inf;
    r.cycles_sigma = inf;
    r.warnings.push_back("envelope does not decay; cycles unbounded");
  } else {
    r.cycles = r.rabi * r.tau / units::two_pi;
    r.cycles_sigma = r.cycles * std::hypot(r.rabi_sigma / r.rabi, r.tau_sigma / r.tau);
  }

  if (options.fit_loss) {
    try {
      std::vector<double> t = trace.times(), d(trace.size());
      for (std::size_t i = 0; i < trace.size(); ++i) d[i] = trace.y[i] - r.filtered.y[i];
      const std::size_t m = std::max<std::size_t>(1, trace.size() / 20);
      const double head = std::accumulate(d.begin(), d.begin() + static_cast<long>(m), 0.0) / static_cast<double>(m);
      const double tail = std::accumulate(d.end() - static_cast<long>(m), d.end(), 0.0) / static_cast<double>(m);
      const double amp = std::max(head - tail, 1e-3);
      const double span = t.back() - t.front();
      Vec p0(3);
      p0 << head, amp, 1.0 / span;
      r.loss_fit = nlls(
          [](double x, const Vec& p) { return p[0] + p[1] * std::expm1(-p[2] * x); }, t, d, p0,
          {"offset", "amplitude", "rate"});
    } catch (const std::exception& e) {
      r.warnings.push_back(std::string("loss fit failed: ") + e.what());
    }
  }
  return r;
}

// ---------------------------------------------------------------- sinusoids

namespace {

struct LinearSin {
  double amplitude, phase, offset, rss;
};

LinearSin linear_sinusoid(const std::vector<double>& x, const std::vector<double>& y, double f) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd M(n, 3);
  Vec b = to_vec(y);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double th = units::two_pi * f * x[static_cast<std::size_t>(i)];
    M(i, 0) = std::cos(th);
    M(i, 1) = std::sin(th);
    M(i, 2) = 1.0;
  }
  const Vec c = M.colPivHouseholderQr().solve(b);
  LinearSin s;
  s.amplitude = std::hypot(c[0], c[1]);
  s.phase = std::atan2(-c[1], c[0]);
  s.offset = c[2];
  s.rss = (M * c - b).squaredNorm();
  return s;
}

}  // namespace

FitResult fit_sinusoid(const std::vector<double>& x, const std::vector<double>& y, const SinusoidOptions& options) {
  if (x.size() != y.size()) throw FitError("x and y lengths differ");
  if (x.size() < 5) throw FitError("sinusoid fit needs at least 5 points");
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  const double span = *xmax - *xmin;
  if (!(span > 0.0)) throw FitError("sinusoid fit needs distinct x values");

  double f = 0.0;
  if (options.frequency) {
    f = *options.frequency;
  } else {
    // Least-squares periodogram on an oversampled grid.
    std::vector<double> dx;
    std::vector<double> xs(x);
    std::sort(xs.begin(), xs.end());
    double min_dx = span;
    for (std::size_t i = 1; i < xs.size(); ++i) {
      if (xs[i] > xs[i - 1]) min_dx = std::min(min_dx, xs[i] - xs[i - 1]);
    }
    const double fmax = 0.5 / min_dx;
    const double df = 0.1 / span;
    double best = inf;
    for (double ff = df; ff <= fmax; ff += df) {
      const auto s = linear_sinusoid(x, y, ff);
      if (s.rss < best) {
        best = s.rss;
        f = ff;
      }
    }
  }
  const auto lin = linear_sinusoid(x, y, f);
  const double scale = std::max(std::abs(lin.offset), *std::max_element(y.begin(), y.end()) - *std::min_element(y.begin(), y.end()));

  const std::vector<std::string> names = options.damped
                                             ? std::vector<std::string>{"amplitude", "frequency", "phase", "offset", "decay"}
                                             : std::vector<std::string>{"amplitude", "frequency", "phase", "offset"};
  auto eval = [damped = options.damped](double xx, double a, double ff, double ph, double off, double dec) {
    const double v = a * std::cos(units::two_pi * ff * xx + ph);
    return off + (damped ? v * std::exp(-xx / dec) : v);
  };

  if (lin.amplitude <= 1e-12 * std::max(scale, 1e-300) || lin.amplitude == 0.0) {
    FitResult out;
    out.names = names;
    out.values = Vec::Zero(static_cast<Eigen::Index>(names.size()));
    out.values[1] = f;
    out.values[3] = lin.offset;
    if (options.damped) out.values[4] = inf;
    out.sigma = Vec::Zero(out.values.size());
    out.covariance = Eigen::MatrixXd::Zero(out.values.size(), out.values.size());
    out.converged = true;
    out.dof = x.size() - 1;
    out.rss = lin.rss;
    out.flags.push_back("frequency_unidentifiable");
    return out;
  }

  FitResult fit;
  if (options.frequency) {
    // Frequency held fixed: fit amplitude, phase, offset (and decay).
    Vec p0(options.damped ? 4 : 3);
    p0[0] = lin.amplitude;
    p0[1] = lin.phase;
    p0[2] = lin.offset;
    if (options.damped) p0[3] = span;
    std::vector<std::string> sub = {"amplitude", "phase", "offset"};
    if (options.damped) sub.push_back("decay");
    const auto inner = nlls(
        [&](double xx, const Vec& p) { return eval(xx, p[0], f, p[1], p[2], options.damped ? p[3] : 1.0); }, x, y, p0,
        sub);
    const auto P = static_cast<Eigen::Index>(names.size());
    fit = inner;
    fit.names = names;
    fit.values = Vec::Zero(P);
    fit.covariance = Eigen::MatrixXd::Zero(P, P);
    const std::vector<Eigen::Index> map = options.damped ? std::vector<Eigen::Index>{0, 2, 3, 4}
                                                         : std::vector<Eigen::Index>{0, 2, 3};
    for (std::size_t i = 0; i < map.size(); ++i) {
      fit.values[map[i]] = inner.values[static_cast<Eigen::Index>(i)];
      for (std::size_t j = 0; j < map.size(); ++j) {
        fit.covariance(map[i], map[j]) = inner.covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
    }
    fit.values[1] = f;
    fit.sigma = fit.covariance.diagonal().cwiseSqrt();
  } else {
    Vec p0(options.damped ? 5 : 4);
    p0[0] = lin.amplitude;
    p0[1] = f;
    p0[2] = lin.phase;
    p0[3] = lin.offset;
    if (options.damped) p0[4] = span;
    fit = nlls([&](double xx, const Vec& p) { return eval(xx, p[0], p[1], p[2], p[3], options.damped ? p[4] : 1.0); },
               x, y, p0, names);
  }
  // Canonical sign: positive amplitude, phase in (-pi, pi].
  if (fit.values[0] < 0.0) {
    fit.values[0] = -fit.values[0];
    fit.values[2] += units::pi;
    fit.covariance.row(0) *= -1.0;
    fit.covariance.col(0) *= -1.0;
  }
  fit.values[2] = std::remainder(fit.values[2], units::two_pi);
  return fit;
}

Contrast sinusoid_contrast(const FitResult& fit) {
  const double a = fit.value("amplitude"), o = fit.value("offset");
  Contrast c;
  if (o == 0.0) throw FitError("contrast undefined for zero offset");
  c.value = a / o;
  const double va = fit.covariance(0, 0), vo = fit.covariance(3, 3), cao = fit.covariance(0, 3);
  const double var = va / (o * o) + a * a * vo / (o * o * o * o) - 2.0 * a * cao / (o * o * o);
  c.sigma = std::sqrt(std::max(var, 0.0));
  return c;
}

FitResult fit_gaussian_decay(const std::vector<double>& t, const std::vector<double>& contrast,
                             const std::vector<double>& sigma) {
  if (t.size() != contrast.size()) throw FitError("T and contrast lengths differ");
  if (t.size() < 3) throw FitError("Gaussian decay fit is underdetermined with fewer than 3 points");
  for (double c : contrast) {
    if (!(c >= 0.0 && c <= 1.05)) throw FitError("contrast values must lie in [0, 1.05]");
  }
  std::vector<double> t2, lc;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (contrast[i] > 0.0) {
      t2.push_back(t[i] * t[i]);
      lc.push_back(std::log(contrast[i]));
    }
  }
  double c0 = *std::max_element(contrast.begin(), contrast.end());
  double T2 = 0.5 * (*std::max_element(t.begin(), t.end()));
  try {
    const auto lin = fit_linear(t2, lc);
    if (lin.value("slope") < 0.0) {
      T2 = 1.0 / std::sqrt(-lin.value("slope"));
      c0 = std::exp(lin.value("intercept"));
    }
  } catch (const FitError&) {
  }
  Vec p0(2);
  p0 << c0, T2;
  auto fit = nlls([](double x, const Vec& p) { return p[0] * std::exp(-(x / p[1]) * (x / p[1])); }, t, contrast, p0,
                  {"c0", "t2"}, sigma);
  fit.values[1] = std::abs(fit.values[1]);
  return fit;
}

FitResult fit_linear(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& sigma) {
  if (x.size() != y.size()) throw FitError("x and y lengths differ");
  if (!sigma.empty() && sigma.size() != x.size()) throw FitError("sigma length differs");
  if (x.size() < 2) throw FitError("linear fit needs at least 2 points");
  double S = 0, Sx = 0, Sy = 0, Sxx = 0, Sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double w = 1.0;
    if (!sigma.empty()) {
      if (!(sigma[i] > 0.0)) throw FitError("sigma must be > 0");
      w = 1.0 / (sigma[i] * sigma[i]);
    }
    S += w;
    Sx += w * x[i];
    Sy += w * y[i];
    Sxx += w * x[i] * x[i];
    Sxy += w * x[i] * y[i];
  }
  const double D = S * Sxx - Sx * Sx;
  if (!(D > 1e-14 * S * Sxx) || D == 0.0) throw FitError("all x values are identical; slope undefined");
  const double slope = (S * Sxy - Sx * Sy) / D;
  const double intercept = (Sxx * Sy - Sx * Sxy) / D;
  FitResult fit;
  fit.names = {"slope", "intercept"};
  fit.values = Vec(2);
  fit.values << slope, intercept;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - slope * x[i] - intercept;
    rss += sigma.empty() ? r * r : r * r / (sigma[i] * sigma[i]);
  }
  fit.rss = rss;
  fit.dof = x.size() - 2;
  double scale = 1.0;
  if (sigma.empty()) scale = fit.dof > 0 ? rss / static_cast<double>(fit.dof) : 0.0;
  if (fit.dof == 0) fit.flags.push_back("no_degrees_of_freedom");
  fit.covariance = Eigen::MatrixXd(2, 2);
  fit.covariance << S / D, -Sx / D, -Sx / D, Sxx / D;
  fit.covariance *= scale;
  fit.sigma = fit.covariance.diagonal().cwiseSqrt();
  fit.converged = true;
  return fit;
}

Ratio detection_fidelity(double pm, double sm, double pe, double se) {
  if (pe == 0.0) throw FitError("excitation probability is zero");
  if (!(pm > 0.0 && pm <= 1.05) || !(pe > 0.0 && pe <= 1.05)) throw FitError("probabilities must lie in (0, 1.05]");
  if (sm < 0.0 || se < 0.0) throw FitError("uncertainties must be >= 0");
  Ratio r;
  r.value = pm / pe;
  r.sigma = r.value * std::hypot(sm / pm, se / pe);
  return r;
}

// ---------------------------------------------------------------- CSV

Trace trace_from_samples(const std::vector<double>& t, const std::vector<double>& y, const std::string& source) {
  if (t.size() != y.size()) throw ConfigError(source + ": time and value columns differ in length");
  if (t.size() < 2) throw ConfigError(source + ": need at least 2 samples");
  Trace tr;
  tr.t0 = t.front();
  tr.dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  if (!(tr.dt > 0.0)) throw ConfigError(source + ": time column must increase");
  const double first = t[1] - t[0];
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (std::abs((t[i] - t[i - 1]) - first) > 1e-6 * std::abs(first)) {
      throw ConfigError(source + ":" + std::to_string(i + 2) + ": non-uniform sampling");
    }
  }
  tr.y = y;
  return tr;
}

Trace read_trace_csv(std::istream& in, const std::string& source) {
  std::string line;
  int line_no = 0;
  bool header = false;
  std::vector<double> t, y;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      if (std::count(line.begin(), line.end(), ',') != 1) {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": expected a two-column header (t, y)");
      }
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 2 columns");
    }
    try {
      std::size_t p1 = 0, p2 = 0;
      const std::string a = line.substr(0, comma), b = line.substr(comma + 1);
      const double tv = std::stod(a, &p1), yv = std::stod(b, &p2);
      if (p1 != a.size() || p2 != b.size()) throw std::invalid_argument(line);
      t.push_back(tv);
      y.push_back(yv);
    } catch (const std::exception&) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": not a number");
    }
  }
  if (!header) throw ConfigError(source + ": empty trace CSV");
  return trace_from_samples(t, y, source);
}

Trace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return read_trace_csv(in, path);
}

void write_trace_csv(std::ostream& out, const Trace& trace, const std::string& column) {
  out << "t_s," << column << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < trace.size(); ++i) out << trace.time(i) << ',' << trace.y[i] << '\n';
}

}  // namespace fsq::dsp
