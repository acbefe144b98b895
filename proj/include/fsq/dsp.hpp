#pragma once

#include <complex>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fsq::dsp {

// Uniformly sampled signal.
struct Trace {
  double dt = 0.0;  // s
  double t0 = 0.0;  // s
  std::vector<double> y;
  std::vector<double> sigma;  // optional per-sample 1 sigma

  std::size_t size() const { return y.size(); }
  double time(std::size_t i) const { return t0 + dt * static_cast<double>(i); }
  std::vector<double> times() const;
  void validate(std::size_t min_samples = 1) const;
};

struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd values;
  Eigen::VectorXd sigma;
  Eigen::MatrixXd covariance;
  double rss = 0.0;
  std::size_t dof = 0;
  bool converged = false;
  std::size_t iterations = 0;
  std::vector<std::string> flags;

  double value(const std::string& name) const;
  double error(const std::string& name) const;
  bool has_flag(const std::string& flag) const;
};

struct NllsOptions {
  std::size_t max_iterations = 200;
  double rel_cost_tol = 1e-10;
  double gradient_tol = 1e-12;
  double initial_lambda = 1e-3;
};

// Vector model: predictions at every data point for parameters p.
using VectorModel = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using PointModel = std::function<double(double, const Eigen::VectorXd&)>;

// Levenberg-Marquardt on r = (y - f(p)) / sigma. Covariance is
// sigma_hat^2 (J^T J)^-1 with sigma_hat^2 = rss / (N - P).
FitResult nlls(const VectorModel& model, const Eigen::VectorXd& y, const Eigen::VectorXd& initial,
               const std::vector<std::string>& names, const Eigen::VectorXd& sigma = {},
               const NllsOptions& options = {});
FitResult nlls(const PointModel& model, const std::vector<double>& x, const std::vector<double>& y,
               const Eigen::VectorXd& initial, const std::vector<std::string>& names,
               const std::vector<double>& sigma = {}, const NllsOptions& options = {});

struct Spectrum {
  std::vector<double> frequency;  // Hz
  std::vector<double> magnitude;
};

// Full complex DFT of a real sequence (no normalization).
std::vector<std::complex<double>> fft_complex(const std::vector<double>& y);
// One-sided amplitude spectrum 2|Y_k|/N of the mean-removed trace.
Spectrum fft_spectrum(const Trace& trace);

// offset + amplitude (w/2)^2 / ((x - center)^2 + (w/2)^2), w = FWHM.
double lorentzian(double x, double center, double fwhm, double amplitude, double offset);
FitResult fit_lorentzian(const std::vector<double>& x, const std::vector<double>& y);
// Fit restricted to `half_window` bins either side of the strongest bin.
FitResult fit_lorentzian_peak(const Spectrum& spectrum, std::size_t half_window = 12);

struct Biquad {
  double b0, b1, b2, a1, a2;
};

// Second-order Butterworth band-pass (two biquads), unit gain at the
// prewarped geometric centre.
std::vector<Biquad> butterworth_bandpass_design(double f_lo, double f_hi, double fs);
std::complex<double> frequency_response(const std::vector<Biquad>& sos, double f, double fs);
std::vector<double> sosfilt(const std::vector<Biquad>& sos, const std::vector<double>& x,
                            const std::vector<double>* zi_scale = nullptr);
std::vector<double> sosfiltfilt(const std::vector<Biquad>& sos, const std::vector<double>& x);
Trace butterworth_bandpass(const Trace& trace, double f_lo, double f_hi, bool zero_phase = true);

struct Envelope {
  Trace envelope;
  std::size_t edge = 0;  // samples flagged at each end
  bool valid(std::size_t i) const { return i >= edge && i + edge < envelope.size(); }
};

// sqrt(y^2 + H[y]^2) via the FFT analytic signal; 5 % of samples per side flagged.
Envelope hilbert_envelope(const Trace& trace, double edge_fraction = 0.05);

// A exp(-t/tau) on unflagged samples; parameters "amplitude", "rate",
// derived "tau" reported through tau()/tau_sigma(). Flag "non_decaying"
// when the rate is not significantly positive.
struct ExponentialFit {
  FitResult fit;
  double amplitude = 0.0;
  double tau = 0.0;
  double tau_sigma = 0.0;
  bool non_decaying = false;
};
ExponentialFit fit_exponential(const Envelope& envelope);
ExponentialFit fit_exponential(const Trace& trace, std::size_t skip_each_side = 0);

struct RabiExtraction {
  double rabi = 0.0;  // rad/s
  double rabi_sigma = 0.0;
  double tau = 0.0;  // s
  double tau_sigma = 0.0;
  double cycles = 0.0;
  double cycles_sigma = 0.0;
  bool non_decaying = false;
  FitResult spectrum_fit;
  ExponentialFit envelope_fit;
  Trace filtered;
  Envelope envelope;
  // Fit of raw minus filtered: offset - A (1 - exp(-t/tau_loss)).
  std::optional<FitResult> loss_fit;
  std::vector<std::string> warnings;
};

struct ExtractOptions {
  double band_fraction = 0.5;  // cut-offs at (1 -+ fraction) f_peak
  bool zero_phase = true;
  bool fit_loss = true;
  std::size_t lorentzian_half_window = 12;
};

// FFT -> Lorentzian -> band-pass -> Hilbert envelope -> exponential.
RabiExtraction extract_rabi(const Trace& trace, const ExtractOptions& options = {});

struct SinusoidOptions {
  std::optional<double> frequency;  // fixed frequency in cycles per unit x
  bool damped = false;              // multiply by exp(-x / decay)
};

// offset + amplitude cos(2 pi f x + phase) [exp(-x/decay)]. Parameters:
// amplitude, frequency, phase, offset[, decay]; derived contrast via
// sinusoid_contrast. Flag "frequency_unidentifiable" for zero amplitude.
FitResult fit_sinusoid(const std::vector<double>& x, const std::vector<double>& y,
                       const SinusoidOptions& options = {});

struct Contrast {
  double value = 0.0;
  double sigma = 0.0;
};
Contrast sinusoid_contrast(const FitResult& fit);

// C0 exp(-(T/T2)^2); parameters "c0", "t2".
FitResult fit_gaussian_decay(const std::vector<double>& t, const std::vector<double>& contrast,
                             const std::vector<double>& sigma = {});

// Weighted closed-form straight line; parameters "slope", "intercept".
// With sigma the uncertainties are absolute, otherwise residual-scaled.
FitResult fit_linear(const std::vector<double>& x, const std::vector<double>& y,
                     const std::vector<double>& sigma = {});

struct Ratio {
  double value = 0.0;
  double sigma = 0.0;
};
// p_measured / p_excitation with first-order independent-error propagation.
Ratio detection_fidelity(double p_measured, double sigma_measured, double p_excitation, double sigma_excitation);

// Two-column (t, y) CSV with a header line; sampling must be uniform.
Trace read_trace_csv(std::istream& in, const std::string& source = "<stream>");
Trace read_trace_csv(const std::string& path);
void write_trace_csv(std::ostream& out, const Trace& trace, const std::string& column = "y");
Trace trace_from_samples(const std::vector<double>& t, const std::vector<double>& y, const std::string& source);

}  // namespace fsq::dsp
