#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fsq/driven.hpp"

namespace fsq::evolver {

using driven::cplx;
using driven::Matrix;
using driven::RotatingFrameModel;

class DensityMatrix {
 public:
  DensityMatrix() = default;
  explicit DensityMatrix(Matrix rho) : rho_(std::move(rho)) {}

  static DensityMatrix pure(std::size_t n, std::size_t level);
  static DensityMatrix from_state(const Eigen::VectorXcd& psi);

  std::size_t dim() const { return static_cast<std::size_t>(rho_.rows()); }
  const Matrix& matrix() const { return rho_; }
  Matrix& matrix() { return rho_; }

  double population(std::size_t i) const { return rho_(i, i).real(); }
  std::vector<double> populations() const;
  double trace() const { return rho_.trace().real(); }
  double hermiticity_error() const;
  double min_eigenvalue() const;
  // Throws NumericalError when any invariant is violated beyond `tol`.
  // Trace is only checked when `unit_trace` is set (lossy models leak).
  void validate(double tol = 1e-9, bool unit_trace = true) const;

 private:
  Matrix rho_;
};

// Column-stacking vectorized generator: d vec(rho)/dt = L vec(rho).
Matrix liouvillian(const RotatingFrameModel& model);
// exp(L dt)
Matrix propagator(const RotatingFrameModel& model, double dt);
Matrix propagator(const Matrix& liouvillian, double dt);

Eigen::VectorXcd vec(const Matrix& rho);
Matrix unvec(const Eigen::VectorXcd& v, std::size_t n);

enum class Method {
  Auto,          // propagator for constant generators, Runge-Kutta otherwise
  RungeKutta,    // adaptive Dormand-Prince 5(4)
  Propagator,    // exact exponential of the constant generator
};

struct EvolveOptions {
  Method method = Method::Auto;
  double rtol = 1e-9;
  double atol = 1e-11;
  double fixed_step = 0.0;  // > 0 disables step control (Runge-Kutta only)
  double max_step = 0.0;    // 0 = unlimited
  std::size_t max_steps = 50'000'000;
  bool renormalize = false;
  bool keep_states = false;
  // Time-dependent detuning offset (rad/s) added to the named field.
  std::function<double(double)> detuning_schedule;
  std::string ramp_field;
};

struct Trajectory {
  std::vector<double> times;                     // s
  std::vector<std::string> names;                // population columns
  std::vector<std::vector<double>> populations;  // [time][level]
  std::vector<double> lost;                      // 1 - trace, when tracked
  bool track_loss = false;
  std::vector<Matrix> states;
  std::size_t steps = 0;

  std::vector<double> column(const std::string& name) const;
  void write_csv(std::ostream& out) const;
  void write_csv(const std::string& path) const;
  static Trajectory read_csv(std::istream& in, const std::string& source = "<stream>");
  static Trajectory read_csv(const std::string& path);
};

Trajectory evolve(const RotatingFrameModel& model, const DensityMatrix& rho0, const std::vector<double>& times,
                  const EvolveOptions& options = {});
Trajectory evolve(const RotatingFrameModel& model, const DensityMatrix& rho0, double duration,
                  std::size_t samples, const EvolveOptions& options = {});
// Final state after `duration`.
DensityMatrix evolve_state(const RotatingFrameModel& model, const DensityMatrix& rho0, double duration,
                           const EvolveOptions& options = {});

// Unique normalized null vector of the Liouvillian.
DensityMatrix steady_state(const RotatingFrameModel& model);
// Slowest nonzero relaxation rate |Re lambda| of the Liouvillian.
double slowest_rate(const RotatingFrameModel& model);

double trace_distance(const DensityMatrix& a, const DensityMatrix& b);

std::vector<double> uniform_grid(double duration, std::size_t samples);

enum class Protocol { SteadyState, FixedTime };

struct ScanSpec {
  Protocol protocol = Protocol::SteadyState;
  double duration = 0.0;          // FixedTime only
  std::string initial = "up";     // FixedTime only
  std::string observable = "s";   // level label or "lost"
  EvolveOptions options;
  std::size_t workers = 0;
};

struct SpectrumPoint {
  double parameter;
  double value;
};

std::vector<SpectrumPoint> scan(const std::function<RotatingFrameModel(double)>& factory,
                                const std::vector<double>& grid, const ScanSpec& spec);

double observe(const RotatingFrameModel& model, const DensityMatrix& rho, const std::string& observable);

}  // namespace fsq::evolver
