#include "fsq/driven.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>

#include "fsq/errors.hpp"

namespace fsq::driven {

using atom::LevelRef;
using atom::Manifold;

void DriveField::validate() const {
  if (!(rabi >= 0.0) || !std::isfinite(rabi)) throw ModelError("field '" + id + "': Rabi frequency must be >= 0");
  if (!std::isfinite(detuning) || !std::isfinite(phase)) throw ModelError("field '" + id + "': non-finite detuning or phase");
  if (lower == upper) throw ModelError("field '" + id + "': transition endpoints coincide");
  if (coupling == Coupling::Dipole) {
    if (lower.m != upper.m) {
      throw ModelError("field '" + id + "': pi polarization requires equal m_J on " +
                       atom::level_label(lower) + " and " + atom::level_label(upper));
    }
    if (!dipole_allowed(lower, upper)) {
      throw ModelError("field '" + id + "': " + atom::level_label(lower) + " - " +
                       atom::level_label(upper) + " is not dipole allowed");
    }
  }
}

RamanConfig RamanConfig::make(double rabi_up, double rabi_down, double one_photon_detuning,
                              double two_photon_detuning) {
  RamanConfig c;
  c.up_field = {"up", atom::ref_up, atom::ref_s, rabi_up, one_photon_detuning, 0.0, Coupling::Dipole};
  c.down_field = {"down", atom::ref_down, atom::ref_s, rabi_down, one_photon_detuning - two_photon_detuning,
                  0.0, Coupling::Dipole};
  return c;
}

void RamanConfig::validate() const {
  up_field.validate();
  down_field.validate();
  if (!(up_field.upper == down_field.upper)) throw ModelError("Raman fields must share the excited level");
}

double CollapseOp::total_rate() const {
  double r = 0.0;
  for (const auto& [j, c] : sources) r += std::norm(c);
  return r;
}

Matrix CollapseOp::matrix(std::size_t n) const {
  Matrix m = Matrix::Zero(n, n);
  if (!target) return m;
  for (const auto& [j, c] : sources) m(*target, j) += c;
  return m;
}

std::optional<std::size_t> RotatingFrameModel::find(const std::string& label) const {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return i;
  }
  return std::nullopt;
}

std::size_t RotatingFrameModel::index(const std::string& label) const {
  if (auto i = find(label)) return *i;
  throw ModelError("model has no level named '" + label + "'");
}

const Eigen::VectorXd* RotatingFrameModel::detuning_axis(const std::string& field_id) const {
  for (const auto& [id, v] : detuning_axes) {
    if (id == field_id) return &v;
  }
  return nullptr;
}

double RotatingFrameModel::max_rate() const {
  double r = hamiltonian.cwiseAbs().maxCoeff();
  for (const auto& c : collapse) r = std::max(r, c.total_rate());
  return r;
}

bool RotatingFrameModel::has_loss() const {
  return std::any_of(collapse.begin(), collapse.end(), [](const CollapseOp& c) { return c.leaves_subspace(); });
}

bool dipole_allowed(LevelRef a, LevelRef b) {
  // Opposite parity (S <-> P), |dJ| <= 1, no J=0 <-> J=0, |dm| <= 1.
  if (atom::is_p_manifold(a.manifold) == atom::is_p_manifold(b.manifold)) return false;
  const int ja = atom::manifold_j(a.manifold), jb = atom::manifold_j(b.manifold);
  if (std::abs(ja - jb) > 1) return false;
  if (ja == 0 && jb == 0) return false;
  return std::abs(a.m - b.m) <= 1;
}

namespace {

struct Coupling_ {
  std::size_t lower, upper;
  cplx value;  // H(upper, lower)
  std::size_t field;
};

// Relative pi-transition amplitude of lower(m) -> upper(m).
double pi_amplitude(LevelRef lower, LevelRef upper) {
  return atom::clebsch_gordan(atom::manifold_j(lower.manifold), lower.m, 1, 0,
                              atom::manifold_j(upper.manifold), upper.m);
}

}  // namespace

RotatingFrameModel build_model(const std::vector<DriveField>& fields, const atom::LevelScheme& scheme,
                               const atom::AtomData& atom, const atom::MagneticEnvironment& env,
                               const ModelOptions& options) {
  env.validate();
  const std::size_t n = scheme.size();
  RotatingFrameModel model;
  for (std::size_t i = 0; i < n; ++i) {
    model.labels.push_back(scheme.name(i));
    model.refs.push_back(scheme.level(i).ref());
  }

  // Expand each field onto every pi pair it addresses.
  std::vector<Coupling_> couplings;
  for (std::size_t f = 0; f < fields.size(); ++f) {
    const auto& field = fields[f];
    field.validate();
    scheme.index(field.lower);
    scheme.index(field.upper);
    const cplx base = 0.5 * field.rabi * std::exp(cplx(0.0, field.phase));
    if (field.coupling == Coupling::Quadrupole) {
      couplings.push_back({scheme.index(field.lower), scheme.index(field.upper), base, f});
      continue;
    }
    const double ref_amp = pi_amplitude(field.lower, field.upper);
    if (ref_amp == 0.0) {
      throw ModelError("field '" + field.id + "': pi transition " + atom::level_label(field.lower) + " - " +
                       atom::level_label(field.upper) + " has zero strength");
    }
    const int jl = atom::manifold_j(field.lower.manifold);
    for (int m = -jl; m <= jl; ++m) {
      const LevelRef lo{field.lower.manifold, m};
      const LevelRef hi{field.upper.manifold, m};
      const auto il = scheme.find(lo), iu = scheme.find(hi);
      if (!il || !iu) continue;
      const double ratio = pi_amplitude(lo, hi) / ref_amp;
      if (ratio == 0.0) continue;
      couplings.push_back({*il, *iu, base * ratio, f});
    }
  }

  // Rotating frame: E_frame(upper) = E_frame(lower) + omega_laser along every
  // coupling; each connected component is anchored on its first level. The
  // diagonal is tracked directly as E - E_frame so THz manifold energies
  // cancel exactly and only Zeeman shifts and detunings remain.
  std::vector<std::optional<double>> diag(n);
  std::vector<Eigen::VectorXd> ddiag(fields.size(), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)));
  auto zee = [&](std::size_t i) { return atom::zeeman_shift(scheme.level(i).ref(), env); };
  for (std::size_t root = 0; root < n; ++root) {
    if (diag[root]) continue;
    diag[root] = zee(root);
    std::deque<std::size_t> queue{root};
    while (!queue.empty()) {
      const std::size_t a = queue.front();
      queue.pop_front();
      for (const auto& c : couplings) {
        if (c.lower != a && c.upper != a) continue;
        const auto& field = fields[c.field];
        const double mismatch = (zee(c.upper) - zee(c.lower)) -
                                (atom::zeeman_shift(field.upper, env) - atom::zeeman_shift(field.lower, env)) -
                                field.detuning;
        const bool upward = c.lower == a;
        const std::size_t b = upward ? c.upper : c.lower;
        const double sign = upward ? 1.0 : -1.0;
        const double value = *diag[a] + sign * mismatch;
        if (diag[b]) {
          const double scale = std::max({std::abs(value), std::abs(*diag[b]), 1.0});
          if (std::abs(*diag[b] - value) > 1e-9 * scale) {
            throw ModelError("drive configuration closes a loop with no common rotating frame");
          }
          continue;
        }
        diag[b] = value;
        for (std::size_t f = 0; f < fields.size(); ++f) {
          ddiag[f][static_cast<Eigen::Index>(b)] = ddiag[f][static_cast<Eigen::Index>(a)];
        }
        ddiag[c.field][static_cast<Eigen::Index>(b)] -= sign;
        queue.push_back(b);
      }
    }
  }

  model.hamiltonian = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) model.hamiltonian(i, i) = *diag[i];
  for (const auto& c : couplings) {
    model.hamiltonian(c.upper, c.lower) += c.value;
    model.hamiltonian(c.lower, c.upper) += std::conj(c.value);
  }
  for (std::size_t f = 0; f < fields.size(); ++f) model.detuning_axes.emplace_back(fields[f].id, ddiag[f]);

  if (options.scattering) {
    for (const auto& d : atom::decay_rates(scheme, atom.decay)) {
      if (d.rate <= 0.0) continue;
      const auto from = scheme.find(d.from);
      if (!from) continue;
      CollapseOp op;
      op.target = scheme.find(d.to);
      op.sources = {{*from, cplx(std::sqrt(d.rate), 0.0)}};
      op.label = atom::level_label(d.from) + "->" + atom::level_label(d.to);
      model.collapse.push_back(std::move(op));
    }
  }
  for (const auto& [label, rate] : options.dephasing) {
    if (rate < 0.0) throw ModelError("dephasing rate must be >= 0");
    if (rate == 0.0) continue;
    const auto i = scheme.find_name(label);
    if (!i) throw ModelError("dephasing on unknown level '" + label + "'");
    CollapseOp op;
    op.target = *i;
    op.sources = {{*i, cplx(std::sqrt(rate), 0.0)}};
    op.label = "dephasing " + label;
    model.collapse.push_back(std::move(op));
  }
  return model;
}

bool should_eliminate(const RamanConfig& config, double gamma_s) {
  const double scale = std::max({config.up_field.rabi, config.down_field.rabi, gamma_s});
  return std::abs(config.one_photon_detuning()) > 100.0 * scale;
}

RotatingFrameModel build_lambda_model(const RamanConfig& config, const atom::MagneticEnvironment& env,
                                      const atom::LevelScheme& scheme, const atom::AtomData& atom,
                                      const ModelOptions& options) {
  config.validate();
  for (const auto r : {atom::ref_up, atom::ref_s, atom::ref_down}) {
    if (!scheme.contains(r)) throw ModelError("scheme lacks the Lambda level " + atom::level_label(r));
  }
  ModelOptions build_opts = options;
  build_opts.scattering = true;
  auto model = build_model({config.up_field, config.down_field}, scheme, atom, env, build_opts);

  bool eliminate = false;
  if (options.elimination == Elimination::ForceEffective) {
    eliminate = true;
  } else if (options.elimination == Elimination::Auto) {
    eliminate = scheme.size() == 3 && should_eliminate(config, atom.decay.gamma_s);
  }
  if (eliminate) return eliminate_level(model, scheme.index(atom::ref_s), options.scattering);
  if (!options.scattering) {
    std::erase_if(model.collapse, [](const CollapseOp& c) { return c.label.rfind("dephasing", 0) != 0; });
  }
  return model;
}

RotatingFrameModel build_single_drive_model(const DriveField& field, const atom::MagneticEnvironment& env,
                                            const atom::LevelScheme& scheme, const atom::AtomData& atom,
                                            const ModelOptions& options) {
  return build_model({field}, scheme, atom, env, options);
}

RotatingFrameModel eliminate_level(const RotatingFrameModel& model, std::size_t e, bool keep_scattering) {
  const std::size_t n = model.dim();
  if (e >= n) throw ModelError("eliminated level index out of range");
  if (model.eliminated) throw ModelError("model already has an eliminated level");

  std::vector<std::size_t> keep;
  std::vector<std::optional<std::size_t>> remap(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == e) continue;
    remap[i] = keep.size();
    keep.push_back(i);
  }

  double gamma_e = 0.0;
  for (const auto& c : model.collapse) {
    const bool from_e = std::any_of(c.sources.begin(), c.sources.end(), [&](const auto& s) { return s.first == e; });
    if (c.target && *c.target == e && !(from_e && c.sources.size() == 1)) {
      throw ModelError("cannot eliminate a level that is fed by decay");
    }
    if (from_e) {
      if (c.sources.size() != 1) throw ModelError("cannot eliminate a level inside a multi-source jump");
      if (!(c.target && *c.target == e)) gamma_e += c.total_rate();
    }
  }

  const Matrix& H = model.hamiltonian;
  const cplx h = H(e, e) - cplx(0.0, 0.5 * gamma_e);
  if (std::abs(h) == 0.0) throw ModelError("eliminated level is resonant and undamped");

  RotatingFrameModel out;
  out.eliminated = true;
  const auto m = static_cast<Eigen::Index>(keep.size());
  out.hamiltonian = Matrix::Zero(m, m);
  for (std::size_t a = 0; a < keep.size(); ++a) {
    out.labels.push_back(model.labels[keep[a]]);
    out.refs.push_back(model.refs[keep[a]]);
    for (std::size_t b = 0; b < keep.size(); ++b) {
      const std::size_t i = keep[a], j = keep[b];
      const cplx t1 = H(i, e) * H(e, j) / h;
      const cplx t2 = std::conj(H(j, e) * H(e, i) / h);
      out.hamiltonian(a, b) = H(i, j) - 0.5 * (t1 + t2);
    }
  }

  for (const auto& c : model.collapse) {
    const bool from_e = c.sources.size() == 1 && c.sources.front().first == e;
    if (!from_e) {
      CollapseOp op;
      if (c.target) op.target = remap[*c.target];
      for (const auto& [j, v] : c.sources) op.sources.emplace_back(*remap[j], v);
      op.label = c.label;
      out.collapse.push_back(std::move(op));
      continue;
    }
    if (c.target && *c.target == e) continue;  // pure dephasing of e
    if (!keep_scattering) continue;
    CollapseOp op;
    if (c.target) op.target = remap[*c.target];
    const cplx amp = c.sources.front().second;
    for (std::size_t b = 0; b < keep.size(); ++b) {
      const cplx v = amp * H(e, keep[b]) / h;
      if (v != cplx(0.0)) op.sources.emplace_back(b, v);
    }
    if (op.sources.empty()) continue;
    op.label = c.label + " (effective)";
    out.collapse.push_back(std::move(op));
  }
  return out;
}

}  // namespace fsq::driven
