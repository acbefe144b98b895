#include "fsq/trap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "fsq/errors.hpp"

namespace fsq::trap {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace

void PolarizabilityTable::add(atom::Manifold state, const PolarizabilityRow& row) {
  const std::string name(atom::manifold_name(state));
  if (!(row.wavelength_nm > 0.0)) throw ConfigError(name + ": wavelength must be > 0");
  if (row.alpha_s_sigma < 0.0 || row.alpha_t_sigma < 0.0) throw ConfigError(name + ": uncertainties must be >= 0");
  if (atom::manifold_j(state) == 0 && (row.alpha_t != 0.0 || row.alpha_t_sigma != 0.0)) {
    throw ConfigError(name + ": J=0 state must have alpha_t = 0");
  }
  auto& list = rows_[state];
  if (!list.empty() && !(row.wavelength_nm > list.back().wavelength_nm)) {
    throw ConfigError(name + ": wavelengths must be strictly increasing (" + fmt(row.wavelength_nm) + " nm after " +
                      fmt(list.back().wavelength_nm) + " nm)");
  }
  list.push_back(row);
}

const std::vector<PolarizabilityRow>& PolarizabilityTable::rows(atom::Manifold state) const {
  const auto it = rows_.find(state);
  if (it == rows_.end()) {
    throw ModelError("polarizability table has no rows for " + std::string(atom::manifold_name(state)));
  }
  return it->second;
}

std::vector<atom::Manifold> PolarizabilityTable::states() const {
  std::vector<atom::Manifold> out;
  for (const auto& [s, r] : rows_) out.push_back(s);
  return out;
}

PolarizabilityRow PolarizabilityTable::at(atom::Manifold state, double wavelength_nm) const {
  const auto& list = rows(state);
  const double lo = list.front().wavelength_nm, hi = list.back().wavelength_nm;
  if (wavelength_nm < lo || wavelength_nm > hi) {
    throw ModelError("wavelength " + fmt(wavelength_nm) + " nm is outside the table range [" + fmt(lo) + ", " +
                     fmt(hi) + "] nm for " + std::string(atom::manifold_name(state)) + "; extrapolation refused");
  }
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (list[i].wavelength_nm == wavelength_nm) return list[i];
  }
  const auto it = std::upper_bound(list.begin(), list.end(), wavelength_nm,
                                   [](double w, const PolarizabilityRow& r) { return w < r.wavelength_nm; });
  const auto& b = *it;
  const auto& a = *(it - 1);
  const double f = (wavelength_nm - a.wavelength_nm) / (b.wavelength_nm - a.wavelength_nm);
  auto lerp = [f](double x, double y) { return x + f * (y - x); };
  return {wavelength_nm, lerp(a.alpha_s, b.alpha_s), lerp(a.alpha_s_sigma, b.alpha_s_sigma), lerp(a.alpha_t, b.alpha_t),
          lerp(a.alpha_t_sigma, b.alpha_t_sigma)};
}

PolarizabilityTable parse_polarizability_csv(std::istream& in, const std::string& source) {
  static const char* header = "state,wavelength_nm,alpha_s,alpha_s_sigma,alpha_t,alpha_t_sigma";
  PolarizabilityTable table;
  std::string line;
  int line_no = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (!seen_header) {
      std::string compact;
      for (char c : t) {
        if (c != ' ' && c != '\t') compact += c;
      }
      if (compact != header) throw ConfigError(where + "expected header '" + header + "'");
      seen_header = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(t);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!t.empty() && t.back() == ',') cells.push_back("");
    if (cells.size() != 6) throw ConfigError(where + "expected 6 columns, got " + std::to_string(cells.size()));
    const auto state = atom::parse_manifold(cells[0]);
    if (!state) throw ConfigError(where + "unknown state '" + cells[0] + "'");
    double v[5];
    static const char* names[5] = {"wavelength_nm", "alpha_s", "alpha_s_sigma", "alpha_t", "alpha_t_sigma"};
    for (int k = 0; k < 5; ++k) {
      try {
        std::size_t used = 0;
        v[k] = std::stod(cells[static_cast<std::size_t>(k + 1)], &used);
        if (used != cells[static_cast<std::size_t>(k + 1)].size() || !std::isfinite(v[k])) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw ConfigError(where + "column '" + names[k] + "' is not a number");
      }
    }
    try {
      table.add(*state, {v[0], v[1], v[2], v[3], v[4]});
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  if (!seen_header) throw ConfigError(source + ": empty polarizability table");
  return table;
}

PolarizabilityTable load_polarizability_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return parse_polarizability_csv(in, path);
}

void LatticeConfig::validate() const {
  if (!(wavelength_nm > 0.0)) throw ConfigError("lattice wavelength must be > 0");
  if (!(depth >= 0.0)) throw ConfigError("lattice depth must be >= 0");
  if (!(angle >= 0.0 && angle <= 0.5 * units::pi + 1e-12)) throw ConfigError("lattice angle must lie in [0, 90] deg");
}

double LatticeConfig::depth_hz(double mass_u) const {
  validate();
  if (depth_unit == DepthUnit::RecoilEnergy) return depth * recoil_energy(wavelength_nm, mass_u).hz;
  return depth * hz_per_uk();
}

double LatticeConfig::depth_uk(double mass_u) const { return depth_hz(mass_u) / hz_per_uk(); }

double tensor_factor(double beta) {
  const double c = std::cos(beta);
  return 0.5 * (3.0 * c * c - 1.0);
}

Uncertain polarizability(atom::Manifold state, double wavelength_nm, double beta, const PolarizabilityTable& table) {
  const auto r = table.at(state, wavelength_nm);
  const double c = tensor_factor(beta);
  return {r.alpha_s - r.alpha_t * c, std::hypot(r.alpha_s_sigma, c * r.alpha_t_sigma)};
}

MagicAngle magic_angle(double wavelength_nm, const PolarizabilityTable& table) {
  using atom::Manifold;
  const auto p2 = table.at(Manifold::P2_3, wavelength_nm);
  const auto p0 = table.at(Manifold::P0_3, wavelength_nm);
  MagicAngle out;
  auto f = [&](double b) { return p2.alpha_s - p2.alpha_t * tensor_factor(b) - p0.alpha_s; };
  const double scale = std::max({std::abs(p0.alpha_s), std::abs(p2.alpha_s), 1e-300});
  if (p2.alpha_t == 0.0) {
    out.degenerate = std::abs(p2.alpha_s - p0.alpha_s) <= 1e-12 * scale;
    return out;
  }
  double a = 0.0, b = 0.5 * units::pi;
  double fa = f(a), fb = f(b);
  if (fa == 0.0) b = a;
  else if (fb == 0.0) a = b;
  else if ((fa > 0.0) == (fb > 0.0)) return out;
  while (b - a > 1e-13) {
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    if (fm == 0.0) {
      a = b = m;
      break;
    }
    if ((fm > 0.0) == (fa > 0.0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  const double beta = 0.5 * (a + b);
  out.angle = beta;
  // df/dbeta = 3 alpha_t cos sin
  const double slope = 3.0 * p2.alpha_t * std::cos(beta) * std::sin(beta);
  const double sf = std::sqrt(p2.alpha_s_sigma * p2.alpha_s_sigma +
                              std::pow(tensor_factor(beta) * p2.alpha_t_sigma, 2) + p0.alpha_s_sigma * p0.alpha_s_sigma);
  out.sigma = slope != 0.0 ? sf / std::abs(slope) : std::numeric_limits<double>::infinity();
  return out;
}

Recoil recoil_energy(double wavelength_nm, double mass_u) {
  if (!(wavelength_nm > 0.0) || !(mass_u > 0.0)) throw ModelError("recoil energy needs wavelength and mass > 0");
  const double lambda = wavelength_nm * 1e-9;
  const double m = mass_u * constants::atomic_mass_unit;
  Recoil r;
  r.hz = constants::planck / (2.0 * m * lambda * lambda);
  r.uk = constants::planck * r.hz / constants::boltzmann * 1e6;
  return r;
}

double hz_per_uk() { return constants::boltzmann * 1e-6 / constants::planck; }

Uncertain shift_slope(const PolarizabilityTable& table, double wavelength_nm, double beta) {
  const auto a2 = polarizability(atom::Manifold::P2_3, wavelength_nm, beta, table);
  const auto a0 = polarizability(atom::Manifold::P0_3, wavelength_nm, beta, table);
  if (a2.value == 0.0) throw ModelError("3P2 polarizability is zero; depth felt by up is undefined");
  const double k = hz_per_uk();
  const double r = (a2.value - a0.value) / a2.value;
  const double d2 = a0.value / (a2.value * a2.value);  // d r / d alpha2
  const double d0 = -1.0 / a2.value;
  return {k * r, k * std::hypot(d2 * a2.sigma, d0 * a0.sigma)};
}

double thermal_shift_spread(double temperature_uk, double slope, double depth_uk) {
  if (temperature_uk < 0.0 || depth_uk < 0.0) throw ModelError("thermal spread needs T and depth >= 0");
  return std::abs(slope) * 0.5 * temperature_uk;
}

double gaussian_t2star(double sigma_hz) {
  if (!(sigma_hz >= 0.0)) throw ModelError("spread must be >= 0");
  if (sigma_hz == 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(2.0) / (units::two_pi * sigma_hz);
}

}  // namespace fsq::trap
