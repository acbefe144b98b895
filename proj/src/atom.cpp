#include "fsq/atom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>

#include "fsq/config.hpp"
#include "fsq/errors.hpp"
#include "fsq/units.hpp"

namespace fsq::atom {

namespace {

std::size_t idx(Manifold m) { return static_cast<std::size_t>(m); }

double factorial(int n) { return std::tgamma(n + 1.0); }

}  // namespace

int manifold_j(Manifold m) {
  switch (m) {
    case Manifold::S0_1: return 0;
    case Manifold::P0_3: return 0;
    case Manifold::P1_3: return 1;
    case Manifold::P2_3: return 2;
    case Manifold::S1_3: return 1;
  }
  return 0;
}

std::string_view manifold_name(Manifold m) {
  switch (m) {
    case Manifold::S0_1: return "1S0";
    case Manifold::P0_3: return "3P0";
    case Manifold::P1_3: return "3P1";
    case Manifold::P2_3: return "3P2";
    case Manifold::S1_3: return "3S1";
  }
  return "?";
}

std::optional<Manifold> parse_manifold(std::string_view name) {
  for (Manifold m : all_manifolds) {
    if (manifold_name(m) == name) return m;
  }
  return std::nullopt;
}

bool is_p_manifold(Manifold m) {
  return m == Manifold::P0_3 || m == Manifold::P1_3 || m == Manifold::P2_3;
}

std::string level_label(LevelRef ref) {
  std::string s(manifold_name(ref.manifold));
  s += "_m";
  if (ref.m > 0) s += "+";
  s += std::to_string(ref.m);
  return s;
}

void MagneticEnvironment::validate() const {
  if (!(field_gauss >= 0.0)) throw ConfigError("magnetic field must be >= 0 G");
  for (Manifold m : all_manifolds) {
    if (manifold_j(m) == 0 && g(m) && *g(m) != 0.0) {
      throw ConfigError("J=0 manifold " + std::string(manifold_name(m)) +
                        " cannot have a linear Zeeman shift");
    }
  }
}

double zeeman_shift(LevelRef level, const MagneticEnvironment& env) {
  const auto g = env.g(level.manifold);
  if (!g) {
    throw ConfigError("no Lande factor defined for manifold " +
                      std::string(manifold_name(level.manifold)));
  }
  if (std::abs(level.m) > manifold_j(level.manifold)) {
    throw ConfigError("m_J out of range for " + level_label(level));
  }
  return units::two_pi * constants::bohr_magneton_hz_per_gauss * (*g) * level.m *
         env.field_gauss;
}

// Racah's closed formula.
double clebsch_gordan(int j1, int m1, int j2, int m2, int J, int M) {
  if (m1 + m2 != M) return 0.0;
  if (std::abs(m1) > j1 || std::abs(m2) > j2 || std::abs(M) > J) return 0.0;
  if (J < std::abs(j1 - j2) || J > j1 + j2) return 0.0;
  const double pre = std::sqrt((2.0 * J + 1.0) * factorial(J + j1 - j2) * factorial(J - j1 + j2) *
                               factorial(j1 + j2 - J) / factorial(j1 + j2 + J + 1));
  const double norm = std::sqrt(factorial(J + M) * factorial(J - M) * factorial(j1 - m1) *
                                factorial(j1 + m1) * factorial(j2 - m2) * factorial(j2 + m2));
  double sum = 0.0;
  for (int k = 0; k <= j1 + j2 + J; ++k) {
    const int a = j1 + j2 - J - k;
    const int b = j1 - m1 - k;
    const int c = j2 + m2 - k;
    const int d = J - j2 + m1 + k;
    const int e = J - j1 - m2 + k;
    if (a < 0 || b < 0 || c < 0 || d < 0 || e < 0) continue;
    const double term =
        1.0 / (factorial(k) * factorial(a) * factorial(b) * factorial(c) * factorial(d) * factorial(e));
    sum += (k % 2 == 0 ? term : -term);
  }
  return pre * norm * sum;
}

double clebsch_gordan_sq(int j1, int m1, int j2, int m2, int J, int M) {
  const double c = clebsch_gordan(j1, m1, j2, m2, J, M);
  return c * c;
}

double DecayTable::fraction_sum() const {
  double s = 0.0;
  for (const auto& c : channels) s += c.fraction;
  return s;
}

void DecayTable::validate(const std::array<double, 5>& manifold_energy) const {
  if (channels.empty()) return;
  if (!(gamma_s >= 0.0)) throw ModelError("decay linewidth must be >= 0");
  if (!(p1_lifetime > 0.0)) throw ModelError("3P1 lifetime must be > 0");
  std::map<Manifold, double> per_source;
  for (const auto& c : channels) {
    if (!(c.fraction >= 0.0 && c.fraction <= 1.0)) {
      throw ModelError("decay fraction outside [0,1] for channel " +
                       std::string(manifold_name(c.from)) + " -> " + std::string(manifold_name(c.to)));
    }
    if (!(manifold_energy[idx(c.from)] > manifold_energy[idx(c.to)])) {
      throw ModelError("decay channel " + std::string(manifold_name(c.from)) + " -> " +
                       std::string(manifold_name(c.to)) + " is not downhill in energy");
    }
    if (c.target == DecayTarget::Specific && std::abs(c.to_m) > manifold_j(c.to)) {
      throw ModelError("decay target m_J out of range in " + std::string(manifold_name(c.to)));
    }
    if (std::abs(manifold_j(c.from) - manifold_j(c.to)) > 1 ||
        (manifold_j(c.from) == 0 && manifold_j(c.to) == 0)) {
      throw ModelError("decay channel " + std::string(manifold_name(c.from)) + " -> " +
                       std::string(manifold_name(c.to)) + " is not dipole allowed");
    }
    per_source[c.from] += c.fraction;
  }
  for (const auto& [from, sum] : per_source) {
    if (std::abs(sum - 1.0) > 2e-3) {
      throw ModelError("decay fractions from " + std::string(manifold_name(from)) + " sum to " +
                       std::to_string(sum) + ", outside 0.2 % of unity");
    }
  }
}

DecayTable strontium_decay_table() {
  DecayTable t;
  t.gamma_s = units::mhz * 11.0;
  t.channels = {
      {Manifold::S1_3, Manifold::P2_3, DecayTarget::Specific, 0, 0.217},
      {Manifold::S1_3, Manifold::P0_3, DecayTarget::Specific, 0, 0.116},
      {Manifold::S1_3, Manifold::P1_3, DecayTarget::All, 0, 0.340},
      {Manifold::S1_3, Manifold::P2_3, DecayTarget::NonZero, 0, 0.326},
  };
  return t;
}

AtomData strontium88() {
  AtomData a;
  // Term energies above the ground state, in THz.
  const double p0 = 429.2285, p1 = 434.8296, p2 = 446.6478, s1 = 870.5592;
  const double zero = 0.5 * (p0 + p2);
  a.manifold_energy[idx(Manifold::S0_1)] = units::thz * (0.0 - zero);
  a.manifold_energy[idx(Manifold::P0_3)] = units::thz * (p0 - zero);
  a.manifold_energy[idx(Manifold::P1_3)] = units::thz * (p1 - zero);
  a.manifold_energy[idx(Manifold::P2_3)] = units::thz * (p2 - zero);
  a.manifold_energy[idx(Manifold::S1_3)] = units::thz * (s1 - zero);
  a.decay = strontium_decay_table();
  a.mass_u = constants::mass_sr88_u;
  return a;
}

namespace {

config::Schema atom_schema() {
  using config::Dimension;
  config::Schema s;
  s.add("atom", "name", Dimension::Text);
  s.add("atom", "mass", Dimension::Mass, 0.0);
  for (Manifold m : all_manifolds) {
    s.add("levels", std::string(manifold_name(m)), Dimension::Frequency, 0.0);
    s.add("zeeman", "g_" + std::string(manifold_name(m)), Dimension::Ratio);
  }
  s.add("zeeman", "field", Dimension::Field, 0.0);
  s.add("decay", "linewidth", Dimension::Frequency, 0.0);
  s.add("decay", "3P1_lifetime", Dimension::Time, 0.0);
  s.add("decay", "intercombination", Dimension::Text);
  s.add("channel*", "from", Dimension::Text);
  s.add("channel*", "to", Dimension::Text);
  s.add("channel*", "target", Dimension::Text);
  s.add("channel*", "fraction", Dimension::Ratio, 0.0, 1.0);
  return s;
}

Manifold manifold_or_throw(const config::Config& cfg, const std::string& section,
                           const std::string& key) {
  const auto& e = cfg.at(section, key);
  const auto m = parse_manifold(e.raw);
  if (!m) {
    throw ConfigError(cfg.source() + ":" + std::to_string(e.line) + ": unknown manifold '" + e.raw +
                      "'");
  }
  return *m;
}

}  // namespace

AtomData parse_atom_data(std::string_view text, const std::string& source) {
  const auto cfg = config::Config::parse(text, atom_schema(), source);
  AtomData a;
  a.mass_u = cfg.number_or("atom", "mass", constants::mass_sr88_u);

  std::array<double, 5> absolute{};
  for (Manifold m : all_manifolds) {
    const std::string key(manifold_name(m));
    absolute[idx(m)] = cfg.number_or("levels", key, m == Manifold::S0_1 ? 0.0 : -1.0);
    if (absolute[idx(m)] < 0.0) {
      throw ConfigError(source + ": missing required key 'levels." + key + "'");
    }
  }
  const double zero = 0.5 * (absolute[idx(Manifold::P0_3)] + absolute[idx(Manifold::P2_3)]);
  for (Manifold m : all_manifolds) a.manifold_energy[idx(m)] = absolute[idx(m)] - zero;

  a.magnetic.field_gauss = cfg.number_or("zeeman", "field", 0.0);
  for (Manifold m : all_manifolds) {
    const std::string key = "g_" + std::string(manifold_name(m));
    if (cfg.has("zeeman", key)) a.magnetic.g_j[idx(m)] = cfg.number("zeeman", key);
  }
  a.magnetic.validate();

  a.decay.gamma_s = cfg.number("decay", "linewidth");
  a.decay.p1_lifetime = cfg.number_or("decay", "3P1_lifetime", a.decay.p1_lifetime);
  const auto mode = cfg.text_or("decay", "intercombination", "sequential");
  if (mode == "sequential") {
    a.decay.intercombination = IntercombinationMode::Sequential;
  } else if (mode == "effective") {
    a.decay.intercombination = IntercombinationMode::Effective;
  } else {
    const auto& e = cfg.at("decay", "intercombination");
    throw ConfigError(source + ":" + std::to_string(e.line) +
                      ": intercombination must be 'sequential' or 'effective'");
  }

  for (const auto& section : cfg.sections()) {
    if (section.rfind("channel", 0) != 0) continue;
    DecayChannel c;
    c.from = manifold_or_throw(cfg, section, "from");
    c.to = manifold_or_throw(cfg, section, "to");
    c.fraction = cfg.number(section, "fraction");
    const auto& target = cfg.at(section, "target");
    if (target.raw == "all") {
      c.target = DecayTarget::All;
    } else if (target.raw == "nonzero") {
      c.target = DecayTarget::NonZero;
    } else if (target.raw.rfind("m", 0) == 0) {
      c.target = DecayTarget::Specific;
      try {
        c.to_m = std::stoi(target.raw.substr(1));
      } catch (const std::exception&) {
        throw ConfigError(source + ":" + std::to_string(target.line) + ": bad target '" + target.raw + "'");
      }
    } else {
      throw ConfigError(source + ":" + std::to_string(target.line) +
                        ": target must be all, nonzero or m<k>, got '" + target.raw + "'");
    }
    a.decay.channels.push_back(c);
  }
  try {
    a.decay.validate(a.manifold_energy);
  } catch (const ModelError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return a;
}

AtomData load_atom_data(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open atom data file '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_atom_data(text, path.string());
}

LevelScheme::LevelScheme(std::vector<Sublevel> levels) : levels_(std::move(levels)) {
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (std::abs(levels_[i].m) > manifold_j(levels_[i].manifold)) {
      throw ModelError("sublevel " + level_label(levels_[i].ref()) + " violates |m_J| <= J");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (levels_[j].ref() == levels_[i].ref()) {
        throw ModelError("duplicate sublevel " + level_label(levels_[i].ref()));
      }
    }
  }
}

LevelScheme LevelScheme::full(const AtomData& atom) {
  std::vector<Sublevel> v;
  for (Manifold m : all_manifolds) {
    const int j = manifold_j(m);
    for (int mj = -j; mj <= j; ++mj) v.push_back({m, mj, atom.energy(m)});
  }
  return LevelScheme(std::move(v));
}

LevelScheme LevelScheme::lambda(const AtomData& atom) {
  return LevelScheme({{Manifold::P2_3, 0, atom.energy(Manifold::P2_3)},
                      {Manifold::S1_3, 0, atom.energy(Manifold::S1_3)},
                      {Manifold::P0_3, 0, atom.energy(Manifold::P0_3)}});
}

LevelScheme LevelScheme::transfer(const AtomData& atom) {
  return LevelScheme({{Manifold::S0_1, 0, atom.energy(Manifold::S0_1)},
                      {Manifold::P2_3, 0, atom.energy(Manifold::P2_3)}});
}

LevelScheme LevelScheme::custom(std::vector<Sublevel> levels) { return LevelScheme(std::move(levels)); }

std::optional<std::size_t> LevelScheme::find(LevelRef ref) const {
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (levels_[i].ref() == ref) return i;
  }
  return std::nullopt;
}

std::size_t LevelScheme::index(LevelRef ref) const {
  if (auto i = find(ref)) return *i;
  throw ModelError("level " + level_label(ref) + " is not part of the scheme");
}

std::string LevelScheme::name(std::size_t i) const {
  const LevelRef r = levels_.at(i).ref();
  if (r == ref_up) return "up";
  if (r == ref_down) return "down";
  if (r == ref_s) return "s";
  if (r == ref_g) return "g";
  return level_label(r);
}

std::optional<std::size_t> LevelScheme::find_name(std::string_view n) const {
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (name(i) == n || level_label(levels_[i].ref()) == n) return i;
  }
  return std::nullopt;
}

std::vector<DecayRate> decay_rates(const LevelScheme& scheme, const DecayTable& table) {
  std::vector<DecayRate> out;
  if (table.channels.empty()) return out;
  if (table.fraction_sum() <= 0.0) return out;

  // Clebsch-Gordan weight for the emission |J_e m_e> -> |J_g m_g> + photon.
  auto weight = [](Manifold from, int me, Manifold to, int mg) {
    return clebsch_gordan_sq(manifold_j(to), mg, 1, me - mg, manifold_j(from), me);
  };

  auto emit = [&](LevelRef from, Manifold to, int mg, double fraction) {
    if (fraction <= 0.0) return;
    Manifold target = to;
    if (to == Manifold::P1_3 && table.intercombination == IntercombinationMode::Effective) {
      target = Manifold::S0_1;
      mg = 0;
    }
    for (auto& r : out) {
      if (r.from == from && r.to == LevelRef{target, mg}) {
        r.rate += fraction * table.gamma_s;
        return;
      }
    }
    out.push_back({from, {target, mg}, fraction * table.gamma_s});
  };

  std::vector<Manifold> sources;
  for (const auto& c : table.channels) {
    if (std::find(sources.begin(), sources.end(), c.from) == sources.end()) sources.push_back(c.from);
  }

  bool feeds_p1 = false;
  for (Manifold src : sources) {
    const int je = manifold_j(src);
    for (int me = -je; me <= je; ++me) {
      const LevelRef from{src, me};
      if (!scheme.contains(from)) continue;
      if (me == 0) {
        // The tabulated channels describe the m=0 source directly.
        for (const auto& c : table.channels) {
          if (c.from != src) continue;
          const int jg = manifold_j(c.to);
          if (c.to == Manifold::P1_3) feeds_p1 = true;
          if (c.target == DecayTarget::Specific) {
            emit(from, c.to, c.to_m, c.fraction);
            continue;
          }
          double norm = 0.0;
          for (int mg = -jg; mg <= jg; ++mg) {
            if (c.target == DecayTarget::NonZero && mg == 0) continue;
            norm += weight(src, me, c.to, mg);
          }
          if (norm <= 0.0) continue;
          for (int mg = -jg; mg <= jg; ++mg) {
            if (c.target == DecayTarget::NonZero && mg == 0) continue;
            emit(from, c.to, mg, c.fraction * weight(src, me, c.to, mg) / norm);
          }
        }
      } else {
        // Other sources: manifold totals split by Clebsch-Gordan weights.
        std::map<Manifold, double> total;
        for (const auto& c : table.channels) {
          if (c.from == src) total[c.to] += c.fraction;
        }
        for (const auto& [to, frac] : total) {
          if (to == Manifold::P1_3) feeds_p1 = true;
          const int jg = manifold_j(to);
          for (int mg = -jg; mg <= jg; ++mg) emit(from, to, mg, frac * weight(src, me, to, mg));
        }
      }
    }
  }

  if (feeds_p1 && table.intercombination == IntercombinationMode::Sequential) {
    for (int m = -1; m <= 1; ++m) {
      const LevelRef from{Manifold::P1_3, m};
      if (scheme.contains(from)) out.push_back({from, ref_g, 1.0 / table.p1_lifetime});
    }
  }
  return out;
}

}  // namespace fsq::atom
