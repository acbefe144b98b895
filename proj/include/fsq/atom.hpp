#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fsq::atom {

enum class Manifold { S0_1, P0_3, P1_3, P2_3, S1_3 };

inline constexpr std::array<Manifold, 5> all_manifolds = {
    Manifold::S0_1, Manifold::P0_3, Manifold::P1_3, Manifold::P2_3, Manifold::S1_3};

int manifold_j(Manifold m);
// "1S0", "3P0", "3P1", "3P2", "3S1"
std::string_view manifold_name(Manifold m);
std::optional<Manifold> parse_manifold(std::string_view name);
bool is_p_manifold(Manifold m);

// A manifold + magnetic quantum number pair; the way callers name a state.
struct LevelRef {
  Manifold manifold;
  int m = 0;
  bool operator==(const LevelRef&) const = default;
};

std::string level_label(LevelRef ref);  // "3P2_m+1", "3P0_m0"

struct Sublevel {
  Manifold manifold;
  int m = 0;
  double energy = 0.0;  // rad/s, bare (zero-field) manifold energy
  LevelRef ref() const { return {manifold, m}; }
};

// Landé factors per manifold; a manifold without an entry has no defined
// Zeeman response.
struct MagneticEnvironment {
  double field_gauss = 0.0;
  std::array<std::optional<double>, 5> g_j = {0.0, 0.0, 1.5, 1.5, 2.0};

  std::optional<double> g(Manifold m) const { return g_j[static_cast<std::size_t>(m)]; }
  void validate() const;
};

// Linear Zeeman shift in rad/s.
double zeeman_shift(LevelRef level, const MagneticEnvironment& env);

// |<j1 m1; j2 m2 | J M>|^2 for integer angular momenta.
double clebsch_gordan_sq(int j1, int m1, int j2, int m2, int J, int M);
double clebsch_gordan(int j1, int m1, int j2, int m2, int J, int M);

enum class DecayTarget {
  Specific,  // one named sublevel (to_m)
  All,       // whole manifold, split by Clebsch-Gordan weights
  NonZero,   // m != 0 sublevels of the manifold, split by Clebsch-Gordan weights
};

struct DecayChannel {
  Manifold from = Manifold::S1_3;
  Manifold to = Manifold::P2_3;
  DecayTarget target = DecayTarget::All;
  int to_m = 0;
  double fraction = 0.0;
};

enum class IntercombinationMode {
  Sequential,  // 3S1 -> 3P1 -> 1S0 with a finite 3P1 lifetime
  Effective,   // 3P1 branch feeds 1S0 directly
};

struct DecayTable {
  double gamma_s = 0.0;  // total 3S1 decay rate, 1/s (angular linewidth)
  std::vector<DecayChannel> channels;
  double p1_lifetime = 21.4e-6;  // s
  IntercombinationMode intercombination = IntercombinationMode::Sequential;

  double fraction_sum() const;
  // Fractions in [0,1], sum within 0.2 % of one, energetically downhill.
  void validate(const std::array<double, 5>& manifold_energy) const;
};

// Branching fractions and linewidth of the 3S1 state in 88Sr.
DecayTable strontium_decay_table();

struct AtomData {
  std::array<double, 5> manifold_energy{};  // rad/s relative to the Lambda midpoint
  DecayTable decay;
  MagneticEnvironment magnetic;
  double mass_u = 87.9056;

  double energy(Manifold m) const { return manifold_energy[static_cast<std::size_t>(m)]; }
};

AtomData strontium88();
AtomData load_atom_data(const std::filesystem::path& path);
AtomData parse_atom_data(std::string_view text, const std::string& source = "<string>");

class LevelScheme {
 public:
  // All 13 sublevels, ordered 1S0, 3P0, 3P1(m=-1..1), 3P2(m=-2..2), 3S1(m=-1..1).
  static LevelScheme full(const AtomData& atom);
  // Restricted Lambda triple in the order (up, s, down).
  static LevelScheme lambda(const AtomData& atom);
  // g and up only, for the state-preparation sweep.
  static LevelScheme transfer(const AtomData& atom);
  static LevelScheme custom(std::vector<Sublevel> levels);

  std::size_t size() const { return levels_.size(); }
  const Sublevel& level(std::size_t i) const { return levels_.at(i); }
  const std::vector<Sublevel>& levels() const { return levels_; }

  std::optional<std::size_t> find(LevelRef ref) const;
  std::size_t index(LevelRef ref) const;  // throws ModelError when absent
  bool contains(LevelRef ref) const { return find(ref).has_value(); }

  // Named states; absent when the scheme does not include them.
  std::optional<std::size_t> g() const { return find({Manifold::S0_1, 0}); }
  std::optional<std::size_t> up() const { return find({Manifold::P2_3, 0}); }
  std::optional<std::size_t> down() const { return find({Manifold::P0_3, 0}); }
  std::optional<std::size_t> s() const { return find({Manifold::S1_3, 0}); }

  // "up", "down", "s", "g" for the named states, level_label otherwise.
  std::string name(std::size_t i) const;
  std::optional<std::size_t> find_name(std::string_view name) const;

 private:
  explicit LevelScheme(std::vector<Sublevel> levels);
  std::vector<Sublevel> levels_;
};

inline constexpr LevelRef ref_g{Manifold::S0_1, 0};
inline constexpr LevelRef ref_up{Manifold::P2_3, 0};
inline constexpr LevelRef ref_down{Manifold::P0_3, 0};
inline constexpr LevelRef ref_s{Manifold::S1_3, 0};

struct DecayRate {
  LevelRef from;
  LevelRef to;
  double rate = 0.0;  // 1/s
};

// Sublevel-resolved rates for every channel of the table. Targets outside
// `scheme` are still listed; the model builder turns them into loss.
std::vector<DecayRate> decay_rates(const LevelScheme& scheme, const DecayTable& table);

}  // namespace fsq::atom
