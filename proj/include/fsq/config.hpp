#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fsq::config {

// Physical dimension of a config value and the canonical unit it is stored
// in after parsing:
//   Frequency   rad/s (written in Hz..THz, converted with 2 pi, or rad/s)
//   Rate        1/s
//   Time        s
//   Angle       rad
//   Power       mW
//   Temperature uK
//   Length      nm
//   Field       G
//   Mass        u
//   Ratio       dimensionless (written with % / ppm / 1)
//   RabiPerRootPower  rad/s per sqrt(mW) (written e.g. MHz/sqrt(mW))
//   SweepRate   rad/s^2 (written e.g. Hz/ms)
//   LatticeDepth  uK or E_rec (unit kept in Entry::unit)
//   ShiftPerTemperature  Hz per uK (ordinary frequency, not angular)
//   Count, Text, Flag carry no unit.
enum class Dimension {
  Frequency,
  Rate,
  Time,
  Angle,
  Power,
  Temperature,
  Length,
  Field,
  Mass,
  Ratio,
  RabiPerRootPower,
  SweepRate,
  LatticeDepth,
  ShiftPerTemperature,
  Count,
  Text,
  Flag,
};

std::string_view dimension_name(Dimension d);

struct KeySpec {
  std::string section;  // "" for top level; trailing '*' matches a prefix
  std::string key;
  Dimension dimension;
  std::optional<double> min;  // in canonical units
  std::optional<double> max;
  bool list = false;
};

class Schema {
 public:
  Schema& add(KeySpec spec);
  Schema& add(std::string section, std::string key, Dimension d, std::optional<double> min = {},
              std::optional<double> max = {});
  Schema& add_list(std::string section, std::string key, Dimension d,
                   std::optional<double> min = {}, std::optional<double> max = {});
  const KeySpec* find(std::string_view section, std::string_view key) const;
  const std::vector<KeySpec>& keys() const { return keys_; }

 private:
  std::vector<KeySpec> keys_;
};

struct Entry {
  std::string section;
  std::string key;
  Dimension dimension = Dimension::Text;
  std::vector<double> values;  // canonical units
  std::string unit;            // unit as written ("" when unitless)
  std::string raw;             // value text as written
  int line = 0;
};

// Strictly validated document. Unknown sections/keys, missing or wrong units
// and range violations are rejected with "<source>:<line>: message".
class Config {
 public:
  static Config parse(std::string_view text, const Schema& schema,
                      const std::string& source = "<string>");
  static Config load(const std::filesystem::path& path, const Schema& schema);

  bool has(std::string_view section, std::string_view key) const;
  const Entry* find(std::string_view section, std::string_view key) const;
  const Entry& at(std::string_view section, std::string_view key) const;

  double number(std::string_view section, std::string_view key) const;
  double number_or(std::string_view section, std::string_view key, double fallback) const;
  std::vector<double> list(std::string_view section, std::string_view key) const;
  long count(std::string_view section, std::string_view key) const;
  long count_or(std::string_view section, std::string_view key, long fallback) const;
  std::string text(std::string_view section, std::string_view key) const;
  std::string text_or(std::string_view section, std::string_view key,
                      std::string fallback) const;
  bool flag_or(std::string_view section, std::string_view key, bool fallback) const;

  std::vector<std::string> sections() const;
  const std::vector<Entry>& entries() const { return entries_; }
  const std::string& source() const { return source_; }

  // Stable "section.key = value unit" listing, used for --dry-run and hashing.
  std::string canonical() const;

 private:
  std::vector<Entry> entries_;
  std::string source_;
};

// Parses "<number> <unit>" for a given dimension, returning the canonical
// value. Throws ConfigError on unknown units.
double parse_quantity(std::string_view text, Dimension d);

}  // namespace fsq::config
