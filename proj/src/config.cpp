#include "fsq/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <tuple>

#include "fsq/errors.hpp"
#include "fsq/units.hpp"

namespace fsq::config {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string located(const std::string& source, int line, const std::string& msg) {
  return source + ":" + std::to_string(line) + ": " + msg;
}

struct UnitFactor {
  std::string_view unit;
  double factor;
};

// Multiplicative conversions to the canonical unit of each dimension.
const std::vector<UnitFactor>& unit_table(Dimension d) {
  static const std::vector<UnitFactor> frequency = {
      {"Hz", units::hz},   {"kHz", units::khz}, {"MHz", units::mhz},
      {"GHz", units::ghz}, {"THz", units::thz}, {"rad/s", 1.0}};
  static const std::vector<UnitFactor> rate = {
      {"s^-1", 1.0}, {"1/s", 1.0}, {"ms^-1", 1e3}, {"us^-1", 1e6}};
  static const std::vector<UnitFactor> time = {
      {"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"\xC2\xB5s", 1e-6}, {"ns", 1e-9}};
  static const std::vector<UnitFactor> angle = {{"deg", units::deg}, {"rad", 1.0}};
  static const std::vector<UnitFactor> power = {
      {"W", 1e3}, {"mW", 1.0}, {"uW", 1e-3}, {"\xC2\xB5W", 1e-3}, {"nW", 1e-6}};
  static const std::vector<UnitFactor> temperature = {
      {"K", 1e6}, {"mK", 1e3}, {"uK", 1.0}, {"\xC2\xB5K", 1.0}, {"nK", 1e-3}};
  static const std::vector<UnitFactor> length = {
      {"m", 1e9}, {"mm", 1e6}, {"um", 1e3}, {"nm", 1.0}};
  static const std::vector<UnitFactor> field = {{"G", 1.0}, {"mG", 1e-3}, {"T", 1e4}};
  static const std::vector<UnitFactor> mass = {{"u", 1.0}};
  static const std::vector<UnitFactor> ratio = {{"1", 1.0}, {"%", 1e-2}, {"ppm", 1e-6}};
  static const std::vector<UnitFactor> rabi_per_root_power = {
      {"MHz/sqrt(mW)", units::mhz}, {"kHz/sqrt(mW)", units::khz}, {"Hz/sqrt(mW)", units::hz}};
  static const std::vector<UnitFactor> sweep_rate = {
      {"Hz/ms", units::hz * 1e3}, {"Hz/s", units::hz}, {"kHz/s", units::khz}, {"kHz/ms", units::khz * 1e3}};
  static const std::vector<UnitFactor> depth = {
      {"Erec", 1.0}, {"uK", 1.0}, {"\xC2\xB5K", 1.0}, {"mK", 1e3}};
  static const std::vector<UnitFactor> shift_per_temperature = {
      {"Hz/uK", 1.0}, {"Hz/\xC2\xB5K", 1.0}, {"kHz/uK", 1e3}, {"mHz/uK", 1e-3}};
  static const std::vector<UnitFactor> none;
  switch (d) {
    case Dimension::Frequency: return frequency;
    case Dimension::Rate: return rate;
    case Dimension::Time: return time;
    case Dimension::Angle: return angle;
    case Dimension::Power: return power;
    case Dimension::Temperature: return temperature;
    case Dimension::Length: return length;
    case Dimension::Field: return field;
    case Dimension::Mass: return mass;
    case Dimension::Ratio: return ratio;
    case Dimension::RabiPerRootPower: return rabi_per_root_power;
    case Dimension::SweepRate: return sweep_rate;
    case Dimension::LatticeDepth: return depth;
    case Dimension::ShiftPerTemperature: return shift_per_temperature;
    default: return none;
  }
}

std::optional<double> to_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  // from_chars rejects a leading '+', accept it for readability.
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Splits "1, 2, 3 MHz" into numbers and a trailing unit token.
bool split_numbers_unit(std::string_view text, std::vector<double>& numbers, std::string& unit) {
  text = trim(text);
  const auto last_space = text.find_last_of(" \t");
  std::string_view numeric = text;
  unit.clear();
  if (last_space != std::string_view::npos) {
    std::string_view tail = trim(text.substr(last_space + 1));
    if (!to_double(tail)) {
      unit = std::string(tail);
      numeric = trim(text.substr(0, last_space));
    }
  } else if (!to_double(text)) {
    // "5%" style with no separating space
    if (!text.empty() && text.back() == '%' && to_double(text.substr(0, text.size() - 1))) {
      unit = "%";
      numeric = text.substr(0, text.size() - 1);
    }
  }
  numbers.clear();
  std::size_t start = 0;
  while (start <= numeric.size()) {
    const auto comma = numeric.find(',', start);
    const auto piece = numeric.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                            : comma - start);
    auto v = to_double(piece);
    if (!v) return false;
    numbers.push_back(*v);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return !numbers.empty();
}

bool section_matches(std::string_view pattern, std::string_view section) {
  if (!pattern.empty() && pattern.back() == '*') {
    const auto prefix = pattern.substr(0, pattern.size() - 1);
    return section.size() > prefix.size() && section.substr(0, prefix.size()) == prefix;
  }
  return pattern == section;
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

std::string_view dimension_name(Dimension d) {
  switch (d) {
    case Dimension::Frequency: return "frequency";
    case Dimension::Rate: return "rate";
    case Dimension::Time: return "time";
    case Dimension::Angle: return "angle";
    case Dimension::Power: return "power";
    case Dimension::Temperature: return "temperature";
    case Dimension::Length: return "length";
    case Dimension::Field: return "magnetic field";
    case Dimension::Mass: return "mass";
    case Dimension::Ratio: return "ratio";
    case Dimension::RabiPerRootPower: return "Rabi frequency per sqrt(power)";
    case Dimension::SweepRate: return "sweep rate";
    case Dimension::LatticeDepth: return "lattice depth";
    case Dimension::ShiftPerTemperature: return "shift per temperature";
    case Dimension::Count: return "count";
    case Dimension::Text: return "text";
    case Dimension::Flag: return "flag";
  }
  return "?";
}

Schema& Schema::add(KeySpec spec) {
  keys_.push_back(std::move(spec));
  return *this;
}

Schema& Schema::add(std::string section, std::string key, Dimension d, std::optional<double> min,
                    std::optional<double> max) {
  return add(KeySpec{std::move(section), std::move(key), d, min, max, false});
}

Schema& Schema::add_list(std::string section, std::string key, Dimension d,
                         std::optional<double> min, std::optional<double> max) {
  return add(KeySpec{std::move(section), std::move(key), d, min, max, true});
}

const KeySpec* Schema::find(std::string_view section, std::string_view key) const {
  for (const auto& k : keys_) {
    if (k.key == key && section_matches(k.section, section)) return &k;
  }
  return nullptr;
}

double parse_quantity(std::string_view text, Dimension d) {
  std::vector<double> numbers;
  std::string unit;
  if (!split_numbers_unit(text, numbers, unit) || numbers.size() != 1) {
    throw ConfigError("cannot parse quantity '" + std::string(text) + "'");
  }
  for (const auto& u : unit_table(d)) {
    if (u.unit == unit) return numbers[0] * u.factor;
  }
  throw ConfigError("unit '" + unit + "' is not a valid " + std::string(dimension_name(d)) +
                    " unit");
}

Config Config::parse(std::string_view text, const Schema& schema, const std::string& source) {
  Config cfg;
  cfg.source_ = source;
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos
                                                                          : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(located(source, line_no, "unterminated section header"));
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ConfigError(located(source, line_no, "empty section name"));
      const bool known = std::any_of(schema.keys().begin(), schema.keys().end(),
                                     [&](const KeySpec& k) { return section_matches(k.section, section); });
      if (!known) throw ConfigError(located(source, line_no, "unknown section [" + section + "]"));
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(located(source, line_no, "expected 'key = value'"));
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(located(source, line_no, "missing key"));
    const std::string qualified = section.empty() ? key : section + "." + key;

    const KeySpec* spec = schema.find(section, key);
    if (!spec) throw ConfigError(located(source, line_no, "unknown key '" + qualified + "'"));
    if (cfg.find(section, key)) {
      throw ConfigError(located(source, line_no, "duplicate key '" + qualified + "'"));
    }
    if (value.empty()) throw ConfigError(located(source, line_no, "missing value for '" + qualified + "'"));

    Entry entry;
    entry.section = section;
    entry.key = key;
    entry.dimension = spec->dimension;
    entry.raw = std::string(value);
    entry.line = line_no;

    switch (spec->dimension) {
      case Dimension::Text:
        break;
      case Dimension::Flag: {
        if (value == "true" || value == "yes" || value == "on") {
          entry.values = {1.0};
        } else if (value == "false" || value == "no" || value == "off") {
          entry.values = {0.0};
        } else {
          throw ConfigError(located(source, line_no, "'" + qualified + "' expects true/false"));
        }
        break;
      }
      case Dimension::Count: {
        std::vector<double> numbers;
        std::string unit;
        if (!split_numbers_unit(value, numbers, unit) || !unit.empty()) {
          throw ConfigError(located(source, line_no, "'" + qualified + "' expects an integer count"));
        }
        for (double v : numbers) {
          if (v != std::floor(v)) {
            throw ConfigError(located(source, line_no, "'" + qualified + "' expects an integer count"));
          }
        }
        entry.values = numbers;
        break;
      }
      default: {
        std::vector<double> numbers;
        std::string unit;
        if (!split_numbers_unit(value, numbers, unit)) {
          throw ConfigError(located(source, line_no, "cannot parse value of '" + qualified + "'"));
        }
        if (unit.empty()) {
          throw ConfigError(located(source, line_no,
                                    "missing unit for '" + qualified + "' (" +
                                        std::string(dimension_name(spec->dimension)) + ")"));
        }
        const auto& table = unit_table(spec->dimension);
        auto it = std::find_if(table.begin(), table.end(), [&](const UnitFactor& u) { return u.unit == unit; });
        if (it == table.end()) {
          throw ConfigError(located(source, line_no,
                                    "unit '" + unit + "' is not a valid " +
                                        std::string(dimension_name(spec->dimension)) + " unit for '" +
                                        qualified + "'"));
        }
        for (double& v : numbers) v *= it->factor;
        entry.values = numbers;
        entry.unit = unit;
        break;
      }
    }

    if (!spec->list && entry.values.size() > 1) {
      throw ConfigError(located(source, line_no, "'" + qualified + "' takes a single value"));
    }
    for (double v : entry.values) {
      if (!std::isfinite(v)) throw ConfigError(located(source, line_no, "non-finite value for '" + qualified + "'"));
      if ((spec->min && v < *spec->min) || (spec->max && v > *spec->max)) {
        throw ConfigError(located(source, line_no, "value of '" + qualified + "' out of range"));
      }
    }
    cfg.entries_.push_back(std::move(entry));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), schema, path.string());
}

bool Config::has(std::string_view section, std::string_view key) const {
  return find(section, key) != nullptr;
}

const Entry* Config::find(std::string_view section, std::string_view key) const {
  for (const auto& e : entries_) {
    if (e.section == section && e.key == key) return &e;
  }
  return nullptr;
}

const Entry& Config::at(std::string_view section, std::string_view key) const {
  if (const Entry* e = find(section, key)) return *e;
  const std::string qualified =
      section.empty() ? std::string(key) : std::string(section) + "." + std::string(key);
  throw ConfigError(source_ + ": missing required key '" + qualified + "'");
}

double Config::number(std::string_view section, std::string_view key) const {
  const Entry& e = at(section, key);
  if (e.values.size() != 1) throw ConfigError(source_ + ":" + std::to_string(e.line) + ": expected one value");
  return e.values.front();
}

double Config::number_or(std::string_view section, std::string_view key, double fallback) const {
  return has(section, key) ? number(section, key) : fallback;
}

std::vector<double> Config::list(std::string_view section, std::string_view key) const {
  return at(section, key).values;
}

long Config::count(std::string_view section, std::string_view key) const {
  return static_cast<long>(number(section, key));
}

long Config::count_or(std::string_view section, std::string_view key, long fallback) const {
  return has(section, key) ? count(section, key) : fallback;
}

std::string Config::text(std::string_view section, std::string_view key) const {
  return at(section, key).raw;
}

std::string Config::text_or(std::string_view section, std::string_view key,
                            std::string fallback) const {
  return has(section, key) ? text(section, key) : fallback;
}

bool Config::flag_or(std::string_view section, std::string_view key, bool fallback) const {
  return has(section, key) ? number(section, key) != 0.0 : fallback;
}

std::vector<std::string> Config::sections() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    if (std::find(out.begin(), out.end(), e.section) == out.end()) out.push_back(e.section);
  }
  return out;
}

std::string Config::canonical() const {
  std::vector<const Entry*> sorted;
  for (const auto& e : entries_) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(), [](const Entry* a, const Entry* b) {
    return std::tie(a->section, a->key) < std::tie(b->section, b->key);
  });
  std::string out;
  for (const Entry* e : sorted) {
    out += e->section.empty() ? e->key : e->section + "." + e->key;
    out += " = ";
    if (e->dimension == Dimension::Text) {
      out += e->raw;
    } else {
      for (std::size_t i = 0; i < e->values.size(); ++i) {
        if (i) out += ", ";
        out += format_number(e->values[i]);
      }
      out += " [";
      out += dimension_name(e->dimension);
      if (!e->unit.empty()) out += ", written in " + e->unit;
      out += "]";
    }
    out += "\n";
  }
  return out;
}

}  // namespace fsq::config
