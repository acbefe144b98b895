#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fsq/config.hpp"

namespace fsq::harness {

inline constexpr const char* artifact_version = "0.1.0";

// ---------------------------------------------------------------- scenarios

struct Scenario {
  std::string name;
  std::string kind;
  std::string description;
  std::uint64_t seed = 1;
  std::size_t workers = 0;  // 0 = hardware concurrency
  std::string output;       // run directory as written, may be empty
  config::Config config;
  std::filesystem::path path;  // empty when parsed from a string
  std::string hash;            // sha256 of the canonical parameter listing

  // Directory holding the scenario file (relative file keys resolve here).
  std::filesystem::path base_directory() const;
};

const config::Schema& scenario_schema();
// Kinds understood by run_scenario.
const std::vector<std::string>& scenario_kinds();

Scenario parse_scenario(std::string_view text, const std::string& source = "<string>");
Scenario load_scenario(const std::filesystem::path& path);
// Resolved parameter listing printed by --dry-run.
std::string describe(const Scenario& scenario);

std::string sha256_hex(std::string_view data);
std::string file_sha256(const std::filesystem::path& path);

// ------------------------------------------------------- readout correction

struct NormalizedReadout {
  std::vector<double> up;         // N_up(t) / N_up(0)
  std::vector<double> down;       // N_down(t) / N_up(0), LZ corrected
  std::vector<double> reference;  // interpolated N_up(0) at each time
  std::vector<std::string> warnings;
};

// The reference N_up(0) is linearly interpolated between the two nearest
// reference measurements (extrapolated with a warning outside their span).
// The reference and the up signal both pass the readout sweep; the down
// signal does not, so with `lz_efficiency` it is multiplied by that factor.
NormalizedReadout normalize_readout(const std::vector<double>& times, const std::vector<double>& raw_up,
                                    const std::vector<double>& raw_down, const std::vector<double>& reference_times,
                                    const std::vector<double>& reference_counts,
                                    std::optional<double> lz_efficiency = 0.975);

// -------------------------------------------------------------------- plots

enum class Marker { None, Circle, Square, Triangle, Diamond };

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> yerr;  // optional
  bool line = true;
  Marker marker = Marker::None;
};

struct Axis {
  std::string label;
  std::string unit;
  bool log = false;
};

struct PlotStyle {
  std::string title;
  Axis x;
  Axis y;
  int width = 640;
  int height = 420;
};

// Deterministic SVG: fixed palette, fixed number formatting, no timestamps.
std::string render_svg(const std::vector<Series>& series, const PlotStyle& style);
void emit_plot(const std::filesystem::path& path, const std::vector<Series>& series, const PlotStyle& style);

// ---------------------------------------------------------------- run output

// Columns of doubles written with 12 significant digits.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add(std::vector<double> row);
  std::vector<double> column(const std::string& name) const;
  std::string csv() const;
};

Table read_table(const std::filesystem::path& path);
std::string format_value(double v);

// value in [low, high]; the value is the one written to checks.csv.
struct Check {
  std::string name;
  double value = 0.0;
  double low = 0.0;
  double high = 0.0;
  std::string reference;  // what the window encodes

  bool pass() const { return value >= low && value <= high; }
};

struct Bundle {
  std::string figure;  // preset id or scenario name
  std::filesystem::path directory;
  std::vector<Check> checks;
  nlohmann::ordered_json values = nlohmann::ordered_json::object();
  std::vector<std::string> warnings;
  std::vector<std::string> files;  // written outputs, relative to directory

  bool passed() const;
  const Check* check(const std::string& name) const;
};

struct RunSettings {
  std::filesystem::path output_dir;  // empty: scenario output or runs/<name>
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  // Restricts multi-part kinds: "ramsey" / "echo" for coherence.
  std::string part;
  bool timestamp = true;  // false writes a fixed timestamp into the manifest
};

// Runs a scenario of any kind and writes CSV, SVG, summary.json and
// manifest.json into the run directory.
Bundle run_scenario(const Scenario& scenario, const RunSettings& settings = {});

const std::vector<std::string>& presets();
std::filesystem::path preset_path(const std::string& figure, const std::filesystem::path& data_dir);
// Loads data_dir/scenarios/<figure>.scenario and runs it. Unknown ids throw
// ConfigError listing the presets.
Bundle reproduce(const std::string& figure, const std::filesystem::path& data_dir, const RunSettings& settings = {});

// Re-evaluates the pass flags of a finished run from its checks.csv and
// compares them with summary.json. Returns the mismatching check names.
std::vector<std::string> recheck(const std::filesystem::path& run_directory);

}  // namespace fsq::harness
