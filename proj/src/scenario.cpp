#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "fsq/errors.hpp"
#include "fsq/harness.hpp"

namespace fsq::harness {

namespace {

using config::Dimension;

config::Schema build_schema() {
  config::Schema s;
  s.add("", "name", Dimension::Text);
  s.add("", "kind", Dimension::Text);
  s.add("", "description", Dimension::Text);
  s.add("", "seed", Dimension::Count, 0.0);
  s.add("", "workers", Dimension::Count, 0.0, 1024.0);
  s.add("", "output", Dimension::Text);

  s.add("atom", "file", Dimension::Text);
  s.add("atom", "magnetic_field", Dimension::Field, 0.0);

  s.add("raman", "rabi_up", Dimension::Frequency, 0.0);
  s.add("raman", "rabi_down", Dimension::Frequency, 0.0);
  s.add("raman", "detuning", Dimension::Frequency);
  s.add("raman", "two_photon_detuning", Dimension::Frequency);
  s.add("raman", "elimination", Dimension::Text);
  s.add("raman", "scattering", Dimension::Flag);

  s.add("trace", "duration", Dimension::Time, 0.0);
  s.add("trace", "step", Dimension::Time, 0.0);
  s.add("trace", "start", Dimension::Time, 0.0);
  s.add("trace", "samples", Dimension::Count, 2.0);
  s.add("trace", "initial", Dimension::Text);
  s.add("trace", "readout", Dimension::Text);
  s.add("trace", "noise", Dimension::Ratio, 0.0);

  s.add("ensemble", "rabi_spread", Dimension::Ratio, 0.0, 1.0);
  s.add("ensemble", "detuning_spread", Dimension::Frequency, 0.0);
  s.add("ensemble", "samples", Dimension::Count, 1.0);
  s.add("ensemble", "quadrature", Dimension::Flag);

  s.add("noise", "sigma", Dimension::Frequency, 0.0);
  s.add("noise", "correlation_time", Dimension::Time, 0.0);
  s.add("noise", "step", Dimension::Time, 0.0);

  s.add_list("scan", "detunings", Dimension::Frequency);
  s.add_list("scan", "powers", Dimension::Power, 0.0);
  s.add("scan", "start", Dimension::Frequency);
  s.add("scan", "stop", Dimension::Frequency);
  s.add("scan", "step", Dimension::Frequency, 0.0);
  s.add("scan", "periods", Dimension::Count, 1.0);
  s.add("scan", "samples_per_period", Dimension::Count, 4.0);
  s.add("scan", "decay_times", Dimension::Count, 0.0);

  s.add_list("lz", "rabi", Dimension::Frequency, 0.0);
  s.add("lz", "sweep_range", Dimension::Frequency, 0.0);
  s.add("lz", "ramp", Dimension::SweepRate, 0.0);
  s.add("lz", "target_fidelity", Dimension::Ratio, 0.0, 1.0);
  s.add("lz", "panel_range", Dimension::Frequency, 0.0);
  s.add_list("lz", "panel_ramps", Dimension::SweepRate, 0.0);

  s.add("probe", "rabi", Dimension::Frequency, 0.0);
  s.add("probe", "duration", Dimension::Time, 0.0);
  s.add("probe", "calibration", Dimension::RabiPerRootPower, 0.0);
  s.add("probe", "exchange_roles", Dimension::Flag);
  s.add("probe", "noise", Dimension::Ratio, 0.0);
  s.add("probe", "example_power", Dimension::Power, 0.0);

  s.add("cpt", "power_up", Dimension::Power, 0.0);
  s.add("cpt", "power_down", Dimension::Power, 0.0);
  s.add("cpt", "calibration_up", Dimension::RabiPerRootPower, 0.0);
  s.add("cpt", "calibration_down", Dimension::RabiPerRootPower, 0.0);
  s.add("cpt", "one_photon_detuning", Dimension::Frequency);
  s.add("cpt", "dephasing", Dimension::Rate, 0.0);
  s.add("cpt", "span", Dimension::Frequency, 0.0);
  s.add("cpt", "points", Dimension::Count, 5.0);

  s.add_list("coherence", "ramsey_times", Dimension::Time, 0.0);
  s.add_list("coherence", "echo_times", Dimension::Time, 0.0);
  s.add_list("coherence", "static_echo_times", Dimension::Time, 0.0);
  s.add("coherence", "phases", Dimension::Count, 4.0);
  s.add("coherence", "t2_star", Dimension::Time, 0.0);
  s.add("coherence", "t2_echo", Dimension::Time, 0.0);
  s.add("coherence", "nodes", Dimension::Count, 1.0);
  s.add("coherence", "members", Dimension::Count, 1.0);

  s.add("synthetic", "rabi", Dimension::Frequency, 0.0);
  s.add("synthetic", "tau", Dimension::Time, 0.0);
  s.add("synthetic", "amplitude_loss", Dimension::Ratio, 0.0);
  s.add("synthetic", "tau_loss", Dimension::Time, 0.0);
  s.add("synthetic", "phase", Dimension::Angle);
  s.add("synthetic", "noise", Dimension::Ratio, 0.0);
  s.add("synthetic", "seeds", Dimension::Count, 1.0);

  s.add("analysis", "band_fraction", Dimension::Ratio, 0.0, 1.0);
  s.add("analysis", "half_window", Dimension::Count, 2.0);
  s.add("analysis", "fit_loss", Dimension::Flag);

  s.add("readout", "lz_efficiency", Dimension::Ratio, 0.0, 1.0);
  s.add("readout", "detection_fidelity", Dimension::Ratio, 0.0, 1.0);
  s.add("readout", "reference_drift", Dimension::Ratio, -1.0, 1.0);
  s.add("readout", "reference_points", Dimension::Count, 2.0);
  s.add("readout", "atoms", Dimension::Count, 1.0);
  s.add("readout", "time", Dimension::Time, 0.0);

  s.add("trap", "table", Dimension::Text);
  s.add("trap", "wavelength", Dimension::Length, 0.0);
  s.add("trap", "magic_wavelength", Dimension::Length, 0.0);
  s.add("trap", "recoil_wavelength", Dimension::Length, 0.0);
  s.add("trap", "angle", Dimension::Angle, 0.0);
  s.add("trap", "slope", Dimension::ShiftPerTemperature);
  s.add_list("trap", "depths", Dimension::Temperature, 0.0);
  s.add("trap", "depth_error", Dimension::Ratio, 0.0);
  s.add("trap", "frequency_noise", Dimension::Frequency, 0.0);
  s.add("trap", "offset", Dimension::Frequency);
  return s;
}

std::string hex(const unsigned char* data, std::size_t n) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    out += digits[data[i] >> 4];
    out += digits[data[i] & 0xF];
  }
  return out;
}

}  // namespace

std::filesystem::path Scenario::base_directory() const {
  return path.empty() ? std::filesystem::current_path() : path.parent_path();
}

const config::Schema& scenario_schema() {
  static const config::Schema schema = build_schema();
  return schema;
}

const std::vector<std::string>& scenario_kinds() {
  static const std::vector<std::string> kinds = {"lz",        "autler-townes", "cpt",       "rabi",
                                                 "detuning",  "coherence",     "lightshift", "excitation",
                                                 "pipeline",  "scatter"};
  return kinds;
}

Scenario parse_scenario(std::string_view text, const std::string& source) {
  Scenario s;
  s.config = config::Config::parse(text, scenario_schema(), source);
  const auto& cfg = s.config;
  if (!cfg.has("", "name")) throw ConfigError(source + ": missing scenario name");
  s.name = cfg.text("", "name");
  for (char c : s.name) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) {
      throw ConfigError(source + ":" + std::to_string(cfg.at("", "name").line) +
                        ": scenario name may only contain letters, digits, '-', '_' and '.'");
    }
  }
  if (!cfg.has("", "kind")) throw ConfigError(source + ": missing scenario kind");
  s.kind = cfg.text("", "kind");
  const auto& kinds = scenario_kinds();
  if (std::find(kinds.begin(), kinds.end(), s.kind) == kinds.end()) {
    std::string list;
    for (const auto& k : kinds) list += (list.empty() ? "" : ", ") + k;
    throw ConfigError(source + ":" + std::to_string(cfg.at("", "kind").line) + ": unknown kind '" + s.kind +
                      "' (expected one of " + list + ")");
  }
  s.description = cfg.text_or("", "description", "");
  s.seed = static_cast<std::uint64_t>(cfg.count_or("", "seed", 1));
  s.workers = static_cast<std::size_t>(cfg.count_or("", "workers", 0));
  s.output = cfg.text_or("", "output", "");
  s.hash = sha256_hex(cfg.canonical());
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  Scenario s = parse_scenario(ss.str(), path.string());
  s.path = path;
  return s;
}

std::string describe(const Scenario& s) {
  std::string out;
  out += "scenario " + s.name + " (kind " + s.kind + ")\n";
  if (!s.path.empty()) out += "file " + s.path.string() + "\n";
  out += "sha256 " + s.hash + "\n";
  out += s.config.canonical();
  return out;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw NumericalError("SHA-256 digest failed");
  }
  return hex(digest, len);
}

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

}  // namespace fsq::harness
