#pragma once

// Internal: run directory bookkeeping shared by the scenario runners.

#include <filesystem>
#include <string>
#include <vector>

#include "fsq/harness.hpp"

namespace fsq::harness::detail {

class RunContext {
 public:
  RunContext(const Scenario& scenario, const RunSettings& settings);

  const Scenario& scenario;
  const RunSettings& settings;
  std::uint64_t seed = 1;
  std::size_t workers = 0;
  bool preset = false;  // acceptance windows only for the shipped presets
  Bundle bundle;

  void input(const std::filesystem::path& path);
  void table(const std::string& file, const Table& t);
  void plot(const std::string& file, const std::vector<Series>& series, const PlotStyle& style);
  void check(const std::string& name, double value, double low, double high, const std::string& reference);
  void warn(const std::string& message);
  // Writes checks.csv, summary.json and manifest.json.
  Bundle finish();

 private:
  std::vector<std::filesystem::path> inputs_;
  void write_text(const std::string& file, const std::string& text, bool listed = true);
};

}  // namespace fsq::harness::detail
