#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "fsq/errors.hpp"
#include "fsq/harness.hpp"
#include "run_context.hpp"

namespace fsq::harness {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw ConfigError(where + ": bad number '" + s + "'");
  return v;
}

std::string exact(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + p.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string format_value(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void Table::add(std::vector<double> row) {
  if (row.size() != columns.size()) throw ConfigError("table row has the wrong number of columns");
  rows.push_back(std::move(row));
}

std::vector<double> Table::column(const std::string& name) const {
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j] != name) continue;
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r[j]);
    return out;
  }
  throw ConfigError("table has no column '" + name + "'");
}

std::string Table::csv() const {
  std::string out;
  for (std::size_t j = 0; j < columns.size(); ++j) out += (j ? "," : "") + columns[j];
  out += "\n";
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j) out += (j ? "," : "") + format_value(r[j]);
    out += "\n";
  }
  return out;
}

Table read_table(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  Table t;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty table");
  t.columns = split_csv_line(line);
  int n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != t.columns.size()) {
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": expected " + std::to_string(t.columns.size()) +
                        " columns");
    }
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(parse_double(c, path.string() + ":" + std::to_string(n)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

bool Bundle::passed() const {
  for (const auto& c : checks) {
    if (!c.pass()) return false;
  }
  return true;
}

const Check* Bundle::check(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

std::vector<std::string> recheck(const std::filesystem::path& dir) {
  std::istringstream in(read_file(dir / "checks.csv"));
  const auto summary = nlohmann::json::parse(read_file(dir / "summary.json"));
  std::string line;
  std::getline(in, line);
  if (line != "name,value,low,high,pass") throw ConfigError((dir / "checks.csv").string() + ": unexpected header");
  std::vector<std::string> mismatched;
  bool all = true;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 5) throw ConfigError((dir / "checks.csv").string() + ": malformed row");
    const std::string where = (dir / "checks.csv").string();
    Check c{cells[0], parse_double(cells[1], where), parse_double(cells[2], where), parse_double(cells[3], where), ""};
    all = all && c.pass();
    bool reported = false, found = false;
    for (const auto& j : summary.at("checks")) {
      if (j.at("name") == c.name) {
        reported = j.at("pass").get<bool>();
        found = true;
      }
    }
    if (!found || reported != c.pass() || (cells[4] == "true") != c.pass()) mismatched.push_back(c.name);
    ++n;
  }
  if (n != summary.at("checks").size()) mismatched.push_back("<check count>");
  if (summary.at("passed").get<bool>() != all) mismatched.push_back("<passed>");
  return mismatched;
}

namespace detail {

RunContext::RunContext(const Scenario& sc, const RunSettings& st) : scenario(sc), settings(st) {
  seed = st.seed.value_or(sc.seed);
  workers = st.workers.value_or(sc.workers);
  bundle.figure = sc.name;
  std::filesystem::path dir = st.output_dir;
  if (dir.empty()) dir = sc.output.empty() ? std::filesystem::path("runs") / sc.name : std::filesystem::path(sc.output);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create run directory '" + dir.string() + "': " + ec.message());
  bundle.directory = dir;
  if (!sc.path.empty()) input(sc.path);
}

void RunContext::input(const std::filesystem::path& path) { inputs_.push_back(path); }

void RunContext::write_text(const std::string& file, const std::string& text, bool listed) {
  std::ofstream out(bundle.directory / file, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + (bundle.directory / file).string() + "'");
  out << text;
  out.close();
  if (listed) bundle.files.push_back(file);
}

void RunContext::table(const std::string& file, const Table& t) { write_text(file, t.csv()); }

void RunContext::plot(const std::string& file, const std::vector<Series>& series, const PlotStyle& style) {
  write_text(file, render_svg(series, style));
}

void RunContext::check(const std::string& name, double value, double low, double high, const std::string& reference) {
  // stored as written so checks.csv reproduces the flag exactly
  bundle.checks.push_back({name, value, low, high, reference});
}

void RunContext::warn(const std::string& message) { bundle.warnings.push_back(message); }

Bundle RunContext::finish() {
  std::string checks = "name,value,low,high,pass\n";
  for (const auto& c : bundle.checks) {
    checks += c.name + "," + exact(c.value) + "," + exact(c.low) + "," + exact(c.high) + "," +
              (c.pass() ? "true" : "false") + "\n";
  }
  write_text("checks.csv", checks);

  nlohmann::ordered_json summary;
  summary["scenario"] = scenario.name;
  summary["kind"] = scenario.kind;
  summary["seed"] = seed;
  summary["passed"] = bundle.passed();
  summary["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : bundle.checks) {
    summary["checks"].push_back({{"name", c.name},
                                 {"value", c.value},
                                 {"low", c.low},
                                 {"high", c.high},
                                 {"pass", c.pass()},
                                 {"reference", c.reference}});
  }
  summary["values"] = bundle.values;
  summary["warnings"] = bundle.warnings;
  write_text("summary.json", summary.dump(2) + "\n");

  nlohmann::ordered_json manifest;
  manifest["scenario"] = scenario.name;
  manifest["scenario_hash"] = scenario.hash;
  manifest["artifact_version"] = artifact_version;
  manifest["timestamp"] = settings.timestamp ? utc_now() : "1970-01-01T00:00:00Z";
  manifest["seed"] = seed;
  manifest["workers"] = workers;
  manifest["inputs"] = nlohmann::ordered_json::array();
  for (const auto& p : inputs_) manifest["inputs"].push_back({{"path", p.string()}, {"sha256", file_sha256(p)}});
  manifest["outputs"] = nlohmann::ordered_json::array();
  for (const auto& f : bundle.files) {
    manifest["outputs"].push_back({{"file", f}, {"sha256", file_sha256(bundle.directory / f)}});
  }
  write_text("manifest.json", manifest.dump(2) + "\n", false);
  return bundle;
}

}  // namespace detail

}  // namespace fsq::harness
