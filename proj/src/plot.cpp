#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "fsq/errors.hpp"
#include "fsq/harness.hpp"

namespace fsq::harness {

namespace {

const char* const palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"};

std::string num(double v, const char* fmt = "%.2f") {
  char buf[48];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string axis_title(const Axis& a) { return a.unit.empty() ? a.label : a.label + " (" + a.unit + ")"; }

struct Scale {
  double lo = 0.0, hi = 1.0;
  double p0 = 0.0, p1 = 1.0;  // pixel range
  bool log = false;

  double operator()(double v) const {
    const double a = log ? std::log10(lo) : lo;
    const double b = log ? std::log10(hi) : hi;
    const double u = log ? std::log10(v) : v;
    return p0 + (u - a) / (b - a) * (p1 - p0);
  }
};

std::vector<double> linear_ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) {
    t.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
  }
  return t;
}

std::vector<double> log_ticks(double lo, double hi) {
  std::vector<double> t;
  for (int e = static_cast<int>(std::floor(std::log10(lo))); e <= static_cast<int>(std::ceil(std::log10(hi))); ++e) {
    const double v = std::pow(10.0, e);
    if (v >= lo * (1 - 1e-12) && v <= hi * (1 + 1e-12)) t.push_back(v);
  }
  if (t.size() < 2) {
    // fewer than two decades: use 1-2-5 within the range
    t.clear();
    for (int e = static_cast<int>(std::floor(std::log10(lo))); e <= static_cast<int>(std::ceil(std::log10(hi))); ++e) {
      for (double m : {1.0, 2.0, 5.0}) {
        const double v = m * std::pow(10.0, e);
        if (v >= lo * (1 - 1e-12) && v <= hi * (1 + 1e-12)) t.push_back(v);
      }
    }
  }
  return t;
}

void range_of(const std::vector<Series>& series, bool for_x, bool log, double& lo, double& hi) {
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (const auto& s : series) {
    const auto& v = for_x ? s.x : s.y;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double e = (!for_x && !s.yerr.empty()) ? std::abs(s.yerr[i]) : 0.0;
      for (double w : {v[i] - e, v[i] + e}) {
        if (!std::isfinite(w) || (log && !(w > 0.0))) continue;
        lo = std::min(lo, w);
        hi = std::max(hi, w);
      }
    }
  }
  if (!(lo <= hi)) throw ConfigError(std::string("no plottable ") + (for_x ? "x" : "y") + " values");
  if (log) {
    if (hi == lo) {
      lo /= 2.0;
      hi *= 2.0;
    } else {
      const double pad = 0.04 * std::log10(hi / lo);
      lo /= std::pow(10.0, pad);
      hi *= std::pow(10.0, pad);
    }
  } else {
    if (hi == lo) {
      const double d = lo == 0.0 ? 1.0 : 0.1 * std::abs(lo);
      lo -= d;
      hi += d;
    } else {
      const double pad = 0.04 * (hi - lo);
      lo -= pad;
      hi += pad;
    }
  }
}

std::string marker_svg(Marker m, double x, double y, const char* colour) {
  const double r = 3.5;
  switch (m) {
    case Marker::Circle:
      return "<circle cx=\"" + num(x) + "\" cy=\"" + num(y) + "\" r=\"" + num(r) + "\" fill=\"" + colour + "\"/>";
    case Marker::Square:
      return "<rect x=\"" + num(x - r) + "\" y=\"" + num(y - r) + "\" width=\"" + num(2 * r) + "\" height=\"" +
             num(2 * r) + "\" fill=\"" + colour + "\"/>";
    case Marker::Triangle:
      return "<polygon points=\"" + num(x) + "," + num(y - r) + " " + num(x - r) + "," + num(y + r) + " " +
             num(x + r) + "," + num(y + r) + "\" fill=\"" + colour + "\"/>";
    case Marker::Diamond:
      return "<polygon points=\"" + num(x) + "," + num(y - r) + " " + num(x + r) + "," + num(y) + " " + num(x) + "," +
             num(y + r) + " " + num(x - r) + "," + num(y) + "\" fill=\"" + colour + "\"/>";
    case Marker::None: break;
  }
  return "";
}

}  // namespace

std::string render_svg(const std::vector<Series>& series, const PlotStyle& style) {
  if (series.empty()) throw ConfigError("plot needs at least one series");
  for (const auto& s : series) {
    if (s.x.empty()) throw ConfigError("plot series '" + s.label + "' is empty");
    if (s.x.size() != s.y.size()) throw ConfigError("plot series '" + s.label + "' has x/y of different length");
    if (!s.yerr.empty() && s.yerr.size() != s.y.size()) {
      throw ConfigError("plot series '" + s.label + "' has a mismatched error column");
    }
    if (!s.line && s.marker == Marker::None) {
      throw ConfigError("plot series '" + s.label + "' has neither line nor markers");
    }
  }
  const double W = style.width, H = style.height;
  const double left = 78, right = 18, top = style.title.empty() ? 18 : 38, bottom = 52;

  Scale sx, sy;
  sx.log = style.x.log;
  sy.log = style.y.log;
  range_of(series, true, sx.log, sx.lo, sx.hi);
  range_of(series, false, sy.log, sy.lo, sy.hi);
  sx.p0 = left;
  sx.p1 = W - right;
  sy.p0 = H - bottom;
  sy.p1 = top;

  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W, "%.0f") + "\" height=\"" + num(H, "%.0f") +
       "\" viewBox=\"0 0 " + num(W, "%.0f") + " " + num(H, "%.0f") + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o += "<rect x=\"0\" y=\"0\" width=\"" + num(W, "%.0f") + "\" height=\"" + num(H, "%.0f") + "\" fill=\"white\"/>\n";
  if (!style.title.empty()) {
    o += "<text x=\"" + num(W / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + escape(style.title) +
         "</text>\n";
  }
  // frame
  o += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(W - left - right) + "\" height=\"" +
       num(H - top - bottom) + "\" fill=\"none\" stroke=\"black\"/>\n";

  const auto xt = sx.log ? log_ticks(sx.lo, sx.hi) : linear_ticks(sx.lo, sx.hi);
  const auto yt = sy.log ? log_ticks(sy.lo, sy.hi) : linear_ticks(sy.lo, sy.hi);
  o += "<g stroke=\"#999\" stroke-width=\"0.5\">\n";
  for (double t : xt) {
    o += "<line x1=\"" + num(sx(t)) + "\" y1=\"" + num(sy.p0) + "\" x2=\"" + num(sx(t)) + "\" y2=\"" + num(sy.p0 + 5) +
         "\"/>\n";
  }
  for (double t : yt) {
    o += "<line x1=\"" + num(sx.p0 - 5) + "\" y1=\"" + num(sy(t)) + "\" x2=\"" + num(sx.p0) + "\" y2=\"" + num(sy(t)) +
         "\"/>\n";
  }
  o += "</g>\n";
  for (double t : xt) {
    o += "<text x=\"" + num(sx(t)) + "\" y=\"" + num(sy.p0 + 18) + "\" text-anchor=\"middle\">" + num(t, "%.6g") +
         "</text>\n";
  }
  for (double t : yt) {
    o += "<text x=\"" + num(sx.p0 - 8) + "\" y=\"" + num(sy(t) + 4) + "\" text-anchor=\"end\">" + num(t, "%.6g") +
         "</text>\n";
  }
  o += "<text x=\"" + num((sx.p0 + sx.p1) / 2) + "\" y=\"" + num(H - 12) + "\" text-anchor=\"middle\">" +
       escape(axis_title(style.x)) + "</text>\n";
  o += "<text x=\"16\" y=\"" + num((sy.p0 + sy.p1) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       num((sy.p0 + sy.p1) / 2) + ")\">" + escape(axis_title(style.y)) + "</text>\n";

  auto drawable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!sx.log || x > 0) && (!sy.log || y > 0);
  };
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* colour = palette[k % (sizeof palette / sizeof palette[0])];
    if (!s.yerr.empty()) {
      o += "<g stroke=\"" + std::string(colour) + "\" stroke-width=\"1\">\n";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        const double lo = s.y[i] - std::abs(s.yerr[i]), hi = s.y[i] + std::abs(s.yerr[i]);
        if (!drawable(s.x[i], lo) || !drawable(s.x[i], hi)) continue;
        o += "<line x1=\"" + num(sx(s.x[i])) + "\" y1=\"" + num(sy(lo)) + "\" x2=\"" + num(sx(s.x[i])) + "\" y2=\"" +
             num(sy(hi)) + "\"/>\n";
      }
      o += "</g>\n";
    }
    if (s.line) {
      o += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"1.5\" points=\"";
      bool first = true;
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!drawable(s.x[i], s.y[i])) continue;
        if (!first) o += " ";
        o += num(sx(s.x[i])) + "," + num(sy(s.y[i]));
        first = false;
      }
      o += "\"/>\n";
    }
    if (s.marker != Marker::None) {
      o += "<g>\n";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!drawable(s.x[i], s.y[i])) continue;
        o += marker_svg(s.marker, sx(s.x[i]), sy(s.y[i]), colour) + "\n";
      }
      o += "</g>\n";
    }
  }

  // legend
  double ly = top + 16;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    if (s.label.empty()) continue;
    const char* colour = palette[k % (sizeof palette / sizeof palette[0])];
    const double lx = sx.p1 - 150;
    if (s.line) {
      o += "<line x1=\"" + num(lx) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" + num(lx + 20) + "\" y2=\"" + num(ly - 4) +
           "\" stroke=\"" + colour + "\" stroke-width=\"1.5\"/>\n";
    }
    if (s.marker != Marker::None) o += marker_svg(s.marker, lx + 10, ly - 4, colour) + "\n";
    o += "<text x=\"" + num(lx + 26) + "\" y=\"" + num(ly) + "\">" + escape(s.label) + "</text>\n";
    ly += 16;
  }
  o += "</svg>\n";
  return o;
}

void emit_plot(const std::filesystem::path& path, const std::vector<Series>& series, const PlotStyle& style) {
  const std::string svg = render_svg(series, style);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write plot '" + path.string() + "'");
  out << svg;
}

}  // namespace fsq::harness
