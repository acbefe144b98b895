#include <algorithm>
#include <cmath>
#include <numeric>

#include "fsq/errors.hpp"
#include "fsq/harness.hpp"

namespace fsq::harness {

NormalizedReadout normalize_readout(const std::vector<double>& times, const std::vector<double>& raw_up,
                                    const std::vector<double>& raw_down, const std::vector<double>& reference_times,
                                    const std::vector<double>& reference_counts, std::optional<double> lz_efficiency) {
  if (raw_up.size() != times.size() || (!raw_down.empty() && raw_down.size() != times.size())) {
    throw ConfigError("readout columns must have one value per time");
  }
  if (reference_times.size() != reference_counts.size()) {
    throw ConfigError("reference times and counts differ in length");
  }
  if (reference_times.size() < 2) throw ConfigError("normalisation needs at least 2 reference points");
  if (lz_efficiency && !(*lz_efficiency > 0.0 && *lz_efficiency <= 1.0)) {
    throw ConfigError("Landau-Zener efficiency must lie in (0, 1]");
  }

  std::vector<std::size_t> order(reference_times.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return reference_times[a] < reference_times[b]; });
  std::vector<double> rt, rc;
  for (std::size_t i : order) {
    if (!rt.empty() && reference_times[i] == rt.back()) throw ConfigError("duplicate reference time");
    if (!(reference_counts[i] > 0.0)) throw ConfigError("reference counts must be > 0");
    rt.push_back(reference_times[i]);
    rc.push_back(reference_counts[i]);
  }

  NormalizedReadout out;
  std::size_t outside = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i];
    // segment [k, k+1] containing t, the end segments when outside
    std::size_t k = static_cast<std::size_t>(std::upper_bound(rt.begin(), rt.end(), t) - rt.begin());
    k = k == 0 ? 0 : std::min(k - 1, rt.size() - 2);
    if (t < rt.front() || t > rt.back()) ++outside;
    const double w = (t - rt[k]) / (rt[k + 1] - rt[k]);
    const double ref = rc[k] + w * (rc[k + 1] - rc[k]);
    if (!(ref > 0.0)) throw NumericalError("extrapolated reference is not positive at t = " + std::to_string(t));
    out.reference.push_back(ref);
    out.up.push_back(raw_up[i] / ref);
    if (!raw_down.empty()) out.down.push_back(raw_down[i] / ref * lz_efficiency.value_or(1.0));
  }
  if (outside > 0) {
    out.warnings.push_back(std::to_string(outside) + " measurement time(s) outside the reference span, extrapolated");
  }
  return out;
}

}  // namespace fsq::harness
