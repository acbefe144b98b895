#include <cmath>
#include <cstdlib>
#include <string>

#include "fsq/parallel.hpp"
#include "fsq/rng.hpp"

namespace fsq {

std::size_t default_workers() {
  if (const char* env = std::getenv("FSQ_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

double CounterRng::normal(std::uint64_t k) const {
  const double u1 = uniform(2 * k);
  const double u2 = uniform(2 * k + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace fsq
