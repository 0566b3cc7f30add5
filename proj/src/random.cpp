#include "csvgd/random.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "csvgd/error.hpp"

namespace csvgd {

double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string serialize_rng(const Rng& rng) {
  std::ostringstream ss;
  ss << rng;
  return ss.str();
}

Rng deserialize_rng(const std::string& state) {
  Rng rng;
  std::istringstream ss(state);
  ss >> rng;
  if (!ss) throw FormatError("corrupt generator state");
  return rng;
}

}  // namespace csvgd
