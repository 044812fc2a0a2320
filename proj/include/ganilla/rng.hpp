#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace ganilla {

/// The single engine type used everywhere randomness is consumed. Its state
/// round-trips through text, which is what checkpoints store.
using Engine = std::mt19937_64;

inline double uniform01(Engine& eng) { return std::generate_canonical<double, 53>(eng); }

/// Standard normal draw via Box-Muller; keeps no cached second sample so the
/// engine state alone determines the stream.
inline double standard_normal(Engine& eng) {
  double u1 = uniform01(eng);
  const double u2 = uniform01(eng);
  if (u1 <= 0.0) u1 = std::numeric_limits<double>::min();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline std::size_t uniform_index(Engine& eng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(eng);
}

template <typename Vec>
void shuffle_in_place(Vec& v, Engine& eng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(eng, i)]);
}

inline std::string engine_state(const Engine& eng) {
  std::ostringstream os;
  os << eng;
  return os.str();
}

inline Engine engine_from_state(const std::string& state) {
  Engine eng;
  std::istringstream is(state);
  is >> eng;
  if (!is) throw std::invalid_argument("corrupt rng state");
  return eng;
}

}  // namespace ganilla
