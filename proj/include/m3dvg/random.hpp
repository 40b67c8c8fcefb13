#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include <Eigen/Core>

namespace m3dvg {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// 64-bit FNV-1a; stable across platforms, unlike std::hash.
constexpr std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Small counter-based generator. Output depends only on the key and the
/// number of draws, never on the standard library implementation.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(splitmix64(key)) {}

  std::uint64_t next() { return splitmix64(key_ + 0x9E3779B97F4A7C15ULL * ++counter_); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller.
  double normal() {
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Key for a named tensor of a given shape under a run seed.
inline std::uint64_t tensor_key(std::uint64_t seed, std::string_view name, Eigen::Index rows,
                                Eigen::Index cols) {
  return splitmix64(seed) ^ splitmix64(fnv1a64(name)) ^
         splitmix64(static_cast<std::uint64_t>(rows) * 0x100000001B3ULL +
                    static_cast<std::uint64_t>(cols));
}

/// Matrix with entries uniform in (-lo_hi, lo_hi), deterministic per (seed, name, shape).
inline Eigen::MatrixXd uniform_matrix(std::uint64_t seed, std::string_view name, Eigen::Index rows,
                                      Eigen::Index cols, double bound) {
  CounterRng rng(tensor_key(seed, name, rows, cols));
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
  return m;
}

/// Glorot-uniform initialisation: bound sqrt(6 / (fan_in + fan_out)).
inline Eigen::MatrixXd glorot_uniform(std::uint64_t seed, std::string_view name, Eigen::Index fan_out,
                                      Eigen::Index fan_in) {
  return uniform_matrix(seed, name, fan_out, fan_in,
                        std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
}

}  // namespace m3dvg
