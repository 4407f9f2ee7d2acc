#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <cstdint>
#include <random>

namespace cellcal::internal {

// Deterministic sampling helpers. std::mt19937_64 output is fully specified
// by the standard, but the std distributions are not; the samplers here pin
// the value stream so identical seeds give identical datasets everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  double uniform01() {
    // 53-bit mantissa from the top bits, in [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  int uniformInt(int n) {  // [0, n)
    return static_cast<int>(engine_() % static_cast<std::uint64_t>(n));
  }

  double normal(double sigma = 1.0) {
    // Box-Muller, spare discarded so call order alone fixes the stream.
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    return sigma * std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * M_PI * u2);
  }

  Eigen::Vector3d unitVector() {
    for (;;) {
      Eigen::Vector3d v(normal(), normal(), normal());
      double n = v.norm();
      if (n > 1e-12) return v / n;
    }
  }

  // Uniform rotation via normalized quaternion.
  Eigen::Matrix3d uniformRotation() {
    for (;;) {
      Eigen::Vector4d q(normal(), normal(), normal(), normal());
      double n = q.norm();
      if (n > 1e-12) {
        q /= n;
        return Eigen::Quaterniond(q(0), q(1), q(2), q(3)).toRotationMatrix();
      }
    }
  }

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer; used to derive independent substreams per collection.
inline std::uint64_t mixSeed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace cellcal::internal
