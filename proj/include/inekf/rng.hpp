// Deterministic Gaussian sampling: std::mt19937_64 driving a Box-Muller
// transform. The mt19937_64 sequence is pinned by the C++ standard, so a
// fixed seed reproduces streams bit-identically on any platform with the
// same libm; per-stream seeds are derived with a splitmix64 mix.

#ifndef INEKF_RNG_HPP
#define INEKF_RNG_HPP

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <random>

namespace inekf {

/// One splitmix64 scramble; used to derive independent stream seeds.
[[nodiscard]] inline std::uint64_t mixSeed(std::uint64_t seed,
                                           std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// @brief Standard-normal stream with deterministic draw order.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  double next() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    // uniform draws in (0, 1]; u1 > 0 keeps the log finite
    const double u1 =
        (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    cached_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
  }

  /// Draw from N(0, cov) through the Cholesky factor of cov.
  Eigen::Vector3d nextVec3(const Eigen::Matrix3d& cov) {
    Eigen::Vector3d z(next(), next(), next());
    return Eigen::LLT<Eigen::Matrix3d>(cov).matrixL() * z;
  }

 private:
  std::mt19937_64 engine_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace inekf

#endif  // INEKF_RNG_HPP
