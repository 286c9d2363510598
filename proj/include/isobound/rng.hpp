#pragma once

// Counter-based random substreams.  Every consumer derives its generator from
// a (seed, stream, index) key, so a result never depends on how work was
// scheduled across threads.  The uniform source is splitmix64 and normals are
// Box-Muller on top of it; both are fully specified here, keeping sequences
// identical across standard libraries (std::normal_distribution is not).

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace isobound {

// Purpose tags separating the substream families a run draws from.
enum class Stream : std::uint64_t {
  kLatent = 1,
  kModulus = 2,
  kAttack = 3,
  kTraining = 4,
  kWeightInit = 5,
  kNormEstimate = 6,
  kOracle = 7,
  kProjection = 8,
  kEval = 9,
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

class SubstreamRng {
 public:
  SubstreamRng(std::uint64_t seed, Stream stream, std::uint64_t index)
      : state_(detail::mix64(
            detail::mix64(detail::mix64(seed) ^
                          static_cast<std::uint64_t>(stream)) ^
            index)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1), 53 usable bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; Box-Muller needs the open lower end for the log.
  double uniform_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double radius = std::sqrt(-2.0 * std::log(uniform_open()));
    const double angle = 2.0 * std::numbers::pi * uniform();
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  std::vector<double> normal_vector(std::size_t dim) {
    std::vector<double> out(dim);
    for (auto& v : out) v = normal();
    return out;
  }

  // Uniform direction on the unit sphere.
  std::vector<double> unit_vector(std::size_t dim) {
    while (true) {
      std::vector<double> v = normal_vector(dim);
      double norm_sq = 0.0;
      for (double x : v) norm_sq += x * x;
      if (norm_sq > 1e-24) {
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (auto& x : v) x *= inv;
        return v;
      }
    }
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace isobound
