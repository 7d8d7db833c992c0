#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mfmerton {

// Stream domains keep independent simulations from sharing draws.
enum class StreamDomain : std::uint64_t { Market = 0, Particles = 1, Sampling = 2 };

// Per-path Gaussian increments. Each increment is the sum of `substeps` draws of variance
// dt/substeps, so a coarse level on the same key reuses the fine level's noise.
class PathNoise {
 public:
  PathNoise(std::uint64_t seed, StreamDomain domain, std::uint64_t a, std::uint64_t b, int dim, double dt,
            int substeps = 1)
      : dim_(dim), substeps_(substeps), scale_(std::sqrt(dt / substeps)) {
    const auto dom = static_cast<std::uint64_t>(domain);
    std::seed_seq seq{lo(seed), hi(seed), lo(dom), lo(a), hi(a), lo(b), hi(b)};
    engine_.seed(seq);
  }

  int dim() const { return dim_; }

  void draw(double* out) {
    for (int i = 0; i < dim_; ++i) out[i] = 0.0;
    for (int s = 0; s < substeps_; ++s) {
      for (int i = 0; i < dim_; ++i) out[i] += scale_ * normal_(engine_);
    }
  }

 private:
  static std::uint32_t lo(std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); }
  static std::uint32_t hi(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

  int dim_;
  int substeps_;
  double scale_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace mfmerton
