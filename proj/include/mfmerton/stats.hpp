#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace mfmerton {

struct Summary {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

// Two-pass mean and standard error in index order.
inline Summary summarize(const double* data, std::size_t n, std::size_t stride = 1) {
  Summary s;
  s.n = n;
  if (n == 0) return s;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += data[i * stride];
  s.mean = sum / static_cast<double>(n);
  if (n < 2) return s;
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dev = data[i * stride] - s.mean;
    ss += dev * dev;
  }
  s.se = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
  return s;
}

inline Summary summarize(const std::vector<double>& v) { return summarize(v.data(), v.size()); }

}  // namespace mfmerton
