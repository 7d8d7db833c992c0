#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mfmerton/kernel.hpp"
#include "mfmerton/model_params.hpp"

namespace testing_support {

// Kernel breakpoints on [-d, 0]; grid kernels jump there.
inline std::vector<double> breakpoints(const mfmerton::KernelSpec& k) {
  std::vector<double> b = {-k.d};
  const std::size_t m = k.pieces() == 0 ? 1 : k.pieces();
  for (std::size_t i = 1; i <= m; ++i) b.push_back(i == m ? 0.0 : -k.d + k.d * static_cast<double>(i) / m);
  return b;
}

// Heun integration of the risk-neutral mean income
//   M' = a M - eps e + int phi(s) M(t+s) ds,   e' = mu_y e + int phi(s) e(t+s) ds,
// with M = e = x1 on [-d, 0) and x0 at 0, returning int_0^T e^{-lam t} M(t) dt.
// The convolution is a trapezoid rule applied piece by piece, using one-sided kernel values at jumps.
struct DdeOracle {
  double h = 1e-3;
  double horizon = 60.0;

  double discounted_integral(const mfmerton::LaborParams& l, double a, double lam) const {
    const std::size_t lag = static_cast<std::size_t>(std::llround(l.d / h));
    const std::size_t steps = static_cast<std::size_t>(std::llround(horizon / h));
    std::vector<double> M(lag + steps + 1), E(lag + steps + 1);
    auto x1 = [&](double s) {
      if (const auto* c = std::get_if<mfmerton::InitialPath::Constant>(&l.x1.shape)) return c->value;
      const auto& e = std::get<mfmerton::InitialPath::Exponential>(l.x1.shape);
      return e.level * std::exp(e.rate * s);
    };
    for (std::size_t j = 0; j < lag; ++j) M[j] = E[j] = x1(-l.d + static_cast<double>(j) * h);
    M[lag] = E[lag] = l.x0;

    // Trapezoid weights per lag node, accumulated piecewise with one-sided kernel limits.
    std::vector<double> w(lag + 1, 0.0);
    const auto bp = breakpoints(l.kernel);
    for (std::size_t p = 0; p + 1 < bp.size(); ++p) {
      const auto j0 = static_cast<std::size_t>(std::llround((bp[p] + l.d) / h));
      const auto j1 = static_cast<std::size_t>(std::llround((bp[p + 1] + l.d) / h));
      const double mid = 0.5 * (bp[p] + bp[p + 1]);
      auto phi = [&](std::size_t j) {
        if (j == j0 || j == j1) {
          // nudge inside the piece for the one-sided value
          const double s = -l.d + static_cast<double>(j) * h;
          return l.kernel(s + (mid - s) * 1e-9);
        }
        return l.kernel(-l.d + static_cast<double>(j) * h);
      };
      for (std::size_t j = j0; j < j1; ++j) {
        w[j] += 0.5 * h * phi(j);
        w[j + 1] += 0.5 * h * phi(j + 1);
      }
    }
    auto conv = [&](const std::vector<double>& v, std::size_t now) {
      double s = 0.0;
      for (std::size_t j = 0; j <= lag; ++j) s += w[j] * v[now - lag + j];
      return s;
    };

    double integral = 0.0;
    double prev = l.x0;
    for (std::size_t k = 0; k < steps; ++k) {
      const std::size_t now = lag + k;
      const double fM = a * M[now] - l.epsilon * E[now] + conv(M, now);
      const double fE = l.mu_y * E[now] + conv(E, now);
      M[now + 1] = M[now] + h * fM;
      E[now + 1] = E[now] + h * fE;
      const double gM = a * M[now + 1] - l.epsilon * E[now + 1] + conv(M, now + 1);
      const double gE = l.mu_y * E[now + 1] + conv(E, now + 1);
      M[now + 1] = M[now] + 0.5 * h * (fM + gM);
      E[now + 1] = E[now] + 0.5 * h * (fE + gE);
      const double cur = std::exp(-lam * static_cast<double>(k + 1) * h) * M[now + 1];
      integral += 0.5 * h * (prev + cur);
      prev = cur;
    }
    return integral;
  }
};

}  // namespace testing_support
