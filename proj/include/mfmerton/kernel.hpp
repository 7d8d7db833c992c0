#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "mfmerton/errors.hpp"

namespace mfmerton {

// Uniform mesh s_j = -d + j*step, j = 0..cells, on the delay window [-d, 0].
class TimeMesh {
 public:
  static TimeMesh uniform(double d, double step) {
    if (!(d > 0.0) || !std::isfinite(d)) fail(ErrorKind::InvalidArgument, "delay length must be positive");
    if (!(step > 0.0) || !std::isfinite(step)) fail(ErrorKind::InvalidArgument, "mesh step must be positive");
    const double ratio = d / step;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-12 * std::max(1.0, ratio)) {
      fail(ErrorKind::MeshMismatch, "step " + std::to_string(step) + " does not divide delay " + std::to_string(d));
    }
    return TimeMesh(d, static_cast<std::size_t>(rounded));
  }

  static TimeMesh with_cells(double d, std::size_t cells) {
    if (!(d > 0.0) || cells == 0) fail(ErrorKind::InvalidArgument, "mesh needs d > 0 and at least one cell");
    return TimeMesh(d, cells);
  }

  double d() const { return d_; }
  double step() const { return step_; }
  std::size_t cells() const { return cells_; }
  double point(std::size_t j) const { return j >= cells_ ? 0.0 : -d_ + static_cast<double>(j) * step_; }

 private:
  TimeMesh(double d, std::size_t cells) : d_(d), step_(d / static_cast<double>(cells)), cells_(cells) {}

  double d_;
  double step_;
  std::size_t cells_;
};

namespace detail {

// \int_a^b e^{mu s} ds
inline double exp_integral(double mu, double a, double b) {
  if (mu == 0.0) return b - a;
  return std::exp(mu * a) * std::expm1(mu * (b - a)) / mu;
}

// \int_0^len e^{-rate u} du
inline double decay_integral(double rate, double len) {
  if (rate == 0.0) return len;
  return -std::expm1(-rate * len) / rate;
}

inline std::complex<double> exp_integral(std::complex<double> z, double a, double b) {
  const std::complex<double> x = z * (b - a);
  if (std::abs(x) < 1e-4) {
    return std::exp(z * a) * (b - a) * (1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0);
  }
  return (std::exp(z * b) - std::exp(z * a)) / z;
}

// \int_a^b s e^{z s} ds
inline std::complex<double> exp_first_moment(std::complex<double> z, double a, double b) {
  const double span = std::max(std::abs(a), std::abs(b));
  if (std::abs(z) * span < 1e-3) {
    std::complex<double> sum = 0.0, zn = 1.0;
    double fact = 1.0;
    for (int n = 0; n < 8; ++n) {
      sum += zn / fact * (std::pow(b, n + 2) - std::pow(a, n + 2)) / static_cast<double>(n + 2);
      zn *= z;
      fact *= static_cast<double>(n + 1);
    }
    return sum;
  }
  return (b * std::exp(z * b) - a * std::exp(z * a)) / z - exp_integral(z, a, b) / z;
}

}  // namespace detail

// Delay kernel phi on [-d, 0].
struct KernelSpec {
  struct Zero {};
  struct Constant {
    double c = 0.0;
  };
  // phi(s) = c * exp(a * s)
  struct Exponential {
    double c = 0.0;
    double a = 0.0;
  };
  // Piecewise constant on values.size() equal cells of [-d, 0].
  struct Grid {
    std::vector<double> values;
  };

  double d = 1.0;
  std::variant<Zero, Constant, Exponential, Grid> shape = Zero{};

  static KernelSpec zero(double d) { return {d, Zero{}}; }
  static KernelSpec constant(double d, double c) { return {d, Constant{c}}; }
  static KernelSpec exponential(double d, double c, double a) { return {d, Exponential{c, a}}; }
  static KernelSpec grid(double d, std::vector<double> values) { return {d, Grid{std::move(values)}}; }

  std::string variant_name() const {
    switch (shape.index()) {
      case 0: return "zero";
      case 1: return "constant";
      case 2: return "exponential";
      default: return "grid";
    }
  }

  void validate() const {
    if (!(d > 0.0) || !std::isfinite(d)) fail(ErrorKind::InvalidArgument, "kernel delay length must be positive");
    if (const auto* c = std::get_if<Constant>(&shape); c && !std::isfinite(c->c)) {
      fail(ErrorKind::InvalidArgument, "constant kernel value must be finite");
    }
    if (const auto* e = std::get_if<Exponential>(&shape); e && !(std::isfinite(e->c) && std::isfinite(e->a))) {
      fail(ErrorKind::InvalidArgument, "exponential kernel parameters must be finite");
    }
    if (const auto* g = std::get_if<Grid>(&shape)) {
      if (g->values.empty()) fail(ErrorKind::InvalidArgument, "grid kernel needs at least one cell");
      for (double v : g->values) {
        if (!std::isfinite(v)) fail(ErrorKind::InvalidArgument, "grid kernel values must be finite");
      }
    }
  }

  bool is_zero() const { return std::holds_alternative<Zero>(shape); }

  // Number of constant pieces for Constant/Grid; 0 otherwise.
  std::size_t pieces() const {
    if (std::holds_alternative<Constant>(shape)) return 1;
    if (const auto* g = std::get_if<Grid>(&shape)) return g->values.size();
    return 0;
  }

  double operator()(double s) const {
    if (s < -d || s > 0.0) return 0.0;
    return std::visit(
        [&](const auto& k) -> double {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, Zero>) {
            return 0.0;
          } else if constexpr (std::is_same_v<T, Constant>) {
            return k.c;
          } else if constexpr (std::is_same_v<T, Exponential>) {
            return k.c * std::exp(k.a * s);
          } else {
            const std::size_t m = k.values.size();
            const auto idx = static_cast<std::size_t>(std::floor((s + d) / d * static_cast<double>(m)));
            return k.values[std::min(idx, m - 1)];
          }
        },
        shape);
  }
};

namespace detail {

template <class F>
void for_each_grid_overlap(const KernelSpec::Grid& g, double d, double a, double b, F&& f) {
  const std::size_t m = g.values.size();
  const double h = d / static_cast<double>(m);
  const double first = std::floor((a + d) / h) - 1.0;
  const double last = std::ceil((b + d) / h) + 1.0;
  const auto c0 = static_cast<std::size_t>(std::max(0.0, first));
  const auto c1 = static_cast<std::size_t>(std::min(static_cast<double>(m), std::max(0.0, last)));
  for (std::size_t c = c0; c < c1; ++c) {
    const double lo = std::max(a, -d + static_cast<double>(c) * h);
    const double hi = std::min(b, c + 1 == m ? 0.0 : -d + static_cast<double>(c + 1) * h);
    if (hi > lo) f(g.values[c], lo, hi);
  }
}

template <class Abs>
double moment_impl(const KernelSpec& k, double lambda, Abs abs) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, KernelSpec::Zero>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, KernelSpec::Constant>) {
          return abs(s.c) * exp_integral(lambda, -k.d, 0.0);
        } else if constexpr (std::is_same_v<T, KernelSpec::Exponential>) {
          return abs(s.c) * exp_integral(lambda + s.a, -k.d, 0.0);
        } else {
          double sum = 0.0;
          for_each_grid_overlap(s, k.d, -k.d, 0.0,
                                [&](double v, double lo, double hi) { sum += abs(v) * exp_integral(lambda, lo, hi); });
          return sum;
        }
      },
      k.shape);
}

}  // namespace detail

// \int_{-d}^0 e^{lambda s} phi(s) ds
inline double discounted_moment(const KernelSpec& k, double lambda) {
  return detail::moment_impl(k, lambda, [](double v) { return v; });
}

// \int_{-d}^0 e^{lambda s} |phi(s)| ds
inline double discounted_abs_moment(const KernelSpec& k, double lambda) {
  return detail::moment_impl(k, lambda, [](double v) { return std::abs(v); });
}

// Complex moment and its lambda-derivative, used by the Newton root search.
inline std::complex<double> discounted_moment(const KernelSpec& k, std::complex<double> z) {
  return std::visit(
      [&](const auto& s) -> std::complex<double> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, KernelSpec::Zero>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, KernelSpec::Constant>) {
          return s.c * detail::exp_integral(z, -k.d, 0.0);
        } else if constexpr (std::is_same_v<T, KernelSpec::Exponential>) {
          return s.c * detail::exp_integral(z + s.a, -k.d, 0.0);
        } else {
          std::complex<double> sum = 0.0;
          detail::for_each_grid_overlap(s, k.d, -k.d, 0.0, [&](double v, double lo, double hi) {
            sum += v * detail::exp_integral(z, lo, hi);
          });
          return sum;
        }
      },
      k.shape);
}

inline std::complex<double> discounted_first_moment(const KernelSpec& k, std::complex<double> z) {
  return std::visit(
      [&](const auto& s) -> std::complex<double> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, KernelSpec::Zero>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, KernelSpec::Constant>) {
          return s.c * detail::exp_first_moment(z, -k.d, 0.0);
        } else if constexpr (std::is_same_v<T, KernelSpec::Exponential>) {
          return s.c * detail::exp_first_moment(z + s.a, -k.d, 0.0);
        } else {
          std::complex<double> sum = 0.0;
          detail::for_each_grid_overlap(s, k.d, -k.d, 0.0, [&](double v, double lo, double hi) {
            sum += v * detail::exp_first_moment(z, lo, hi);
          });
          return sum;
        }
      },
      k.shape);
}

// \int_a^b phi(s) ds
inline double cell_integral(const KernelSpec& k, double a, double b) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, KernelSpec::Zero>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, KernelSpec::Constant>) {
          return s.c * (b - a);
        } else if constexpr (std::is_same_v<T, KernelSpec::Exponential>) {
          return s.c * detail::exp_integral(s.a, a, b);
        } else {
          double sum = 0.0;
          detail::for_each_grid_overlap(s, k.d, a, b, [&](double v, double lo, double hi) { sum += v * (hi - lo); });
          return sum;
        }
      },
      k.shape);
}

// \int_a^b e^{-lambda (b - tau)} phi(tau) dtau
inline double discounted_cell_integral(const KernelSpec& k, double lambda, double a, double b) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, KernelSpec::Zero>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, KernelSpec::Constant>) {
          return s.c * detail::decay_integral(lambda, b - a);
        } else if constexpr (std::is_same_v<T, KernelSpec::Exponential>) {
          return s.c * std::exp(s.a * b) * detail::decay_integral(lambda + s.a, b - a);
        } else {
          double sum = 0.0;
          detail::for_each_grid_overlap(s, k.d, a, b, [&](double v, double lo, double hi) {
            sum += v * std::exp(-lambda * (b - hi)) * detail::decay_integral(lambda, hi - lo);
          });
          return sum;
        }
      },
      k.shape);
}

inline void require_same_delay(const KernelSpec& k, const TimeMesh& mesh) {
  if (std::abs(k.d - mesh.d()) > 1e-12 * std::max(1.0, k.d)) {
    fail(ErrorKind::MeshMismatch, "kernel delay and mesh delay differ");
  }
}

// Whether each mesh cell lies inside a single constant piece of the kernel.
inline bool aligned_with(const KernelSpec& k, const TimeMesh& mesh) {
  const std::size_t p = k.pieces();
  return p != 0 && mesh.cells() % p == 0;
}

// Exact integrals of phi over every mesh cell.
inline std::vector<double> cell_integrals(const KernelSpec& k, const TimeMesh& mesh) {
  require_same_delay(k, mesh);
  const std::size_t n = mesh.cells();
  std::vector<double> out(n);
  if (const auto* g = std::get_if<KernelSpec::Grid>(&k.shape); g && aligned_with(k, mesh)) {
    const std::size_t per = n / g->values.size();
    for (std::size_t j = 0; j < n; ++j) out[j] = g->values[j / per] * mesh.step();
    return out;
  }
  for (std::size_t j = 0; j < n; ++j) out[j] = cell_integral(k, mesh.point(j), mesh.point(j + 1));
  return out;
}

// G(s) = \int_{-d}^s e^{-lambda (s - tau)} phi(tau) dtau at s_0..s_N, by the one-step recursion.
inline std::vector<double> convolution_G(const KernelSpec& k, double lambda, const TimeMesh& mesh) {
  require_same_delay(k, mesh);
  const std::size_t n = mesh.cells();
  std::vector<double> G(n + 1, 0.0);
  const double decay = std::exp(-lambda * mesh.step());
  const auto* g = std::get_if<KernelSpec::Grid>(&k.shape);
  const bool aligned = g != nullptr && aligned_with(k, mesh);
  const double unit = detail::decay_integral(lambda, mesh.step());
  for (std::size_t j = 0; j < n; ++j) {
    const double inc = aligned ? g->values[j / (n / g->values.size())] * unit
                               : discounted_cell_integral(k, lambda, mesh.point(j), mesh.point(j + 1));
    G[j + 1] = decay * G[j] + inc;
  }
  return G;
}

}  // namespace mfmerton
