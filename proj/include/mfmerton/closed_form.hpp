#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mfmerton/errors.hpp"
#include "mfmerton/kernel.hpp"
#include "mfmerton/model_params.hpp"

namespace mfmerton {

// Discounted kernel profiles on the simulation mesh, lambda = r + delta.
struct KernelProfiles {
  TimeMesh mesh = TimeMesh::with_cells(1.0, 1);
  std::vector<double> G;         // G(s_j), j = 0..N
  std::vector<double> h;         // h_inf(s_j) = g_inf G(s_j)
  std::vector<double> h_cell;    // exact integral of h_inf over cell j
  std::vector<double> phi_cell;  // exact integral of phi over cell j
  double g_inf = 0.0;
  double moment = 0.0;
  double abs_moment = 0.0;
};

struct DerivedConstants {
  MarketParams market;
  LaborParams labor;
  Eigen::VectorXd kappa;
  double kappa_sq = 0.0;
  double sigma_y_kappa = 0.0;
  double discount = 0.0;  // r + delta
  double K1 = 0.0;
  double K2 = 0.0;
  double g_inf = 0.0;
  double i_inf = 0.0;
  double beta = 0.0;
  double b = 0.0;
  double nu = 0.0;
  double f_inf = 0.0;
  double bequest_factor = 0.0;  // k^{-b}
  Eigen::VectorXd merton_dir;   // sigma^{-T} kappa
  Eigen::VectorXd hedge_dir;    // sigma^{-T} sigma_y
  KernelProfiles profiles;

  double gamma() const { return market.gamma; }
  std::size_t cells() const { return profiles.mesh.cells(); }
};

struct StatePoint {
  double w = 0.0;
  double y0 = 0.0;
  std::vector<double> y1;  // cell values on [-d, 0)
  double e0 = 0.0;
  std::vector<double> e1;
};

struct ControlTriple {
  double c = 0.0;
  double B = 0.0;
  Eigen::VectorXd theta;
};

struct ValueDerivatives {
  double u = 0.0;    // d v / d w
  double Q11 = 0.0;  // d2 v / d w2
  double Q12 = 0.0;  // d2 v / d w d x0
  double Q22 = 0.0;  // d2 v / d x0^2
};

struct AnalyticValue {
  double value = 0.0;
  bool verified = false;  // the Monte Carlo suites cover gamma in (0,1) only
};

inline double benchmark_identity_residual(double i_inf, double g_inf, double epsilon, double sigma_y_kappa) {
  return i_inf - epsilon * g_inf + i_inf * g_inf * (epsilon - sigma_y_kappa);
}

inline DerivedConstants derive_constants(const MarketParams& m, const LaborParams& l, const TimeMesh& mesh) {
  m.validate();
  l.validate(m.n_assets());
  const HypothesisReport hyp = check_hypotheses(m, l);
  if (!hyp.hyp_K_ok || !hyp.hyp_gamma_ok) fail(ErrorKind::HypothesisViolation, hyp.failure());

  DerivedConstants dc;
  dc.market = m;
  dc.labor = l;
  dc.kappa = hyp.kappa;
  dc.kappa_sq = hyp.kappa.squaredNorm();
  dc.sigma_y_kappa = hyp.sigma_y_kappa;
  dc.discount = m.discount();
  const double lam = dc.discount;
  const double mom = discounted_moment(l.kernel, lam);
  dc.K1 = lam - (l.epsilon + l.mu_y - dc.sigma_y_kappa) - mom;
  dc.K2 = lam - l.mu_y - mom;
  dc.g_inf = 1.0 / dc.K1;
  dc.i_inf = l.epsilon / dc.K2;
  dc.beta = lam - l.mu_y - l.epsilon + dc.sigma_y_kappa;
  const double g = m.gamma;
  dc.b = 1.0 - 1.0 / g;
  dc.nu = g / hyp.hyp_gamma_margin;
  dc.bequest_factor = std::pow(m.k, -dc.b);
  dc.f_inf = (1.0 + m.delta * dc.bequest_factor) * dc.nu;
  dc.merton_dir = solve_checked(m.sigma.transpose(), dc.kappa);
  dc.hedge_dir = solve_checked(m.sigma.transpose(), l.sigma_y);

  const double res = benchmark_identity_residual(dc.i_inf, dc.g_inf, l.epsilon, dc.sigma_y_kappa);
  const double scale = std::max({1.0, std::abs(dc.i_inf), std::abs(l.epsilon * dc.g_inf)});
  if (!(std::abs(res) <= 1e-12 * scale)) fail(ErrorKind::Internal, "identity i - eps g + i g (eps - sy.k) = 0 violated");

  KernelProfiles& p = dc.profiles;
  p.mesh = mesh;
  p.g_inf = dc.g_inf;
  p.moment = mom;
  p.abs_moment = hyp.abs_moment;
  p.G = convolution_G(l.kernel, lam, mesh);
  p.phi_cell = cell_integrals(l.kernel, mesh);
  const std::size_t n = mesh.cells();
  p.h.resize(n + 1);
  p.h_cell.resize(n);
  for (std::size_t j = 0; j <= n; ++j) p.h[j] = dc.g_inf * p.G[j];
  // G' = phi - lam G integrated over a cell
  for (std::size_t j = 0; j < n; ++j) p.h_cell[j] = dc.g_inf * (p.phi_cell[j] - (p.G[j + 1] - p.G[j])) / lam;
  return dc;
}

inline DerivedConstants derive_constants(const MarketParams& m, const LaborParams& l, double mesh_step) {
  return derive_constants(m, l, TimeMesh::uniform(l.d, mesh_step));
}

// Deterministic initial data: y = e = (x0, x1).
inline StatePoint initial_state(const LaborParams& l, double w, const TimeMesh& mesh) {
  StatePoint s;
  s.w = w;
  s.y0 = l.x0;
  s.e0 = l.x0;
  s.y1 = l.x1.cell_averages(mesh);
  s.e1 = s.y1;
  return s;
}

// <h_inf, x1> with x1 given cell-wise by window(j).
template <class Window>
double h_inner(const DerivedConstants& dc, Window&& window) {
  const auto& hc = dc.profiles.h_cell;
  double sum = 0.0;
  for (std::size_t j = 0; j < hc.size(); ++j) sum += hc[j] * window(j);
  return sum;
}

template <class YWindow, class EWindow>
double human_capital_from(const DerivedConstants& dc, double y0, YWindow&& y1, double e0, EWindow&& e1) {
  const double own = dc.g_inf * y0 + h_inner(dc, y1);
  const double bench = dc.g_inf * e0 + h_inner(dc, e1);
  return own - dc.i_inf * bench;
}

inline void require_mesh(const DerivedConstants& dc, const StatePoint& s) {
  if (s.y1.size() != dc.cells() || s.e1.size() != dc.cells()) {
    fail(ErrorKind::MeshMismatch, "state buffers have " + std::to_string(s.y1.size()) + "/" +
                                      std::to_string(s.e1.size()) + " cells, constants use " +
                                      std::to_string(dc.cells()));
  }
}

inline double human_capital(const DerivedConstants& dc, const StatePoint& s) {
  require_mesh(dc, s);
  return human_capital_from(
      dc, s.y0, [&](std::size_t j) { return s.y1[j]; }, s.e0, [&](std::size_t j) { return s.e1[j]; });
}

inline double gamma_infinity(const DerivedConstants& dc, const StatePoint& s) { return s.w + human_capital(dc, s); }

// Gamma^p for Gamma >= 0, with the boundary handled without overflow.
inline double boundary_pow(double gamma_value, double p) {
  if (gamma_value < 1e-300) {
    if (p > 0.0) return 0.0;
    if (p == 0.0) return 1.0;
    return std::numeric_limits<double>::infinity();
  }
  return std::exp(p * std::log(gamma_value));
}

inline double value_from_gamma(const DerivedConstants& dc, double gamma_value) {
  if (gamma_value < 0.0) fail(ErrorKind::OutsideConstraintSet, "Gamma < 0");
  const double g = dc.gamma();
  return std::pow(dc.f_inf, g) / (1.0 - g) * boundary_pow(gamma_value, 1.0 - g);
}

inline double value_function(const DerivedConstants& dc, const StatePoint& s) {
  return value_from_gamma(dc, gamma_infinity(dc, s));
}

inline ValueDerivatives value_derivatives(const DerivedConstants& dc, double gamma_value) {
  if (!(gamma_value > 0.0)) fail(ErrorKind::OutsideConstraintSet, "derivatives need Gamma > 0");
  const double g = dc.gamma();
  const double fg = std::pow(dc.f_inf, g);
  ValueDerivatives d;
  d.u = fg * boundary_pow(gamma_value, -g);
  d.Q11 = -g * fg * boundary_pow(gamma_value, -1.0 - g);
  d.Q12 = d.Q11 * dc.g_inf;
  d.Q22 = d.Q11 * dc.g_inf * dc.g_inf;
  return d;
}

// sigma^T theta of the feedback map.
inline Eigen::VectorXd feedback_exposure(const DerivedConstants& dc, double gamma_value, double y0) {
  return (gamma_value / dc.gamma()) * dc.kappa - (dc.g_inf * y0) * dc.labor.sigma_y;
}

inline ControlTriple feedback_from_gamma(const DerivedConstants& dc, double gamma_value, double y0) {
  if (gamma_value < 0.0) fail(ErrorKind::OutsideConstraintSet, "Gamma < 0");
  ControlTriple pi;
  pi.c = gamma_value / dc.f_inf;
  pi.B = dc.bequest_factor * gamma_value / dc.f_inf;
  pi.theta = (gamma_value / dc.gamma()) * dc.merton_dir - (dc.g_inf * y0) * dc.hedge_dir;
  return pi;
}

inline ControlTriple feedback_map(const DerivedConstants& dc, const StatePoint& s) {
  return feedback_from_gamma(dc, gamma_infinity(dc, s), s.y0);
}

namespace detail {

inline double crra(double x, double gamma) { return std::pow(x, 1.0 - gamma) / (1.0 - gamma); }

}  // namespace detail

// Control-dependent Hamiltonian written in the exposure v = sigma^T theta.
inline double hamiltonian_cv_exposure(double y0, double u, double Q11, double Q12, double c, double B,
                                      const Eigen::Ref<const Eigen::VectorXd>& v, const Eigen::VectorXd& kappa,
                                      const Eigen::VectorXd& sigma_y, double gamma, double delta, double k) {
  return detail::crra(c, gamma) - c * u + delta * detail::crra(k * B, gamma) - delta * B * u +
         0.5 * v.squaredNorm() * Q11 + v.dot(sigma_y) * y0 * Q12 + v.dot(kappa) * u;
}

inline double hamiltonian_cv(double y0, double u, double Q11, double Q12, const ControlTriple& pi,
                             const MarketParams& m, const Eigen::VectorXd& sigma_y) {
  const double g = m.gamma;
  const Eigen::VectorXd st = m.sigma.transpose() * pi.theta;
  const Eigen::VectorXd excess = m.mu - m.r * Eigen::VectorXd::Ones(m.mu.size());
  return detail::crra(pi.c, g) - pi.c * u + m.delta * detail::crra(m.k * pi.B, g) - m.delta * pi.B * u +
         0.5 * st.squaredNorm() * Q11 + pi.theta.dot(m.sigma * sigma_y) * y0 * Q12 + pi.theta.dot(excess) * u;
}

inline std::pair<double, ControlTriple> hamiltonian_max(double y0, double u, double Q11, double Q12,
                                                        const MarketParams& m, const Eigen::VectorXd& sigma_y) {
  if (u < 0.0 || Q11 > 0.0) fail(ErrorKind::UnboundedHamiltonian, "u < 0 or Q11 > 0");
  if (u * Q11 == 0.0) fail(ErrorKind::DegenerateCase, "u * Q11 = 0");
  const double g = m.gamma;
  ControlTriple pi;
  pi.c = std::pow(u, -1.0 / g);
  pi.B = std::pow(m.k, -(1.0 - 1.0 / g)) * pi.c;
  const Eigen::VectorXd excess = m.mu - m.r * Eigen::VectorXd::Ones(m.mu.size());
  const Eigen::MatrixXd cov = m.sigma * m.sigma.transpose();
  pi.theta = -(1.0 / Q11) * solve_checked(cov, excess * u + m.sigma * sigma_y * (y0 * Q12));
  return {hamiltonian_cv(y0, u, Q11, Q12, pi, m, sigma_y), pi};
}

inline AnalyticValue analytic_J_optimal(const DerivedConstants& dc, double gamma0) {
  if (gamma0 < 0.0) fail(ErrorKind::OutsideConstraintSet, "Gamma(0) < 0");
  if (!(dc.nu > 0.0)) fail(ErrorKind::HypothesisViolation, "nu must be positive");
  const double g = dc.gamma();
  const double flow = 1.0 + dc.market.delta * dc.bequest_factor;
  AnalyticValue out;
  out.value = flow * std::pow(dc.f_inf, g - 1.0) * dc.nu * boundary_pow(gamma0, 1.0 - g) / (1.0 - g);
  out.verified = g < 1.0;
  return out;
}

// Drift of Gamma* under the feedback map: r + delta + |kappa|^2/gamma - 1/nu.
inline double gamma_star_drift(const DerivedConstants& dc) {
  return dc.discount + dc.kappa_sq / dc.gamma() - (1.0 + dc.market.delta * dc.bequest_factor) / dc.f_inf;
}

// Scalar identity left after substituting the candidate into the HJB equation.
inline double hjb_scalar_residual(const DerivedConstants& dc) {
  const MarketParams& m = dc.market;
  const double g = m.gamma;
  return (m.rho + m.delta) / (1.0 - g) - dc.discount +
         g / (g - 1.0) / dc.f_inf * (1.0 + m.delta * std::pow(m.k, (1.0 - g) / g)) - dc.kappa_sq / (2.0 * g);
}

struct HjbEvaluation {
  double lhs = 0.0;    // (rho + delta) v
  double h0 = 0.0;     // control-free part
  double hmax = 0.0;   // maximized control part
  double rhs() const { return h0 + hmax; }
  double relative_error() const { return std::abs(lhs - rhs()) / std::max(std::abs(lhs), 1e-300); }
};

// Both sides of the HJB equation at an interior state, with the A* terms in closed form.
inline HjbEvaluation evaluate_hjb(const DerivedConstants& dc, const StatePoint& s) {
  require_mesh(dc, s);
  const MarketParams& m = dc.market;
  const LaborParams& l = dc.labor;
  const double G = gamma_infinity(dc, s);
  const ValueDerivatives dv = value_derivatives(dc, G);
  const double g = dc.g_inf, i = dc.i_inf, lam = dc.discount, sk = dc.sigma_y_kappa;

  const double hy = h_inner(dc, [&](std::size_t j) { return s.y1[j]; });
  const double he = h_inner(dc, [&](std::size_t j) { return s.e1[j]; });
  const double a_y0 = g * (lam + sk) - 1.0;
  const double a_e0 = i - l.epsilon * g - i * g * (lam - l.epsilon + sk);
  const double astar = dv.u * (s.y0 * a_y0 + s.e0 * a_e0 + lam * (hy - i * he));

  HjbEvaluation out;
  out.lhs = (m.rho + m.delta) * value_from_gamma(dc, G);
  out.h0 = lam * s.w * dv.u + s.y0 * dv.u + astar + 0.5 * dv.Q22 * s.y0 * s.y0 * l.sigma_y.squaredNorm();
  out.hmax = hamiltonian_max(s.y0, dv.u, dv.Q11, dv.Q12, m, l.sigma_y).first;
  return out;
}

}  // namespace mfmerton
