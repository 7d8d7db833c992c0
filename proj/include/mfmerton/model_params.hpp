#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "mfmerton/errors.hpp"
#include "mfmerton/kernel.hpp"

namespace mfmerton {

inline constexpr double kPivotTolerance = 1e-10;

// Solve a x = rhs by partial-pivot LU, rejecting pivots below kPivotTolerance.
inline Eigen::VectorXd solve_checked(const Eigen::MatrixXd& a, const Eigen::VectorXd& rhs) {
  if (a.rows() != a.cols() || a.rows() != rhs.size() || a.rows() == 0) {
    fail(ErrorKind::InvalidArgument, "linear system dimensions do not match");
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  const Eigen::MatrixXd& packed = lu.matrixLU();
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    if (!(std::abs(packed(i, i)) >= kPivotTolerance)) {
      fail(ErrorKind::SingularSigma, "pivot " + std::to_string(i) + " below tolerance");
    }
  }
  return lu.solve(rhs);
}

struct MarketParams {
  double r = 0.0;
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  double delta = 0.0;
  double rho = 0.0;
  double gamma = 0.5;
  double k = 1.0;

  Eigen::Index n_assets() const { return mu.size(); }
  double discount() const { return r + delta; }

  void validate() const {
    if (mu.size() == 0) fail(ErrorKind::InvalidArgument, "at least one risky asset required");
    if (sigma.rows() != mu.size() || sigma.cols() != mu.size()) {
      fail(ErrorKind::InvalidArgument, "sigma must be n x n with n = len(mu)");
    }
    if (!std::isfinite(r) || !mu.allFinite() || !sigma.allFinite()) {
      fail(ErrorKind::InvalidArgument, "market parameters must be finite");
    }
    if (!(delta > 0.0) || !(rho > 0.0) || !(k > 0.0) || !(gamma > 0.0)) {
      fail(ErrorKind::InvalidArgument, "delta, rho, k and gamma must be positive");
    }
    if (gamma == 1.0) fail(ErrorKind::InvalidArgument, "gamma = 1 (log utility) is not supported");
    solve_checked(sigma, Eigen::VectorXd::Zero(mu.size()));
  }
};

// Initial path x1 on [-d, 0).
struct InitialPath {
  struct Constant {
    double value = 0.0;
  };
  // x1(s) = level * exp(rate * s)
  struct Exponential {
    double level = 0.0;
    double rate = 0.0;
  };
  // Cell values on a uniform partition of [-d, 0).
  struct Samples {
    std::vector<double> values;
  };

  std::variant<Constant, Exponential, Samples> shape = Constant{};

  static InitialPath constant(double v) { return {Constant{v}}; }
  static InitialPath exponential(double level, double rate) { return {Exponential{level, rate}}; }
  static InitialPath samples(std::vector<double> v) { return {Samples{std::move(v)}}; }

  // Cell averages on the mesh. Sample grids must equal the mesh or be refined by an integer factor.
  std::vector<double> cell_averages(const TimeMesh& mesh) const {
    const std::size_t n = mesh.cells();
    std::vector<double> out(n);
    if (const auto* c = std::get_if<Constant>(&shape)) {
      std::fill(out.begin(), out.end(), c->value);
    } else if (const auto* e = std::get_if<Exponential>(&shape)) {
      for (std::size_t j = 0; j < n; ++j) {
        out[j] = e->level * detail::exp_integral(e->rate, mesh.point(j), mesh.point(j + 1)) / mesh.step();
      }
    } else {
      const auto& v = std::get<Samples>(shape).values;
      if (v.empty() || n % v.size() != 0) {
        fail(ErrorKind::MeshMismatch, "initial path has " + std::to_string(v.size()) + " samples, mesh has " +
                                          std::to_string(n) + " cells");
      }
      const std::size_t per = n / v.size();
      for (std::size_t j = 0; j < n; ++j) out[j] = v[j / per];
    }
    return out;
  }

  void validate() const {
    auto check = [](double v) {
      if (!std::isfinite(v) || v < 0.0) fail(ErrorKind::InvalidArgument, "initial path must be finite and nonnegative");
    };
    if (const auto* c = std::get_if<Constant>(&shape)) {
      check(c->value);
    } else if (const auto* e = std::get_if<Exponential>(&shape)) {
      check(e->level);
      if (!std::isfinite(e->rate)) fail(ErrorKind::InvalidArgument, "initial path rate must be finite");
    } else {
      const auto& v = std::get<Samples>(shape).values;
      if (v.empty()) fail(ErrorKind::InvalidArgument, "initial path samples are empty");
      for (double x : v) check(x);
    }
  }
};

struct LaborParams {
  double epsilon = 0.0;
  double mu_y = 0.0;
  Eigen::VectorXd sigma_y;
  double d = 1.0;
  KernelSpec kernel = KernelSpec::zero(1.0);
  double x0 = 1.0;
  InitialPath x1 = InitialPath::constant(1.0);

  void validate(Eigen::Index n_assets) const {
    if (sigma_y.size() != n_assets) fail(ErrorKind::InvalidArgument, "sigma_y must have one entry per risky asset");
    if (!std::isfinite(epsilon) || !std::isfinite(mu_y) || !sigma_y.allFinite()) {
      fail(ErrorKind::InvalidArgument, "labor parameters must be finite");
    }
    if (!(d > 0.0) || !std::isfinite(d)) fail(ErrorKind::InvalidArgument, "delay length d must be positive");
    if (!(x0 > 0.0) || !std::isfinite(x0)) fail(ErrorKind::InvalidArgument, "initial income x0 must be positive");
    kernel.validate();
    if (std::abs(kernel.d - d) > 1e-12 * std::max(1.0, d)) fail(ErrorKind::InvalidArgument, "kernel delay differs from d");
    x1.validate();
  }
};

// kappa = sigma^{-1} (mu - r 1)
inline Eigen::VectorXd market_price_of_risk(const MarketParams& m) {
  return solve_checked(m.sigma, m.mu - m.r * Eigen::VectorXd::Ones(m.mu.size()));
}

enum class HypKBranch {
  NegativeSpread,    // eps - sigma_y.kappa < 0
  NonNegativeSpread  // eps - sigma_y.kappa >= 0
};

inline const char* to_string(HypKBranch b) {
  return b == HypKBranch::NegativeSpread ? "eps-sigma_y.kappa<0" : "eps-sigma_y.kappa>=0";
}

struct HypothesisReport {
  Eigen::VectorXd kappa;
  double sigma_y_kappa = 0.0;
  double spread = 0.0;  // eps - sigma_y.kappa
  double abs_moment = 0.0;
  double K1_tilde = 0.0;  // Ktilde_1(r+delta)
  double K2_tilde = 0.0;  // Ktilde_2(r+delta)
  HypKBranch hyp_K_branch = HypKBranch::NonNegativeSpread;
  bool hyp_K_ok = false;
  double hyp_K_margin = 0.0;
  bool hyp_gamma_ok = false;
  double hyp_gamma_margin = 0.0;

  bool ok() const { return hyp_K_ok && hyp_gamma_ok; }

  std::string failure() const {
    std::string out;
    if (!hyp_K_ok) {
      out += std::string("income growth hypothesis fails on branch ") + to_string(hyp_K_branch) +
             " (margin " + std::to_string(hyp_K_margin) + ")";
    }
    if (!hyp_gamma_ok) {
      if (!out.empty()) out += "; ";
      out += "discount hypothesis rho+delta-(1-gamma)(r+delta+|kappa|^2/(2 gamma)) > 0 fails (margin " +
             std::to_string(hyp_gamma_margin) + ")";
    }
    return out;
  }
};

// The binding inequality of each branch is the smaller of Ktilde_1(r+delta) and Ktilde_2(r+delta).
inline HypothesisReport check_hypotheses(const MarketParams& m, const LaborParams& l) {
  HypothesisReport rep;
  rep.kappa = market_price_of_risk(m);
  rep.sigma_y_kappa = l.sigma_y.dot(rep.kappa);
  rep.spread = l.epsilon - rep.sigma_y_kappa;
  const double lam = m.discount();
  rep.abs_moment = discounted_abs_moment(l.kernel, lam);
  rep.K1_tilde = lam - (l.epsilon + l.mu_y - rep.sigma_y_kappa) - rep.abs_moment;
  rep.K2_tilde = lam - l.mu_y - rep.abs_moment;
  if (rep.spread < 0.0) {
    rep.hyp_K_branch = HypKBranch::NegativeSpread;
    rep.hyp_K_margin = rep.K2_tilde;
  } else {
    rep.hyp_K_branch = HypKBranch::NonNegativeSpread;
    rep.hyp_K_margin = rep.K1_tilde;
  }
  rep.hyp_K_ok = rep.hyp_K_margin > 0.0;
  const double g = m.gamma;
  rep.hyp_gamma_margin = m.rho + m.delta - (1.0 - g) * (lam + rep.kappa.squaredNorm() / (2.0 * g));
  rep.hyp_gamma_ok = rep.hyp_gamma_margin > 0.0;
  return rep;
}

}  // namespace mfmerton
