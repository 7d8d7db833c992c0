#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "mfmerton/errors.hpp"
#include "mfmerton/kernel.hpp"
#include "mfmerton/model_params.hpp"

namespace mfmerton {

struct KPair {
  double K1 = 0.0;
  double K2 = 0.0;
};

// K1(l) = l - (eps + mu_y - sy.kappa) - \int e^{ls} phi,  K2(l) = l - mu_y - \int e^{ls} phi
inline KPair eval_K(const MarketParams& m, const LaborParams& l, double lambda) {
  const double sk = l.sigma_y.dot(market_price_of_risk(m));
  const double mom = discounted_moment(l.kernel, lambda);
  return {lambda - (l.epsilon + l.mu_y - sk) - mom, lambda - l.mu_y - mom};
}

// Same with |phi|.
inline KPair eval_K_tilde(const MarketParams& m, const LaborParams& l, double lambda) {
  const double sk = l.sigma_y.dot(market_price_of_risk(m));
  const double mom = discounted_abs_moment(l.kernel, lambda);
  return {lambda - (l.epsilon + l.mu_y - sk) - mom, lambda - l.mu_y - mom};
}

struct SpectralReport {
  std::function<double(double)> K1_at;
  std::function<double(double)> K2_at;
  double xi1 = 0.0;
  double xi2 = 0.0;
  double xi0 = 0.0;  // the larger root, selected by the sign of the spread
  double lambda0_tilde = 0.0;
  double discount = 0.0;  // r + delta
  double spread = 0.0;    // eps - sigma_y.kappa
  bool dominated = false;
};

namespace detail {

// Root of an increasing function with slope >= 1.
inline double increasing_root(const std::function<double(double)>& f, double lo, double hi) {
  double width = hi - lo;
  int doublings = 0;
  while (!(f(lo) < 0.0)) {
    if (++doublings > 200) fail(ErrorKind::BracketFailure, "no sign change below the initial bracket");
    lo -= width;
    width *= 2.0;
  }
  width = hi - lo;
  doublings = 0;
  while (!(f(hi) > 0.0)) {
    if (++doublings > 200) fail(ErrorKind::BracketFailure, "no sign change above the initial bracket");
    hi += width;
    width *= 2.0;
  }
  for (int it = 0; it < 2000; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double v = f(mid);
    if (v == 0.0) return mid;
    if (v < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::abs(f(lo)) < std::abs(f(hi)) ? lo : hi;
}

}  // namespace detail

inline SpectralReport find_real_roots(const MarketParams& m, const LaborParams& l) {
  const Eigen::VectorXd kappa = market_price_of_risk(m);
  const double sk = l.sigma_y.dot(kappa);
  const double c1 = l.epsilon + l.mu_y - sk;
  const double c2 = l.mu_y;
  const KernelSpec kernel = l.kernel;

  SpectralReport rep;
  rep.K1_at = [kernel, c1](double lam) { return lam - c1 - discounted_moment(kernel, lam); };
  rep.K2_at = [kernel, c2](double lam) { return lam - c2 - discounted_moment(kernel, lam); };
  rep.discount = m.discount();
  rep.spread = l.epsilon - sk;

  if (kernel.is_zero()) {
    rep.xi1 = c1;
    rep.xi2 = c2;
  } else {
    auto k1 = [&](double lam) { return lam - c1 - discounted_abs_moment(kernel, lam); };
    auto k2 = [&](double lam) { return lam - c2 - discounted_abs_moment(kernel, lam); };
    const double lo = l.mu_y - 1.0;
    const double hi = l.mu_y + 1.0 + discounted_abs_moment(kernel, 0.0);
    rep.xi1 = detail::increasing_root(k1, lo, hi);
    rep.xi2 = rep.spread == 0.0 ? rep.xi1 : detail::increasing_root(k2, lo, hi);
  }
  rep.xi0 = rep.spread < 0.0 ? rep.xi2 : rep.xi1;
  rep.lambda0_tilde = std::max(rep.xi1, rep.xi2);
  rep.dominated = rep.discount > rep.lambda0_tilde;
  return rep;
}

// True iff the income growth hypothesis holds; its implication r+delta > lambda0_tilde is checked independently.
inline bool certify_domination(const MarketParams& m, const LaborParams& l) {
  const HypothesisReport hyp = check_hypotheses(m, l);
  const SpectralReport spec = find_real_roots(m, l);
  if (hyp.hyp_K_ok && !spec.dominated) {
    fail(ErrorKind::Internal, "growth hypothesis holds but r+delta <= lambda0_tilde (" +
                                  std::to_string(spec.discount) + " vs " + std::to_string(spec.lambda0_tilde) + ")");
  }
  return hyp.hyp_K_ok;
}

struct ComplexRoot {
  std::complex<double> z;
  int which = 1;  // 1 or 2
  double residual = 0.0;
};

// Newton search for complex roots of K1 and K2 from random starts in a box left of lambda0_tilde.
inline std::vector<ComplexRoot> find_complex_roots(const MarketParams& m, const LaborParams& l, int starts,
                                                   std::uint64_t seed) {
  const double sk = l.sigma_y.dot(market_price_of_risk(m));
  const double c[2] = {l.epsilon + l.mu_y - sk, l.mu_y};
  const SpectralReport rep = find_real_roots(m, l);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> re(rep.lambda0_tilde - 30.0, rep.lambda0_tilde + 2.0);
  std::uniform_real_distribution<double> im(-40.0, 40.0);
  std::vector<ComplexRoot> out;
  for (int s = 0; s < starts; ++s) {
    const int which = s % 2;
    std::complex<double> z(re(rng), im(rng));
    for (int it = 0; it < 100; ++it) {
      const std::complex<double> f = z - c[which] - discounted_moment(l.kernel, z);
      const std::complex<double> df = 1.0 - discounted_first_moment(l.kernel, z);
      if (std::abs(df) == 0.0 || !std::isfinite(std::abs(f))) break;
      std::complex<double> stepv = f / df;
      if (std::abs(stepv) > 5.0) stepv *= 5.0 / std::abs(stepv);
      z -= stepv;
      if (std::abs(stepv) < 1e-14 * std::max(1.0, std::abs(z))) break;
    }
    const double res = std::abs(z - c[which] - discounted_moment(l.kernel, z));
    if (std::isfinite(res) && res < 1e-8) out.push_back({z, which + 1, res});
  }
  return out;
}

}  // namespace mfmerton
