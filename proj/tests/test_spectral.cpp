#include <gtest/gtest.h>

#include <random>

#include "mfmerton/spectral.hpp"
#include "mfmerton/verify.hpp"
#include "test_helpers.hpp"

using namespace mfmerton;
using namespace testing_support;

namespace {

// Independent root oracle: coarse sign scan followed by bisection on the scan cell.
std::vector<double> scan_and_bisect(const std::function<double(double)>& f, double lo, double hi, double step) {
  std::vector<double> roots;
  double a = lo, fa = f(lo);
  for (double b = lo + step; b <= hi; b += step) {
    const double fb = f(b);
    if ((fa < 0.0) != (fb < 0.0)) {
      double x0 = a, x1 = b;
      for (int i = 0; i < 200; ++i) {
        const double m = 0.5 * (x0 + x1);
        if ((f(m) < 0.0) == (fa < 0.0)) x0 = m; else x1 = m;
      }
      roots.push_back(0.5 * (x0 + x1));
    }
    a = b;
    fa = fb;
  }
  return roots;
}

}  // namespace

TEST(Spectral, ZeroKernelRootsAreClosedForm) {
  const MarketParams m = one_asset_market(0.03, 0.09, 0.2, 0.2, 0.2, 0.5);  // kappa = 0.3
  const LaborParams l = one_asset_labor(-0.05, 0.02, 0.1, 1.0, KernelSpec::zero(1.0));
  const SpectralReport s = find_real_roots(m, l);
  EXPECT_NEAR(s.xi1, -0.05 + 0.02 - 0.03, 1e-15);
  EXPECT_NEAR(s.xi2, 0.02, 1e-15);
  EXPECT_EQ(s.xi0, s.xi2);  // spread -0.08 < 0
  EXPECT_EQ(s.lambda0_tilde, 0.02);
  EXPECT_TRUE(s.dominated);
}

TEST(Spectral, RootsMatchScanOracle) {
  const MarketParams m = reference_market();
  std::vector<LaborParams> cases;
  LaborParams l = reference_labor();
  cases.push_back(l);
  l.kernel = KernelSpec::constant(0.5, 0.3);
  cases.push_back(l);
  l.kernel = KernelSpec::exponential(0.5, -0.4, 2.0);
  cases.push_back(l);
  l.epsilon = 0.3;
  cases.push_back(l);
  for (const LaborParams& c : cases) {
    const SpectralReport s = find_real_roots(m, c);
    const double sk = c.sigma_y.dot(market_price_of_risk(m));
    auto k1 = [&](double x) { return x - (c.epsilon + c.mu_y - sk) - discounted_abs_moment(c.kernel, x); };
    auto k2 = [&](double x) { return x - c.mu_y - discounted_abs_moment(c.kernel, x); };
    const auto r1 = scan_and_bisect(k1, -5.0, 5.0, 1e-3);
    const auto r2 = scan_and_bisect(k2, -5.0, 5.0, 1e-3);
    ASSERT_EQ(r1.size(), 1u);
    ASSERT_EQ(r2.size(), 1u);
    EXPECT_NEAR(s.xi1, r1[0], 1e-12);
    EXPECT_NEAR(s.xi2, r2[0], 1e-12);
    EXPECT_LT(std::abs(eval_K_tilde(m, c, s.xi1).K1), 1e-10);
    EXPECT_LT(std::abs(eval_K_tilde(m, c, s.xi2).K2), 1e-10);
    EXPECT_EQ(s.lambda0_tilde, std::max(s.xi1, s.xi2));
    EXPECT_EQ(s.xi0, s.spread < 0.0 ? s.xi2 : s.xi1);
  }
}

TEST(Spectral, GridScanHelperLocatesRoots) {
  const auto roots = grid_scan_roots([](double x) { return x - 0.123456; }, -1.0, 1.0, 1e-6);
  ASSERT_EQ(roots.size(), 1u);
  EXPECT_NEAR(roots[0], 0.123456, 1e-6);
}

TEST(Spectral, EvaluatorsUseSignedKernel) {
  const MarketParams m = reference_market();
  const LaborParams l = reference_labor();
  const SpectralReport s = find_real_roots(m, l);
  const KPair k = eval_K(m, l, 0.7);
  EXPECT_DOUBLE_EQ(s.K1_at(0.7), k.K1);
  EXPECT_DOUBLE_EQ(s.K2_at(0.7), k.K2);
  EXPECT_NEAR(k.K2 - k.K1, l.epsilon - l.sigma_y.dot(market_price_of_risk(m)), 1e-15);
}

TEST(Spectral, HypothesisImpliesDominationOverRandomDraws) {
  std::mt19937_64 rng(2024);
  int feasible = 0;
  for (int i = 0; i < 1000; ++i) {
    const ParamDraw p = sample_params(rng);
    const HypothesisReport h = check_hypotheses(p.market, p.labor);
    const SpectralReport s = find_real_roots(p.market, p.labor);
    if (h.hyp_K_ok) {
      ++feasible;
      EXPECT_TRUE(s.dominated) << "draw " << i;
      EXPECT_TRUE(certify_domination(p.market, p.labor));
    } else {
      EXPECT_FALSE(certify_domination(p.market, p.labor));
    }
  }
  EXPECT_GT(feasible, 100);
}

TEST(Spectral, ComplexRootsLieLeftOfRealBound) {
  const MarketParams m = reference_market();
  LaborParams l = reference_labor();
  l.kernel = KernelSpec::constant(0.5, 0.8);
  const SpectralReport s = find_real_roots(m, l);
  const auto roots = find_complex_roots(m, l, 200, 3);
  ASSERT_FALSE(roots.empty());
  int nonreal = 0;
  for (const auto& r : roots) {
    EXPECT_LE(r.z.real(), s.lambda0_tilde + 1e-9);
    EXPECT_LT(r.residual, 1e-8);
    if (std::abs(r.z.imag()) > 1e-6) ++nonreal;
  }
  EXPECT_GT(nonreal, 0);
}

TEST(Spectral, BracketExpansionHandlesDistantRoots) {
  const MarketParams m = reference_market();
  LaborParams l = reference_labor();
  l.mu_y = 40.0;
  const SpectralReport s = find_real_roots(m, l);
  EXPECT_LT(std::abs(eval_K_tilde(m, l, s.xi2).K2), 1e-10);
  EXPECT_FALSE(s.dominated);
}

TEST(Spectral, ComplexMomentVanishesAtFrozenRoot) {
  // Root of K1 for the constant kernel c = 0.8 on d = 0.5, computed with an arbitrary-precision solver.
  const MarketParams m = reference_market();
  LaborParams l = reference_labor();
  l.kernel = KernelSpec::constant(0.5, 0.8);
  const double c1 = l.epsilon + l.mu_y - l.sigma_y.dot(market_price_of_risk(m));
  const std::complex<double> z(-11.0698807822942, 9.04218937585437);
  EXPECT_LT(std::abs(z - c1 - discounted_moment(l.kernel, z)), 1e-11);
  const SpectralReport s = find_real_roots(m, l);
  EXPECT_NEAR(s.xi1, 0.246346407885337, 1e-12);
}
