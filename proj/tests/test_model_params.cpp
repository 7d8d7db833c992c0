#include <gtest/gtest.h>

#include <random>

#include "mfmerton/model_params.hpp"
#include "mfmerton/verify.hpp"
#include "test_helpers.hpp"

using namespace mfmerton;
using namespace testing_support;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Internal;
}

}  // namespace

TEST(SolveChecked, SolvesWellConditionedSystem) {
  Eigen::MatrixXd a(2, 2);
  a << 2.0, 1.0, 1.0, 3.0;
  Eigen::VectorXd b(2);
  b << 1.0, 2.0;
  const Eigen::VectorXd x = solve_checked(a, b);
  EXPECT_NEAR((a * x - b).norm(), 0.0, 1e-15);
}

TEST(SolveChecked, RejectsSingularMatrix) {
  Eigen::MatrixXd a(2, 2);
  a << 1.0, 2.0, 2.0, 4.0;
  EXPECT_EQ(kind_of([&] { solve_checked(a, Eigen::VectorXd::Ones(2)); }), ErrorKind::SingularSigma);
}

TEST(MarketParams, MarketPriceOfRisk) {
  const MarketParams m = reference_market();
  const Eigen::VectorXd k = market_price_of_risk(m);
  EXPECT_NEAR(k[0], 0.3, 1e-15);
  EXPECT_NEAR(k[1], 0.2, 1e-15);
}

TEST(MarketParams, ValidationCatchesBadValues) {
  MarketParams m = reference_market();
  m.delta = 0.0;
  EXPECT_EQ(kind_of([&] { m.validate(); }), ErrorKind::InvalidArgument);
  m = reference_market();
  m.gamma = 1.0;
  EXPECT_EQ(kind_of([&] { m.validate(); }), ErrorKind::InvalidArgument);
  m = reference_market();
  m.sigma(0, 0) = 0.0;
  m.sigma(0, 1) = 0.0;
  EXPECT_EQ(kind_of([&] { m.validate(); }), ErrorKind::SingularSigma);
  m = reference_market();
  m.mu.resize(3);
  EXPECT_EQ(kind_of([&] { m.validate(); }), ErrorKind::InvalidArgument);
}

TEST(LaborParams, ValidationCatchesBadValues) {
  LaborParams l = reference_labor();
  EXPECT_NO_THROW(l.validate(2));
  EXPECT_THROW(l.validate(3), Error);
  l.x0 = 0.0;
  EXPECT_THROW(l.validate(2), Error);
  l = reference_labor();
  l.x1 = InitialPath::constant(-1.0);
  EXPECT_THROW(l.validate(2), Error);
  l = reference_labor();
  l.kernel = KernelSpec::constant(1.0, 0.1);
  EXPECT_THROW(l.validate(2), Error);
}

TEST(InitialPath, CellAverages) {
  const TimeMesh mesh = TimeMesh::with_cells(1.0, 4);
  const auto c = InitialPath::constant(2.0).cell_averages(mesh);
  for (double v : c) EXPECT_EQ(v, 2.0);
  const auto e = InitialPath::exponential(1.0, 1.0).cell_averages(mesh);
  // Average of e^s over [-1, -0.75]
  EXPECT_NEAR(e[0], (std::exp(-0.75) - std::exp(-1.0)) / 0.25, 1e-14);
  const auto s = InitialPath::samples({1.0, 3.0}).cell_averages(mesh);
  EXPECT_EQ(s, (std::vector<double>{1.0, 1.0, 3.0, 3.0}));
  EXPECT_EQ(kind_of([&] { InitialPath::samples({1.0, 2.0, 3.0}).cell_averages(mesh); }), ErrorKind::MeshMismatch);
}

TEST(Hypotheses, ReferenceConfigurationIsFeasible) {
  const HypothesisReport h = check_hypotheses(reference_market(), reference_labor());
  EXPECT_TRUE(h.ok());
  EXPECT_EQ(h.hyp_K_branch, HypKBranch::NegativeSpread);
  EXPECT_NEAR(h.spread, -0.14, 1e-15);
  // margin of the active branch is Ktilde_2(r+delta)
  EXPECT_DOUBLE_EQ(h.hyp_K_margin, h.K2_tilde);
  EXPECT_NEAR(h.hyp_gamma_margin, 0.42, 1e-14);
}

TEST(Hypotheses, IncomeDriftAtDiscountViolatesSecondBranch) {
  // mu_y = r + delta, phi = 0, eps = 0, sigma_y = 0: the margin is exactly zero.
  const MarketParams m = one_asset_market(0.03, 0.08, 0.2, 0.1, 0.2, 0.5);
  const LaborParams l = one_asset_labor(0.0, 0.13, 0.0, 1.0, KernelSpec::zero(1.0));
  const HypothesisReport h = check_hypotheses(m, l);
  EXPECT_FALSE(h.hyp_K_ok);
  EXPECT_EQ(h.hyp_K_branch, HypKBranch::NonNegativeSpread);
  EXPECT_NEAR(h.hyp_K_margin, 0.0, 1e-15);
  EXPECT_NE(h.failure().find("eps-sigma_y.kappa>=0"), std::string::npos);
}

TEST(Hypotheses, DiscountHypothesisFailsForSmallRho) {
  const MarketParams m = one_asset_market(0.03, 0.15, 0.2, 0.01, 0.001, 0.3);
  const LaborParams l = one_asset_labor(0.0, 0.0, 0.0, 1.0, KernelSpec::zero(1.0));
  const HypothesisReport h = check_hypotheses(m, l);
  EXPECT_TRUE(h.hyp_K_ok);
  EXPECT_FALSE(h.hyp_gamma_ok);
  EXPECT_LT(h.hyp_gamma_margin, 0.0);
}

TEST(Hypotheses, GammaAboveOneMarginIsPositiveForPositiveDiscount) {
  // For gamma > 1 the second term changes sign, so the margin exceeds rho + delta.
  const MarketParams m = one_asset_market(0.03, 0.15, 0.2, 0.01, 0.001, 2.0);
  const LaborParams l = one_asset_labor(0.0, 0.0, 0.0, 1.0, KernelSpec::zero(1.0));
  const HypothesisReport h = check_hypotheses(m, l);
  EXPECT_TRUE(h.hyp_gamma_ok);
  EXPECT_GT(h.hyp_gamma_margin, m.rho + m.delta);
}

TEST(Hypotheses, MarginMatchesBindingInequalityOverRandomDraws) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    const ParamDraw p = sample_params(rng);
    const HypothesisReport h = check_hypotheses(p.market, p.labor);
    EXPECT_NEAR(h.hyp_K_margin, std::min(h.K1_tilde, h.K2_tilde), 1e-14);
    EXPECT_NEAR(h.K2_tilde - h.K1_tilde, h.spread, 1e-14);
  }
}
