#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "mfmerton/kernel.hpp"

using namespace mfmerton;

namespace {

// Composite Simpson rule on [a, b] with n (even) panels.
double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

// Simpson on [a, b] split at the kernel breakpoints, so jumps of grid kernels sit on panel edges.
double integrate(const std::function<double(double)>& f, const KernelSpec& k, double a, double b, int panels) {
  std::vector<double> cuts = {a};
  const auto m = k.pieces();
  for (std::size_t i = 1; i < m; ++i) {
    const double x = -k.d + k.d * static_cast<double>(i) / static_cast<double>(m);
    if (x > a && x < b) cuts.push_back(x);
  }
  cuts.push_back(b);
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double lo = cuts[i], hi = cuts[i + 1], eps = 1e-13 * (hi - lo);
    s += simpson([&](double x) { return f(std::min(std::max(x, lo + eps), hi - eps)); }, lo, hi, panels);
  }
  return s;
}

std::vector<KernelSpec> sample_kernels(double d) {
  return {KernelSpec::zero(d), KernelSpec::constant(d, 0.3), KernelSpec::exponential(d, -0.2, 1.5),
          KernelSpec::exponential(d, 0.1, -2.0), KernelSpec::grid(d, {0.2, -0.1, 0.15, -0.05, 0.1})};
}

}  // namespace

TEST(TimeMesh, UniformRequiresIntegerRatio) {
  EXPECT_EQ(TimeMesh::uniform(0.5, 0.01).cells(), 50u);
  EXPECT_EQ(TimeMesh::uniform(1.0, 0.1).cells(), 10u);
  try {
    TimeMesh::uniform(0.5, 0.03);
    FAIL() << "expected MeshMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MeshMismatch);
  }
}

TEST(TimeMesh, PointsCoverWindow) {
  const TimeMesh m = TimeMesh::with_cells(2.0, 8);
  EXPECT_DOUBLE_EQ(m.point(0), -2.0);
  EXPECT_DOUBLE_EQ(m.point(4), -1.0);
  EXPECT_EQ(m.point(8), 0.0);
  EXPECT_DOUBLE_EQ(m.step(), 0.25);
}

TEST(KernelSpec, ValidationRejectsBadInput) {
  EXPECT_THROW(KernelSpec::grid(1.0, {}).validate(), Error);
  EXPECT_THROW(KernelSpec::constant(-1.0, 0.1).validate(), Error);
  EXPECT_THROW(KernelSpec::exponential(1.0, NAN, 1.0).validate(), Error);
  EXPECT_NO_THROW(KernelSpec::grid(1.0, {1.0, -1.0}).validate());
}

TEST(KernelSpec, EvaluationMatchesShape) {
  const KernelSpec g = KernelSpec::grid(1.0, {1.0, -2.0, 3.0, -4.0});
  EXPECT_DOUBLE_EQ(g(-0.9), 1.0);
  EXPECT_DOUBLE_EQ(g(-0.6), -2.0);
  EXPECT_DOUBLE_EQ(g(-0.3), 3.0);
  EXPECT_DOUBLE_EQ(g(-0.1), -4.0);
  const KernelSpec e = KernelSpec::exponential(1.0, 0.5, 2.0);
  EXPECT_NEAR(e(-0.5), 0.5 * std::exp(-1.0), 1e-15);
  EXPECT_EQ(KernelSpec::zero(1.0)(-0.5), 0.0);
}

TEST(KernelMoments, DiscountedMomentMatchesQuadrature) {
  for (double d : {0.5, 2.0}) {
    for (const KernelSpec& k : sample_kernels(d)) {
      for (double lam : {-1.0, 0.0, 0.43, 3.0}) {
        const double oracle = integrate([&](double s) { return std::exp(lam * s) * k(s); }, k, -d, 0.0, 2000);
        const double abs_oracle =
            integrate([&](double s) { return std::exp(lam * s) * std::abs(k(s)); }, k, -d, 0.0, 2000);
        EXPECT_NEAR(discounted_moment(k, lam), oracle, 1e-12 * std::max(1.0, std::abs(oracle))) << k.variant_name() << " lam " << lam;
        EXPECT_NEAR(discounted_abs_moment(k, lam), abs_oracle, 1e-12 * std::max(1.0, abs_oracle)) << k.variant_name() << " lam " << lam;
      }
    }
  }
}

TEST(KernelMoments, AbsMomentDominatesMoment) {
  for (const KernelSpec& k : sample_kernels(1.0)) {
    for (double lam : {-2.0, 0.0, 1.0}) {
      EXPECT_GE(discounted_abs_moment(k, lam) + 1e-15, std::abs(discounted_moment(k, lam)));
    }
  }
}

TEST(KernelMoments, ComplexMomentMatchesQuadrature) {
  const double d = 1.0;
  for (const KernelSpec& k : sample_kernels(d)) {
    for (std::complex<double> z : {std::complex<double>(0.3, 2.0), std::complex<double>(-1.0, 7.5)}) {
      const double re = integrate([&](double s) { return (std::exp(z * s) * k(s)).real(); }, k, -d, 0.0, 4000);
      const double im = integrate([&](double s) { return (std::exp(z * s) * k(s)).imag(); }, k, -d, 0.0, 4000);
      const std::complex<double> got = discounted_moment(k, z);
      EXPECT_NEAR(got.real(), re, 1e-10) << k.variant_name();
      EXPECT_NEAR(got.imag(), im, 1e-10) << k.variant_name();
      const double fre = integrate([&](double s) { return (s * std::exp(z * s) * k(s)).real(); }, k, -d, 0.0, 4000);
      EXPECT_NEAR(discounted_first_moment(k, z).real(), fre, 1e-10) << k.variant_name();
    }
  }
}

TEST(KernelMoments, RealAndComplexAgreeOnRealAxis) {
  for (const KernelSpec& k : sample_kernels(0.5)) {
    const auto z = discounted_moment(k, std::complex<double>(0.7, 0.0));
    EXPECT_NEAR(z.real(), discounted_moment(k, 0.7), 1e-13);
    EXPECT_NEAR(z.imag(), 0.0, 1e-15);
  }
}

TEST(KernelCells, CellIntegralsSumToTotal) {
  for (const KernelSpec& k : sample_kernels(0.5)) {
    for (std::size_t cells : {5u, 7u, 50u}) {
      const TimeMesh mesh = TimeMesh::with_cells(0.5, cells);
      const std::vector<double> v = cell_integrals(k, mesh);
      ASSERT_EQ(v.size(), cells);
      double total = 0.0;
      for (double x : v) total += x;
      EXPECT_NEAR(total, discounted_moment(k, 0.0), 1e-14) << k.variant_name() << " cells " << cells;
    }
  }
}

TEST(KernelCells, AlignedGridIsExact) {
  const KernelSpec k = KernelSpec::grid(1.0, {0.5, -0.25});
  const TimeMesh mesh = TimeMesh::with_cells(1.0, 4);
  EXPECT_TRUE(aligned_with(k, mesh));
  EXPECT_FALSE(aligned_with(k, TimeMesh::with_cells(1.0, 3)));
  const std::vector<double> v = cell_integrals(k, mesh);
  EXPECT_EQ(v[0], 0.5 * 0.25);
  EXPECT_EQ(v[3], -0.25 * 0.25);
}

TEST(KernelCells, MisalignedGridSplitsCells) {
  const KernelSpec k = KernelSpec::grid(1.0, {1.0, -1.0});
  const std::vector<double> v = cell_integrals(k, TimeMesh::with_cells(1.0, 3));
  EXPECT_NEAR(v[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(v[1], 0.0, 1e-15);
  EXPECT_NEAR(v[2], -1.0 / 3.0, 1e-15);
}

TEST(KernelConvolution, GMatchesQuadrature) {
  const double d = 0.5, lam = 0.43;
  for (const KernelSpec& k : sample_kernels(d)) {
    const TimeMesh mesh = TimeMesh::with_cells(d, 50);
    const std::vector<double> G = convolution_G(k, lam, mesh);
    ASSERT_EQ(G.size(), 51u);
    EXPECT_EQ(G.front(), 0.0);
    EXPECT_NEAR(G.back(), discounted_moment(k, lam), 1e-14) << k.variant_name();
    for (std::size_t j : {10u, 25u, 37u}) {
      const double s = mesh.point(j);
      // G(s) = int_{-d}^{s} e^{-lam (s - tau)} phi(tau) dtau
      const double oracle = integrate([&](double t) { return std::exp(-lam * (s - t)) * k(t); }, k, -d, s, 2000);
      EXPECT_NEAR(G[j], oracle, 1e-12) << k.variant_name() << " j " << j;
    }
  }
}

TEST(KernelConvolution, DelayMismatchRejected) {
  EXPECT_THROW(convolution_G(KernelSpec::constant(1.0, 0.1), 0.1, TimeMesh::with_cells(0.5, 10)), Error);
}
