#include "essvi_mm/surface.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "essvi_mm/errors.hpp"
#include "oracles.hpp"

namespace essvi_mm {
namespace {

const SurfaceCaps kCaps;

TEST(Reparam, NegativeInfinityPsiGivesFlatSlice) {
  const EssviSlice s = reparam({std::log(0.04), 0.0, -1e6}, kCaps);
  EXPECT_NEAR(s.theta, 0.04, 1e-15);
  EXPECT_EQ(s.rho, 0.0);
  EXPECT_EQ(s.psi, 0.0);
  EXPECT_EQ(s.phi, 0.0);
}

TEST(Reparam, PsiMaxAtZeroRho) { EXPECT_DOUBLE_EQ(psi_max(0.0, kCaps.eps_psi), 2.0 - 1e-3); }

TEST(Reparam, GenericPoint) {
  SurfaceCaps caps;
  caps.tau_max = 10.0;  // keep the cap out of the way
  const EssviSlice s = reparam({std::log(0.09), std::atanh(-0.4), 0.0}, caps);
  EXPECT_NEAR(s.theta, 0.09, 1e-15);
  EXPECT_NEAR(s.rho, -0.4, 1e-15);
  EXPECT_NEAR(s.psi, (2.0 / 1.4 - 1e-3) * 0.5, 1e-15);
  EXPECT_NEAR(s.phi, s.psi / 0.3, 1e-15);
}

TEST(Reparam, AlwaysAdmissibleIncludingExtremes) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  const double extremes[] = {-1e6, -50.0, 0.0, 50.0, 1e6};
  for (double a : extremes) {
    for (double b : extremes) {
      for (double c : extremes) {
        const EssviSlice s = reparam({a, b, c}, kCaps);
        EXPECT_TRUE(is_admissible(s, kCaps)) << a << " " << b << " " << c;
      }
    }
  }
  for (int i = 0; i < 10000; ++i) {
    const EssviSlice s = reparam({u(rng), u(rng), u(rng)}, kCaps);
    ASSERT_TRUE(is_admissible(s, kCaps));
    ASSERT_LE(s.psi * std::sqrt(s.theta), kCaps.tau_max);
  }
}

TEST(WingCap, InactiveCapLeavesSliceUnchanged) {
  const EssviSlice s = make_slice(0.25, -0.2, 1.0);  // psi sqrt(theta) = 0.5
  EXPECT_EQ(apply_wing_cap(s, kCaps), s);
}

TEST(WingCap, ProjectsOntoTheCap) {
  const EssviSlice s = make_slice(1.0, 0.0, 2.0);
  const EssviSlice c = apply_wing_cap(s, kCaps);
  EXPECT_NEAR(c.psi, 1.0, 1e-15);
  EXPECT_LE(c.psi * std::sqrt(c.theta), 1.0);
  EXPECT_DOUBLE_EQ(c.phi, c.psi);
}

TEST(WingCap, BoundaryIsFixedPoint) {
  const EssviSlice s = make_slice(1.0, 0.1, kCaps.tau_max);
  EXPECT_EQ(apply_wing_cap(s, kCaps), s);
}

TEST(TotalVariance, AtmEqualsTheta) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int i = 0; i < 200; ++i) {
    const EssviSlice s = reparam({n(rng), n(rng), n(rng)}, kCaps);
    EXPECT_EQ(essvi_total_variance(s, 0.0), s.theta);
  }
}

TEST(TotalVariance, ReferenceValue) {
  const EssviSlice s{0.04, 0.0, 0.4, 2.0};
  const double ref = static_cast<double>(oracle::essvi_w(0.04L, 0.0L, 2.0L, 0.3L));
  EXPECT_NEAR(essvi_total_variance(s, 0.3), ref, 1e-16);
  EXPECT_NEAR(essvi_total_variance(s, 0.3), 0.0433238, 1e-7);
}

TEST(TotalVariance, SymmetricWhenRhoIsZero) {
  const EssviSlice s = make_slice(0.07, 0.0, 0.9);
  for (double k = 0.01; k < 3.0; k += 0.07) {
    EXPECT_NEAR(essvi_total_variance(s, k), essvi_total_variance(s, -k), 1e-14);
  }
}

TEST(ImpliedVol, Definition) {
  EXPECT_DOUBLE_EQ(implied_vol(0.04, 1.0, kCaps), 0.2);
  EXPECT_EQ(implied_vol(0.0, 0.5, kCaps), kCaps.sigma_min);
  EXPECT_NEAR(implied_vol(0.0433238, 0.25, kCaps), 0.41629, 1e-5);
  EXPECT_DOUBLE_EQ(implied_vol(0.01, 0.0, kCaps), std::sqrt(0.01 / kCaps.t_min));
}

TEST(Deform, IdentityLeavesSurfaceUnchanged) {
  const EssviSlice s = make_slice(0.05, -0.3, 0.6);
  EXPECT_EQ(deform_slice(s, 1.0, 0.0, kCaps), s);
}

TEST(Deform, RhoShiftIsClamped) {
  const EssviSlice s = make_slice(0.05, 0.9, 0.3);
  const EssviSlice d = deform_slice(s, 1.0, 0.2, kCaps);
  EXPECT_DOUBLE_EQ(d.rho, 1.0 - kCaps.eps_rho);
  EXPECT_LT(std::abs(d.rho), 1.0);
  EXPECT_TRUE(is_admissible(d, kCaps));
}

TEST(Deform, PsiScaleMultiplies) {
  const EssviSlice s = make_slice(0.05, 0.0, 0.5);
  const EssviSlice d = deform_slice(s, 1.2, 0.0, kCaps);
  EXPECT_NEAR(d.psi, 0.6, 1e-15);
  EXPECT_EQ(d.theta, s.theta);
}

TEST(Deform, SurfaceValidatesGrid) {
  EssviSurface bad{{0.1, 0.1}, {make_slice(0.01, 0.0, 0.1), make_slice(0.02, 0.0, 0.1)}};
  EXPECT_THROW(bad.validate(), InvalidGrid);
  EssviSurface ragged{{0.1, 0.2}, {make_slice(0.01, 0.0, 0.1)}};
  EXPECT_THROW(ragged.validate(), InvalidGrid);
}

TEST(EssviPartials, AtmValues) {
  const EssviSlice s = make_slice(0.04, 0.3, 0.3);
  const EssviPartials p = essvi_partials(s, 0.0);
  EXPECT_EQ(p.dw_drho, 0.0);
  EXPECT_EQ(p.dw_dphi, 0.0);
  EXPECT_EQ(p.dw_dtheta, 1.0);
}

void expect_partials_match_fd(double theta, double rho, double phi, double k) {
  using oracle::Ld;
  const EssviPartials p = essvi_partials(EssviSlice{theta, rho, phi * std::sqrt(theta), phi}, k);
  const auto h = [](double x) { return Ld(1e-6) * std::max(1.0, std::abs(x)); };
  const Ld fd_theta = oracle::central([&](Ld x) { return oracle::essvi_w(x, rho, phi, k); }, theta, h(theta));
  const Ld fd_rho = oracle::central([&](Ld x) { return oracle::essvi_w(theta, x, phi, k); }, rho, h(rho));
  const Ld fd_phi = oracle::central([&](Ld x) { return oracle::essvi_w(theta, rho, x, k); }, phi, h(phi));
  const auto close = [](double a, Ld fd) {
    return std::abs(a - static_cast<double>(fd)) <= 1e-6 * std::abs(a) + 1e-13;
  };
  EXPECT_TRUE(close(p.dw_dtheta, fd_theta)) << p.dw_dtheta << " vs " << static_cast<double>(fd_theta);
  EXPECT_TRUE(close(p.dw_drho, fd_rho)) << p.dw_drho << " vs " << static_cast<double>(fd_rho);
  EXPECT_TRUE(close(p.dw_dphi, fd_phi)) << p.dw_dphi << " vs " << static_cast<double>(fd_phi);
}

TEST(EssviPartials, ReferencePointMatchesFd) { expect_partials_match_fd(0.04, 0.3, 1.5, 0.2); }

TEST(EssviPartials, RandomPointsMatchFd) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lt(std::log(1e-3), std::log(0.5));
  std::uniform_real_distribution<double> r(-0.95, 0.95);
  std::uniform_real_distribution<double> frac(0.0, 0.99);
  std::uniform_real_distribution<double> kk(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const double theta = std::exp(lt(rng));
    const double rho = r(rng);
    const double psi = std::min(frac(rng) * psi_max(rho, 1e-3), 0.99 / std::sqrt(theta));
    expect_partials_match_fd(theta, rho, psi / std::sqrt(theta), kk(rng));
  }
}

TEST(ActionPartials, VanishAtTheMoney) {
  const EssviSlice s = make_slice(0.04, -0.3, 0.5);
  const ActionPartials p = action_partials(s, 1.1, 0.05, 0.0, kCaps);
  EXPECT_EQ(p.dw_drho_shift, 0.0);
  EXPECT_EQ(p.dw_dpsi_scale, 0.0);
}

TEST(ActionPartials, IdentityDeformationMatchesSlicePartials) {
  const EssviSlice s = make_slice(0.04, -0.3, 0.5);
  const ActionPartials a = action_partials(s, 1.0, 0.0, 0.15, kCaps);
  const EssviPartials p = essvi_partials(s, 0.15);
  EXPECT_DOUBLE_EQ(a.dw_drho_shift, p.dw_drho);
  EXPECT_DOUBLE_EQ(a.dw_dpsi_scale, p.dw_dphi * s.phi);
}

TEST(ActionPartials, MatchFdThroughDeformation) {
  using oracle::Ld;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> kk(-0.35, 0.35);
  std::uniform_real_distribution<double> sc(0.6, 1.4);
  std::uniform_real_distribution<double> sh(-0.15, 0.15);
  const EssviSlice s = make_slice(0.003, -0.4, 0.4);
  for (int i = 0; i < 100; ++i) {
    const double k = kk(rng);
    const double scale = sc(rng);
    const double shift = sh(rng);
    const ActionPartials a = action_partials(s, scale, shift, k, kCaps);
    const auto w_of = [&](Ld ps, Ld rs) {
      const BasicEssviSlice<Ld> base = make_slice<Ld>(s.theta, s.rho, s.psi);
      return essvi_total_variance<Ld>(deform_slice<Ld>(base, ps, rs, kCaps), Ld(k));
    };
    const Ld fd_r = oracle::central([&](Ld x) { return w_of(scale, x); }, shift, 1e-6L);
    const Ld fd_p = oracle::central([&](Ld x) { return w_of(x, shift); }, scale, 1e-6L * scale);
    EXPECT_NEAR(a.dw_drho_shift, static_cast<double>(fd_r), 1e-6 * std::abs(a.dw_drho_shift) + 1e-14);
    EXPECT_NEAR(a.dw_dpsi_scale, static_cast<double>(fd_p), 1e-6 * std::abs(a.dw_dpsi_scale) + 1e-14);
  }
}

TEST(ActionPartials, ThrowsWhenClampBinds) {
  const EssviSlice s = make_slice(0.05, 0.9, 0.3);
  EXPECT_THROW(action_partials(s, 1.0, 0.2, 0.1, kCaps), ClampActive);
  const EssviSlice near_cap = make_slice(1.0, 0.0, 0.9);
  EXPECT_THROW(action_partials(near_cap, 1.5, 0.0, 0.1, kCaps), ClampActive);
}

TEST(WingBound, SlopeStaysBelowCap) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> lt(std::log(1e-3), 0.0);
  std::uniform_real_distribution<double> r(-3.0, 3.0);
  std::uniform_real_distribution<double> p(-4.0, 8.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const EssviSlice s = reparam({lt(rng), r(rng), p(rng)}, kCaps);
    for (double k : {-50.0, 50.0}) worst = std::max(worst, essvi_total_variance(s, k) / 50.0);
  }
  EXPECT_LE(worst, kCaps.tau_max + 0.05);
}

}  // namespace
}  // namespace essvi_mm
