#include "essvi_mm/env.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "essvi_mm/errors.hpp"
#include "oracles.hpp"

namespace essvi_mm {
namespace {

EnvConfig cfg() { return EnvConfig::defaults(); }

MarketState fresh(const EnvConfig& c) {
  std::mt19937_64 rng(0);
  return reset(c, rng);
}

TEST(EnvConfig, DefaultsAreValid) {
  const EnvConfig c = cfg();
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.maturities.size(), 6u);
  EXPECT_DOUBLE_EQ(c.maturities.front(), 7.0 / 252.0);
  ASSERT_EQ(c.k_grid.size(), 21u);
  EXPECT_EQ(c.k_grid[10], 0.0);
  EXPECT_DOUBLE_EQ(c.k_grid.front(), -0.35);
  EXPECT_DOUBLE_EQ(c.k_grid.back(), 0.35);
  EXPECT_EQ(c.steps_per_episode, 780);
}

TEST(EnvConfig, ValidationNamesTheField) {
  EnvConfig c = cfg();
  c.filter_rate = 0.0;
  try {
    c.validate();
    FAIL();
  } catch (const InvalidConfig& e) {
    EXPECT_EQ(e.key(), "filter_rate");
  }
  c = cfg();
  c.maturities = {0.1, 0.05};
  EXPECT_THROW(c.validate(), InvalidConfig);
}

TEST(Reset, DeterministicAndAdmissible) {
  const EnvConfig c = cfg();
  std::mt19937_64 a(5);
  std::mt19937_64 b(5);
  const MarketState x = reset(c, a);
  const MarketState y = reset(c, b);
  EXPECT_EQ(x.spot, y.spot);
  EXPECT_EQ(x.latent.slices, y.latent.slices);
  EXPECT_EQ(x.t, 0);
  EXPECT_EQ(x.spot, 100.0);
  EXPECT_EQ(x.var, c.heston.v0);
  EXPECT_EQ(x.prev_action, anchor_action());
  EXPECT_EQ(x.estimate.slices, x.latent.slices);
  for (std::size_t m = 0; m < x.latent.size(); ++m) {
    const EssviSlice& s = x.latent.slices[m];
    EXPECT_TRUE(is_admissible(s, c.caps));
    const double t = c.maturities[m];
    EXPECT_NEAR(s.theta, c.heston.v0 * t * (1 + 0.1 * t / c.maturities.back()), 1e-15);
    EXPECT_NEAR(s.rho, -0.4, 1e-15);
    EXPECT_NEAR(s.psi, 0.3 * psi_max(-0.4, c.caps.eps_psi), 1e-15);
    if (m > 0) EXPECT_GT(s.theta, x.latent.slices[m - 1].theta);
  }
}

TEST(HestonStep, DegenerateVolOfVol) {
  EnvConfig c = cfg();
  c.heston.xi = 0.0;
  std::mt19937_64 rng(3);
  std::mt19937_64 shadow(3);
  std::normal_distribution<double> n;
  double s = 100.0;
  double v = c.heston.v_bar;
  for (int i = 0; i < 100; ++i) {
    const auto [s2, v2] = heston_step(s, v, c, rng);
    EXPECT_EQ(v2, c.heston.v_bar);
    const double z_v = n(shadow);
    const double z_p = n(shadow);
    const double z_s = c.heston.rho_sv * z_v + std::sqrt(1 - c.heston.rho_sv * c.heston.rho_sv) * z_p;
    const double gbm = s * std::exp(-0.5 * v * c.dt + std::sqrt(v * c.dt) * z_s);
    EXPECT_NEAR(s2, gbm, 1e-12 * gbm);
    s = s2;
    v = v2;
  }
}

TEST(HestonStep, VarianceStaysNonNegative) {
  EnvConfig c = cfg();
  c.heston.xi = 3.0;  // strong Feller violation
  c.heston.v0 = 1e-4;
  c.dt = 1.0 / 252.0;
  std::mt19937_64 rng(4);
  double s = 100.0;
  double v = c.heston.v0;
  for (int i = 0; i < 1000000; ++i) {
    std::tie(s, v) = heston_step(s, v, c, rng);
    ASSERT_GE(v, 0.0);
    ASSERT_GT(s, 0.0);
  }
}

TEST(HestonStep, LogReturnVarianceCorrelation) {
  const EnvConfig c = cfg();
  std::mt19937_64 rng(6);
  const int n = 100000;
  std::vector<double> dx(n);
  std::vector<double> dv(n);
  for (int i = 0; i < n; ++i) {
    const auto [s2, v2] = heston_step(100.0, c.heston.v_bar, c, rng);
    dx[static_cast<std::size_t>(i)] = std::log(s2 / 100.0);
    dv[static_cast<std::size_t>(i)] = v2 - c.heston.v_bar;
  }
  const auto mean = [](const std::vector<double>& x) {
    double a = 0;
    for (double v : x) a += v;
    return a / static_cast<double>(x.size());
  };
  const double mx = mean(dx);
  const double mv = mean(dv);
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    const double a = dx[static_cast<std::size_t>(i)] - mx;
    const double b = dv[static_cast<std::size_t>(i)] - mv;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  EXPECT_NEAR(sxy / std::sqrt(sxx * syy), -0.5, 0.05);
}

TEST(QuoteGrid, ZeroSpreadCollapsesQuotes) {
  const EnvConfig c = cfg();
  const MarketState s = fresh(c);
  Action a = anchor_action();
  a.alpha = 0.0;
  const QuoteGrid q = quote_grid(s, a, c);
  EXPECT_EQ(q.ask, q.mid);
  EXPECT_EQ(q.bid, q.mid);
}

TEST(QuoteGrid, IdentityDeformationPricesTheEstimate) {
  const EnvConfig c = cfg();
  const MarketState s = fresh(c);
  const QuoteGrid q = quote_grid(s, anchor_action(), c);
  for (std::size_t m = 0; m < c.maturities.size(); ++m) {
    for (std::size_t j = 0; j < c.k_grid.size(); ++j) {
      const EssviSlice& sl = s.estimate.slices[m];
      const oracle::Ld w = oracle::essvi_w(sl.theta, sl.rho, sl.phi, c.k_grid[j]);
      const oracle::Ld t = c.maturities[m];
      const oracle::Ld ref = oracle::bs_call_closed(100, 100 * std::exp(oracle::Ld(c.k_grid[j])), t,
                                                    std::sqrt(w / t));
      EXPECT_NEAR(q.mid(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(j)),
                  static_cast<double>(ref), 1e-11);
    }
  }
}

TEST(QuoteGrid, SpreadDerivativeMatchesFd) {
  const EnvConfig c = cfg();
  const MarketState s = fresh(c);
  Action a = anchor_action();
  const double h = 1e-7;
  Action up = a;
  up.alpha += h;
  Action dn = a;
  dn.alpha -= h;
  const QuoteGrid q = quote_grid(s, a, c);
  const QuoteGrid qu = quote_grid(s, up, c);
  const QuoteGrid qd = quote_grid(s, dn, c);
  for (Eigen::Index m = 0; m < q.mid.rows(); ++m) {
    const double t = c.maturities[static_cast<std::size_t>(m)];
    for (Eigen::Index j = 0; j < q.mid.cols(); ++j) {
      const double slope = 100.0 * q.vol(m, j) * std::sqrt(t) * c.intensity.s0;
      EXPECT_NEAR((qu.ask(m, j) - qd.ask(m, j)) / (2 * h), slope, 1e-6 * slope);
      if (qd.bid(m, j) > 0.0) {
        EXPECT_NEAR((qu.bid(m, j) - qd.bid(m, j)) / (2 * h), -slope, 1e-6 * slope);
      }
    }
  }
}

TEST(Intensities, Examples) {
  IntensityParams p;
  Eigen::MatrixXd fair(1, 3);
  fair << 5.0, 5.0, 5.0;
  const Eigen::MatrixXd ask = fair;
  const Intensities lam = intensities(ask, fair, fair, {-0.25, 0.0, 0.25}, p);
  EXPECT_DOUBLE_EQ(lam.buy(0, 1), 0.4);
  EXPECT_NEAR(lam.buy(0, 0) / lam.buy(0, 1), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(lam.sell(0, 2) / lam.sell(0, 1), 0.3678794411714423, 1e-15);

  Eigen::MatrixXd far_ask = fair.array() + 1e3;
  Eigen::MatrixXd cheap_ask = fair.array() - 1e3;
  EXPECT_LT(intensities(far_ask, fair, fair, {-0.25, 0.0, 0.25}, p).buy(0, 1), 1e-300);
  EXPECT_DOUBLE_EQ(intensities(cheap_ask, fair, fair, {-0.25, 0.0, 0.25}, p).buy(0, 1), 0.8);
}

TEST(Intensities, RejectShapeMismatch) {
  Eigen::MatrixXd a(2, 2);
  a.setZero();
  Eigen::MatrixXd b(2, 3);
  b.setZero();
  EXPECT_THROW(intensities(a, a, b, {0.0, 0.1, 0.2}, IntensityParams{}), ShapeMismatch);
}

TEST(ExpectedPnl, Examples) {
  Eigen::MatrixXd fair(1, 1), ask(1, 1), bid(1, 1), delta(1, 1);
  fair << 2.0;
  ask << 2.05;
  bid << 1.98;
  delta << 0.6;
  Intensities lam{Eigen::MatrixXd::Constant(1, 1, 0.4), Eigen::MatrixXd::Constant(1, 1, 0.3)};
  const ExpectedPnl e = expected_pnl_and_delta(lam, ask, bid, fair, delta);
  EXPECT_NEAR(e.pnl_quote, 0.026, 1e-15);
  EXPECT_NEAR(e.net_delta, (0.3 - 0.4) * 0.6, 1e-15);

  Intensities sym{Eigen::MatrixXd::Constant(1, 1, 0.5), Eigen::MatrixXd::Constant(1, 1, 0.5)};
  EXPECT_EQ(expected_pnl_and_delta(sym, ask, bid, fair, delta).net_delta, 0.0);
  Intensities none{Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1)};
  const ExpectedPnl z = expected_pnl_and_delta(none, ask, bid, fair, delta);
  EXPECT_EQ(z.pnl_quote, 0.0);
  EXPECT_EQ(z.net_delta, 0.0);
}

TEST(HedgePnl, Examples) {
  EXPECT_EQ(hedge_pnl(0.0, 3.0, 1.0), 0.0);
  EXPECT_EQ(hedge_pnl(1.0, 2.0, 0.5), 1.0);
  EXPECT_LT(hedge_pnl(0.5, -2.0, 0.5), 0.0);
}

TEST(FilterUpdate, Relaxation) {
  const std::vector<RawEssviSlice> latent = {{-3.0, -0.4, 0.2}};
  std::vector<RawEssviSlice> est = {{-2.0, 0.1, -1.0}};
  const auto copy = filter_update(est, latent, 1.0);
  EXPECT_EQ(copy[0].log_theta, latent[0].log_theta);
  EXPECT_EQ(copy[0].rho_raw, latent[0].rho_raw);
  const auto one = filter_update(est, latent, 0.1);
  EXPECT_NEAR(one[0].log_theta - latent[0].log_theta, 0.9 * (est[0].log_theta - latent[0].log_theta), 1e-15);
  for (int i = 0; i < 200; ++i) est = filter_update(est, latent, 0.1);
  EXPECT_LT(std::abs(est[0].psi_raw - latent[0].psi_raw), 1e-6);
  EXPECT_THROW(filter_update(est, latent, 0.0), InvalidConfig);
}

TEST(Features, LayoutAndFinite) {
  const EnvConfig c = cfg();
  MarketState s = fresh(c);
  FeatureVector f = features(s, c);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(f[static_cast<std::size_t>(i)], 0.0);
  EXPECT_EQ(f[6], 0.0);
  const auto prev = anchor_action().as_array();
  for (int i = 0; i < kActionDim; ++i) {
    EXPECT_EQ(f[static_cast<std::size_t>(10 + i)], prev[static_cast<std::size_t>(i)]);
  }
  s.log_returns.push_back(std::nan(""));
  f = features(s, c);
  for (double x : f) EXPECT_TRUE(std::isfinite(x));
}

TEST(Step, AnchorOnFreshResetIsArbitrageFree) {
  const EnvConfig c = cfg();
  const MarketState s = fresh(c);
  std::mt19937_64 rng(1);
  const StepResult r = step(s, anchor_action(), c, RewardWeights{}, rng);
  EXPECT_LE(r.breakdown.bf, 1e-6);
  // The smoothed CAL of a clean lattice sits at the softplus floor; the exact
  // hinge on the same lattice is zero.
  PenaltyConfig hard = c.penalty;
  hard.hard_hinge = true;
  const PriceLattice lat = surface_lattice(quote_grid(s, anchor_action(), c).quoted, s.spot,
                                           penalty_strikes(s.spot, c), c.caps);
  EXPECT_EQ(cal_penalty(lat, hard).value, 0.0);
  EXPECT_LE(bf_penalty(lat, hard).value, bf_rounding_floor(lat));
  double min_level = INFINITY;
  for (Eigen::Index m = 0; m < lat.prices.rows(); ++m) {
    min_level = std::min(min_level, lat.prices.row(m).cwiseAbs().mean());
  }
  EXPECT_LE(r.breakdown.cal, c.penalty.hinge(0.0) / min_level);
}

TEST(Step, RewardIdentityAndDual) {
  const EnvConfig c = cfg();
  MarketState s = fresh(c);
  std::mt19937_64 rng(2);
  const RewardWeights w{0.3, 0.02, 0.01};
  Action a = anchor_action();
  a.dual = 0.0;
  StepResult r = step(s, a, c, w, rng);
  EXPECT_EQ(r.breakdown.lambda_eff, w.lambda_arb);
  a.dual = 0.7;
  a.rho_shift = 0.1;
  r = step(r.state, a, c, w, rng);
  const RewardBreakdown& b = r.breakdown;
  EXPECT_EQ(b.lambda_eff, w.lambda_arb + 0.7);
  EXPECT_EQ(b.reward, b.pnl_quote + b.pnl_hedge - b.lambda_shape * b.shape -
                          b.lambda_eff * (b.bf + b.cal) - b.lambda_cvar * b.cvar_est);
  EXPECT_EQ(r.state.t, 2);
}

TEST(Step, DeterministicPerSeed) {
  const EnvConfig c = cfg();
  MarketMakingEnv x(c, 77);
  MarketMakingEnv y(c, 77);
  x.reset();
  y.reset();
  std::mt19937_64 pick(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    Action a{0.05 * u(pick), u(pick), 0.5 + u(pick), 0.4 * u(pick) - 0.2, u(pick)};
    const StepResult rx = x.step(a);
    const StepResult ry = y.step(a);
    ASSERT_EQ(rx.reward, ry.reward);
    ASSERT_EQ(rx.features, ry.features);
    ASSERT_GE(rx.state.var, 0.0);
  }
}

TEST(Step, ThrowsWhenEpisodeIsDone) {
  EnvConfig c = cfg();
  c.steps_per_episode = 3;
  MarketMakingEnv env(c, 1);
  env.reset();
  for (int i = 0; i < 3; ++i) env.step(anchor_action());
  EXPECT_TRUE(env.done());
  EXPECT_THROW(env.step(anchor_action()), EpisodeDone);
}

TEST(Step, ActionsAreClamped) {
  const EnvConfig c = cfg();
  std::mt19937_64 rng(1);
  const StepResult r = step(fresh(c), Action{1.0, 2.0, 9.0, -3.0, -1.0}, c, RewardWeights{}, rng);
  EXPECT_EQ(r.action, (Action{c.bounds.alpha_max, 1.0, c.bounds.psi_scale_max,
                              -c.bounds.rho_shift_max, 0.0}));
}

TEST(Step, IntensitiesFallStrictlyWithSpread) {
  const EnvConfig c = cfg();
  const MarketState s = fresh(c);
  const Eigen::MatrixXd fair = true_prices(s, c);
  Action lo = anchor_action();
  Action hi = lo;
  hi.alpha = 0.02;
  const QuoteGrid ql = quote_grid(s, lo, c);
  const QuoteGrid qh = quote_grid(s, hi, c);
  const Intensities ll = intensities(ql.ask, ql.bid, fair, c.k_grid, c.intensity);
  const Intensities lh = intensities(qh.ask, qh.bid, fair, c.k_grid, c.intensity);
  for (Eigen::Index m = 0; m < fair.rows(); ++m) {
    for (Eigen::Index j = 0; j < fair.cols(); ++j) {
      EXPECT_LT(lh.buy(m, j), ll.buy(m, j));
      if (qh.bid(m, j) > 0.0) EXPECT_LT(lh.sell(m, j), ll.sell(m, j));
    }
  }
}

TEST(Step, AtmMidInsensitiveToShapeActions) {
  const EnvConfig c = cfg();
  const MarketState s = fresh(c);
  const Action a{0.01, 0.5, 1.1, 0.05, 0.0};
  const double h = 1e-5;
  const auto mid_at = [&](double ps, double rs) {
    Action b = a;
    b.psi_scale = ps;
    b.rho_shift = rs;
    return quote_grid(s, b, c).mid;
  };
  const Eigen::MatrixXd dp = (mid_at(a.psi_scale + h, a.rho_shift) - mid_at(a.psi_scale - h, a.rho_shift)) / (2 * h);
  const Eigen::MatrixXd dr = (mid_at(a.psi_scale, a.rho_shift + h) - mid_at(a.psi_scale, a.rho_shift - h)) / (2 * h);
  for (Eigen::Index m = 0; m < dp.rows(); ++m) {
    EXPECT_LT(std::abs(dp(m, 10)), 1e-6 * s.spot);
    EXPECT_LT(std::abs(dr(m, 10)), 1e-6 * s.spot);
  }
  EXPECT_GT(std::abs(dr(dr.rows() - 1, 15)), 1e-6 * s.spot);
}

}  // namespace
}  // namespace essvi_mm
