#include "essvi_mm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "essvi_mm/errors.hpp"
#include "essvi_mm/noarb.hpp"
#include "essvi_mm/pricing.hpp"

namespace essvi_mm {

namespace {

using Ld = long double;

template <typename Real>
Real logistic(Real x) {
  using std::exp;
  if (x >= Real(0)) return Real(1) / (Real(1) + exp(-x));
  const Real e = exp(x);
  return e / (Real(1) + e);
}

struct BucketQuote {
  Ld mid = 0;
  Ld ask = 0;
  Ld bid = 0;
  Ld delta = 0;
  Ld vega = 0;
  Ld buy = 0;
  Ld sell = 0;
};

// Re-quotes one bucket in extended precision. Mirrors quote_grid/intensities.
BucketQuote requote(const EssviSlice& est, double maturity, double k, double spot, double strike,
                    double fair, Ld alpha, Ld psi_scale, Ld rho_shift, const EnvConfig& cfg) {
  const BasicEssviSlice<Ld> s = make_slice<Ld>(est.theta, est.rho, est.psi);
  const BasicEssviSlice<Ld> d = deform_slice<Ld>(s, psi_scale, rho_shift, cfg.caps);
  const Ld t = std::max<Ld>(maturity, cfg.caps.t_min);
  const Ld vol = implied_vol<Ld>(essvi_total_variance<Ld>(d, k), t, cfg.caps);
  const BasicBsQuoteInputs<Ld> in{spot, strike, t, vol};
  const BasicBsGreeks<Ld> g = bs_greeks(in);
  BucketQuote q;
  q.mid = bs_call(in);
  const Ld half = alpha * Ld(spot) * vol * std::sqrt(t) * Ld(cfg.intensity.s0);
  q.ask = q.mid + half;
  q.bid = std::max<Ld>(q.mid - half, 0);
  q.delta = g.delta;
  q.vega = g.vega;
  const Ld weight = Ld(cfg.intensity.lambda0) * std::exp(-std::abs(Ld(k)) / Ld(cfg.intensity.kappa_k));
  const Ld beta = cfg.intensity.beta;
  q.buy = weight * logistic<Ld>(-beta * (q.ask - Ld(fair)));
  q.sell = weight * logistic<Ld>(-beta * (Ld(fair) - q.bid));
  return q;
}

Check make_check(double analytic, double fd, double rel_tol, double tiny, bool claimed_zero) {
  Check c;
  c.analytic = analytic;
  c.fd = fd;
  c.claimed_zero = claimed_zero;
  if (claimed_zero) {
    c.ok = std::abs(analytic) < tiny && std::abs(fd) < tiny;
  } else if (std::abs(analytic) > tiny) {
    c.rel_err = std::abs(analytic - fd) / std::abs(analytic);
    c.ok = c.rel_err < rel_tol;
  } else {
    c.ok = std::abs(fd - analytic) < tiny;
  }
  return c;
}

double step_for(double p, double rel) { return rel * std::max(1.0, std::abs(p)); }

SensitivityReport sensitivities(const MarketState& state, const Action& action, const EnvConfig& cfg,
                                const SensitivityTolerances& tol, bool quotes, bool greeks) {
  const Action a = clamp_action(action, cfg.bounds);
  if (!(a == action)) throw ClampActive("action outside its physical range");
  const double h_alpha = step_for(a.alpha, tol.fd_rel_step);
  const double h_rho = step_for(a.rho_shift, tol.fd_rel_step);
  const double h_psi = step_for(a.psi_scale, tol.fd_rel_step);
  const double h_dual = step_for(a.dual, tol.fd_rel_step);
  if (a.alpha - h_alpha <= 0.0 || a.alpha + h_alpha >= cfg.bounds.alpha_max ||
      a.psi_scale - h_psi <= cfg.bounds.psi_scale_min ||
      a.psi_scale + h_psi >= cfg.bounds.psi_scale_max ||
      std::abs(a.rho_shift) + h_rho >= cfg.bounds.rho_shift_max) {
    throw ClampActive("action within one difference step of its range boundary");
  }

  const QuoteGrid q = quote_grid(state, a, cfg);
  const Eigen::MatrixXd fair = true_prices(state, cfg);
  const Intensities lam = intensities(q.ask, q.bid, fair, cfg.k_grid, cfg.intensity);
  Action a_dual_up = a;
  a_dual_up.dual += h_dual;
  Action a_dual_dn = a;
  a_dual_dn.dual = std::max(0.0, a.dual - h_dual);
  const QuoteGrid q_dual_up = quote_grid(state, a_dual_up, cfg);
  const QuoteGrid q_dual_dn = quote_grid(state, a_dual_dn, cfg);
  Action a_alpha_up = a;
  a_alpha_up.alpha += h_alpha;
  Action a_alpha_dn = a;
  a_alpha_dn.alpha -= h_alpha;
  const QuoteGrid q_alpha_up = quote_grid(state, a_alpha_up, cfg);
  const QuoteGrid q_alpha_dn = quote_grid(state, a_alpha_dn, cfg);

  SensitivityReport rep;
  for (std::size_t m = 0; m < cfg.maturities.size(); ++m) {
    const EssviSlice& est = state.estimate.slices[m];
    const double t = std::max(cfg.maturities[m], cfg.caps.t_min);
    for (std::size_t j = 0; j < cfg.k_grid.size(); ++j) {
      const auto mi = static_cast<Eigen::Index>(m);
      const auto ji = static_cast<Eigen::Index>(j);
      const double k = cfg.k_grid[j];
      const bool atm = k == 0.0;
      const double strike = q.strikes[j];
      const double c_star = fair(mi, ji);
      const auto quote_at = [&](Ld al, Ld ps, Ld rs) {
        return requote(est, cfg.maturities[m], k, state.spot, strike, c_star, al, ps, rs, cfg);
      };

      const BucketQuote lo_a = quote_at(Ld(a.alpha) - h_alpha, a.psi_scale, a.rho_shift);
      const BucketQuote hi_a = quote_at(Ld(a.alpha) + h_alpha, a.psi_scale, a.rho_shift);
      const bool floor_lo = !(lo_a.bid > 0);
      const bool floor_hi = !(hi_a.bid > 0);
      if (floor_lo != floor_hi) throw ClampActive("bid floor binds within the difference step");
      const BucketQuote lo_r = quote_at(a.alpha, a.psi_scale, Ld(a.rho_shift) - h_rho);
      const BucketQuote hi_r = quote_at(a.alpha, a.psi_scale, Ld(a.rho_shift) + h_rho);
      const BucketQuote lo_p = quote_at(a.alpha, Ld(a.psi_scale) - h_psi, a.rho_shift);
      const BucketQuote hi_p = quote_at(a.alpha, Ld(a.psi_scale) + h_psi, a.rho_shift);

      const ActionPartials dw = action_partials(est, a.psi_scale, a.rho_shift, k, cfg.caps);
      const double vol = q.vol(mi, ji);
      const BsGreeks g = bs_greeks(BsQuoteInputs{state.spot, strike, t, vol});
      const double dsig_dw = 1.0 / (2.0 * vol * t);
      const double spread_slope = state.spot * vol * std::sqrt(t) * cfg.intensity.s0;
      const double d_ask = spread_slope;
      const double d_bid = floor_lo ? 0.0 : -spread_slope;
      const double weight = cfg.intensity.lambda0 * std::exp(-std::abs(k) / cfg.intensity.kappa_k);
      const double sb = logistic(-cfg.intensity.beta * (q.ask(mi, ji) - c_star));
      const double ss = logistic(-cfg.intensity.beta * (c_star - q.bid(mi, ji)));
      const double d_buy = -weight * sb * (1.0 - sb) * cfg.intensity.beta * d_ask;
      const double d_sell = weight * ss * (1.0 - ss) * cfg.intensity.beta * d_bid;

      const auto central = [](Ld up, Ld dn, double h) {
        return static_cast<double>((up - dn) / (Ld(2) * Ld(h)));
      };

      SensitivityRow row;
      row.m = static_cast<int>(m);
      row.k = k;
      row.bid_floored = floor_lo;
      const double qt = tol.quote_rel;
      const double gt = tol.greek_rel;
      row.d_mid_d_alpha = make_check(
          0.0, (q_alpha_up.mid(mi, ji) - q_alpha_dn.mid(mi, ji)) / (2.0 * h_alpha), qt, tol.tiny, true);
      row.d_ask_d_alpha = make_check(d_ask, central(hi_a.ask, lo_a.ask, h_alpha), qt, tol.tiny, false);
      row.d_bid_d_alpha =
          make_check(d_bid, central(hi_a.bid, lo_a.bid, h_alpha), qt, tol.tiny, floor_lo);
      row.d_mid_d_rho_shift = make_check(g.vega * dsig_dw * dw.dw_drho_shift,
                                         central(hi_r.mid, lo_r.mid, h_rho), qt, tol.tiny, atm);
      row.d_mid_d_psi_scale = make_check(g.vega * dsig_dw * dw.dw_dpsi_scale,
                                         central(hi_p.mid, lo_p.mid, h_psi), qt, tol.tiny, atm);
      row.d_mid_d_dual = make_check(
          0.0, (q_dual_up.mid(mi, ji) - q_dual_dn.mid(mi, ji)) / (a_dual_up.dual - a_dual_dn.dual),
          qt, tol.tiny, true);
      row.d_lambda_buy_d_alpha =
          make_check(d_buy, central(hi_a.buy, lo_a.buy, h_alpha), qt, tol.tiny, false);
      row.d_lambda_sell_d_alpha =
          make_check(d_sell, central(hi_a.sell, lo_a.sell, h_alpha), qt, tol.tiny, floor_lo);
      row.d_delta_d_rho_shift = make_check(g.vanna * dsig_dw * dw.dw_drho_shift,
                                           central(hi_r.delta, lo_r.delta, h_rho), gt, tol.tiny, atm);
      row.d_delta_d_psi_scale = make_check(g.vanna * dsig_dw * dw.dw_dpsi_scale,
                                           central(hi_p.delta, lo_p.delta, h_psi), gt, tol.tiny, atm);
      row.d_vega_d_rho_shift = make_check(g.volga * dsig_dw * dw.dw_drho_shift,
                                          central(hi_r.vega, lo_r.vega, h_rho), gt, tol.tiny, atm);
      row.d_vega_d_psi_scale = make_check(g.volga * dsig_dw * dw.dw_dpsi_scale,
                                          central(hi_p.vega, lo_p.vega, h_psi), gt, tol.tiny, atm);

      const Check* quote_checks[] = {&row.d_mid_d_alpha,        &row.d_ask_d_alpha,
                                     &row.d_bid_d_alpha,        &row.d_mid_d_rho_shift,
                                     &row.d_mid_d_psi_scale,    &row.d_mid_d_dual,
                                     &row.d_lambda_buy_d_alpha, &row.d_lambda_sell_d_alpha};
      const Check* greek_checks[] = {&row.d_delta_d_rho_shift, &row.d_delta_d_psi_scale,
                                     &row.d_vega_d_rho_shift, &row.d_vega_d_psi_scale};
      if (quotes) {
        for (const Check* c : quote_checks) {
          rep.pass = rep.pass && c->ok;
          rep.max_quote_rel_err = std::max(rep.max_quote_rel_err, c->rel_err);
        }
        bool signs = d_ask > 0.0 && d_buy < 0.0 && row.d_mid_d_dual.fd == 0.0;
        if (!floor_lo) signs = signs && d_bid < 0.0 && d_sell < 0.0;
        rep.signs_ok = rep.signs_ok && signs;
      }
      if (greeks) {
        for (const Check* c : greek_checks) {
          rep.pass = rep.pass && c->ok;
          rep.max_greek_rel_err = std::max(rep.max_greek_rel_err, c->rel_err);
        }
      }
      if (atm) {
        const Check* atm_checks[] = {&row.d_mid_d_rho_shift, &row.d_mid_d_psi_scale,
                                     &row.d_delta_d_rho_shift, &row.d_delta_d_psi_scale,
                                     &row.d_vega_d_rho_shift, &row.d_vega_d_psi_scale};
        for (const Check* c : atm_checks) {
          rep.max_atm_analytic = std::max(rep.max_atm_analytic, std::abs(c->analytic));
          rep.max_atm_fd = std::max(rep.max_atm_fd, std::abs(c->fd));
        }
      }
      rep.rows.push_back(row);
    }
  }
  rep.pass = rep.pass && rep.signs_ok;
  return rep;
}

PriceLattice flat_lattice(const GridSpec& spec, const std::vector<double>& strikes,
                          const std::vector<double>& maturities) {
  PriceLattice lat;
  lat.strikes = strikes;
  lat.maturities = maturities;
  lat.prices.resize(static_cast<Eigen::Index>(maturities.size()),
                    static_cast<Eigen::Index>(strikes.size()));
  for (std::size_t m = 0; m < maturities.size(); ++m) {
    for (std::size_t j = 0; j < strikes.size(); ++j) {
      lat.prices(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(j)) =
          bs_call(BsQuoteInputs{spec.spot, strikes[j], maturities[m], spec.vol});
    }
  }
  return lat;
}

std::vector<double> uniform_grid(double lo, double hi, double step) {
  const auto n = static_cast<int>(std::lround((hi - lo) / step)) + 1;
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo + step * i;
  return out;
}

}  // namespace

SensitivityReport quote_sensitivities(const MarketState& state, const Action& action,
                                      const EnvConfig& cfg, const SensitivityTolerances& tol) {
  return sensitivities(state, action, cfg, tol, true, true);
}

SensitivityReport greek_sensitivity_check(const MarketState& state, const Action& action,
                                          const EnvConfig& cfg, const SensitivityTolerances& tol) {
  return sensitivities(state, action, cfg, tol, false, true);
}

MonotonicityReport intensity_monotonicity_check(const MarketState& state, const EnvConfig& cfg,
                                                const std::vector<double>& alphas,
                                                const Action& base) {
  MonotonicityReport rep;
  if (alphas.size() < 2) return rep;
  const Eigen::MatrixXd fair = true_prices(state, cfg);
  std::vector<QuoteGrid> quotes;
  std::vector<Intensities> lams;
  for (double alpha : alphas) {
    Action a = base;
    a.alpha = alpha;
    quotes.push_back(quote_grid(state, a, cfg));
    lams.push_back(intensities(quotes.back().ask, quotes.back().bid, fair, cfg.k_grid, cfg.intensity));
  }
  for (std::size_t i = 0; i + 1 < alphas.size(); ++i) {
    for (Eigen::Index m = 0; m < fair.rows(); ++m) {
      for (Eigen::Index j = 0; j < fair.cols(); ++j) {
        MonotonicityRow row;
        row.m = static_cast<int>(m);
        row.j = static_cast<int>(j);
        row.alpha_lo = alphas[i];
        row.alpha_hi = alphas[i + 1];
        row.buy_lo = lams[i].buy(m, j);
        row.buy_hi = lams[i + 1].buy(m, j);
        row.sell_lo = lams[i].sell(m, j);
        row.sell_hi = lams[i + 1].sell(m, j);
        row.sell_checked = quotes[i].bid(m, j) > 0.0 && quotes[i + 1].bid(m, j) > 0.0;
        row.ok = row.buy_hi < row.buy_lo && (!row.sell_checked || row.sell_hi < row.sell_lo);
        rep.pass = rep.pass && row.ok;
        rep.rows.push_back(row);
      }
    }
  }
  return rep;
}

GridReport grid_consistency_experiment(const GridSpec& spec, int levels) {
  if (levels < 3) throw InvalidConfig("levels", "need at least 3 refinement levels");
  GridReport rep;
  PenaltyConfig hard;
  hard.hard_hinge = true;

  for (int l = 0; l < levels; ++l) {
    BfLevel lvl;
    lvl.dk = spec.dk0 / std::pow(2.0, l);
    const PriceLattice clean =
        flat_lattice(spec, uniform_grid(spec.k_lo, spec.k_hi, lvl.dk), {spec.maturity});
    lvl.bf_clean = bf_penalty(clean, hard).value;
    lvl.floor = bf_rounding_floor(clean);
    lvl.at_floor = lvl.bf_clean <= 10.0 * lvl.floor;

    PriceLattice injected = clean;
    const auto& ks = injected.strikes;
    const auto centre = static_cast<Eigen::Index>(
        std::min_element(ks.begin(), ks.end(),
                         [&](double x, double y) {
                           return std::abs(x - spec.spot) < std::abs(y - spec.spot);
                         }) -
        ks.begin());
    const double level = injected.prices.row(0).cwiseAbs().mean();
    injected.prices(0, centre) += spec.inject_frac * level;
    lvl.bf_injected = bf_penalty(injected, hard).value;
    lvl.detected = lvl.bf_injected > 10.0 * lvl.floor;
    rep.bf_detect_ok = rep.bf_detect_ok && lvl.detected;

    if (!rep.bf.empty()) {
      const BfLevel& prev = rep.bf.back();
      if (!prev.at_floor && !lvl.at_floor) {
        lvl.ratio = prev.bf_clean / lvl.bf_clean;
        rep.bf_rate_ok = rep.bf_rate_ok && lvl.ratio >= spec.rate_lo && lvl.ratio <= spec.rate_hi;
      } else if (prev.at_floor != lvl.at_floor) {
        rep.bf_rate_ok = false;
      }
    }
    rep.bf.push_back(lvl);
  }

  PenaltyConfig soft;
  soft.tau_arb = spec.tau_soft;
  soft.hinge_shift = 0.0;
  const std::vector<double> strikes = uniform_grid(spec.k_lo, spec.k_hi, spec.dk0);
  for (int l = 0; l < levels; ++l) {
    CalLevel lvl;
    lvl.dt = spec.dt0 / std::pow(2.0, l);
    const std::vector<double> mats = uniform_grid(spec.t_lo, spec.t_hi, lvl.dt);
    const PriceLattice clean = flat_lattice(spec, strikes, mats);
    lvl.cal_clean_hard = cal_penalty(clean, hard).value;
    lvl.cal_clean_soft = cal_penalty(clean, soft).value;
    double min_level = std::numeric_limits<double>::infinity();
    for (Eigen::Index m = 0; m < clean.prices.rows(); ++m) {
      min_level = std::min(min_level, clean.prices.row(m).cwiseAbs().mean());
    }
    lvl.soft_bound = spec.tau_soft * std::log(2.0) / min_level;

    PriceLattice swapped = clean;
    const auto at = static_cast<Eigen::Index>(
        std::min_element(mats.begin(), mats.end(),
                         [&](double x, double y) {
                           return std::abs(x - spec.swap_at) < std::abs(y - spec.swap_at);
                         }) -
        mats.begin());
    swapped.prices.row(at).swap(swapped.prices.row(at + 1));
    const PenaltyResult viol = cal_penalty(swapped, hard);
    lvl.cal_swap_pair = *std::max_element(viol.parts.begin(), viol.parts.end());
    lvl.pair_over_dt = lvl.cal_swap_pair / lvl.dt;
    lvl.ok = lvl.cal_clean_hard == 0.0 && lvl.cal_clean_soft <= lvl.soft_bound &&
             lvl.pair_over_dt >= spec.cal_rate_min;
    rep.cal_ok = rep.cal_ok && lvl.ok;
    rep.cal.push_back(lvl);
  }
  rep.pass = rep.bf_rate_ok && rep.bf_detect_ok && rep.cal_ok;
  return rep;
}

WingReport wing_bound_sweep(int n_samples, double k_eval, const SurfaceCaps& caps,
                            std::mt19937_64& rng) {
  std::uniform_real_distribution<double> log_theta(std::log(1e-3), 0.0);
  std::uniform_real_distribution<double> rho_raw(-3.0, 3.0);
  std::uniform_real_distribution<double> psi_raw(-4.0, 8.0);
  WingReport rep;
  rep.samples = n_samples;
  rep.k_eval = k_eval;
  rep.bound = caps.tau_max + 0.05;
  for (int i = 0; i < n_samples; ++i) {
    const RawEssviSlice raw{log_theta(rng), rho_raw(rng), psi_raw(rng)};
    const EssviSlice s = reparam(raw, caps);
    const double slope =
        std::max(essvi_total_variance(s, k_eval), essvi_total_variance(s, -k_eval)) / k_eval;
    rep.max_slope = std::max(rep.max_slope, slope);
  }
  rep.pass = rep.max_slope <= rep.bound && (caps.tau_max >= 2.0 || rep.max_slope < 2.0);
  return rep;
}

namespace {

struct HedgeProblem {
  ScenarioDraws draws;
  std::vector<double> edges;
};

ScenarioBatch hedge_batch(const HedgeProblem& p, const CvarGradSpec& spec, double hedge,
                          double delta_s, double noise) {
  return scenarios_from_draws(p.draws, p.edges, hedge * spec.net_delta, delta_s, noise);
}

double pathwise_grad(const HedgeProblem& p, const CvarGradSpec& spec, CvarConfig cfg,
                     double delta_s, double noise) {
  const ScenarioBatch batch = hedge_batch(p, spec, spec.hedge, delta_s, noise);
  const double eta = solve_eta(batch, cfg);
  double acc = 0.0;
  for (std::size_t i = 0; i < batch.pnl.size(); ++i) {
    const double dloss_dh = -spec.net_delta * (delta_s + noise * p.draws.normals[i]);
    acc += softplus_tau_grad(-batch.pnl[i] - eta, cfg.tau_cvar) * dloss_dh;
  }
  return acc / (cfg.tail_fraction * static_cast<double>(batch.pnl.size()));
}

double crn_fd(const HedgeProblem& p, const CvarGradSpec& spec, const CvarConfig& cfg) {
  const double up = cvar_smoothed(hedge_batch(p, spec, spec.hedge + spec.fd_step, spec.delta_s,
                                              spec.noise_std), cfg);
  const double dn = cvar_smoothed(hedge_batch(p, spec, spec.hedge - spec.fd_step, spec.delta_s,
                                              spec.noise_std), cfg);
  return (up - dn) / (2.0 * spec.fd_step);
}

double variance(const std::vector<double>& x) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double acc = 0.0;
  for (double v : x) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(x.size() - 1);
}

}  // namespace

CvarGradReport cvar_gradient_check(const CvarConfig& cfg, const CvarGradSpec& spec,
                                   std::mt19937_64& rng) {
  std::uniform_real_distribution<double> fill(0.05, 0.8);
  std::uniform_real_distribution<double> edge(-0.1, 0.5);
  std::vector<double> fills(static_cast<std::size_t>(spec.buckets));
  std::vector<double> edges(static_cast<std::size_t>(spec.buckets));
  for (int b = 0; b < spec.buckets; ++b) {
    fills[static_cast<std::size_t>(b)] = fill(rng);
    edges[static_cast<std::size_t>(b)] = edge(rng);
  }
  const HedgeProblem main{draw_scenarios(fills, spec.n_scenarios, rng), edges};

  CvarGradReport rep;
  rep.pathwise = pathwise_grad(main, spec, cfg, spec.delta_s, spec.noise_std);
  rep.crn_fd = crn_fd(main, spec, cfg);
  rep.rel_err = std::abs(rep.pathwise - rep.crn_fd) / std::max(std::abs(rep.crn_fd), 1e-300);
  rep.zero_noise_grad = pathwise_grad(main, spec, cfg, 0.0, 0.0);

  CvarConfig coarse = cfg;
  coarse.tau_cvar = 1e-2;
  CvarConfig fine = cfg;
  fine.tau_cvar = 1e-3;
  rep.grad_tau_coarse = pathwise_grad(main, spec, coarse, spec.delta_s, spec.noise_std);
  rep.grad_tau_fine = pathwise_grad(main, spec, fine, spec.delta_s, spec.noise_std);

  std::vector<double> crn;
  std::vector<double> indep;
  for (int r = 0; r < spec.repeats; ++r) {
    const HedgeProblem a{draw_scenarios(fills, spec.repeat_scenarios, rng), edges};
    const HedgeProblem b{draw_scenarios(fills, spec.repeat_scenarios, rng), edges};
    crn.push_back(crn_fd(a, spec, cfg));
    const double up = cvar_smoothed(
        hedge_batch(a, spec, spec.hedge + spec.fd_step, spec.delta_s, spec.noise_std), cfg);
    const double dn = cvar_smoothed(
        hedge_batch(b, spec, spec.hedge - spec.fd_step, spec.delta_s, spec.noise_std), cfg);
    indep.push_back((up - dn) / (2.0 * spec.fd_step));
  }
  rep.crn_var = variance(crn);
  rep.indep_var = variance(indep);

  const double tau_gap = std::abs(rep.grad_tau_coarse - rep.grad_tau_fine);
  rep.pass = rep.rel_err < 1e-2 && std::abs(rep.zero_noise_grad) < 1e-12 &&
             rep.indep_var >= 10.0 * rep.crn_var &&
             tau_gap <= 0.1 * std::abs(rep.grad_tau_fine);
  return rep;
}

std::pair<MarketState, Action> random_interior_state(const EnvConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const ActionBounds& b = cfg.bounds;
  const auto random_action = [&]() {
    Action a;
    a.alpha = b.alpha_max * (0.1 + 0.8 * unit(rng));
    a.hedge = 0.1 + 0.8 * unit(rng);
    a.psi_scale = b.psi_scale_min + (b.psi_scale_max - b.psi_scale_min) * (0.1 + 0.8 * unit(rng));
    a.rho_shift = b.rho_shift_max * (1.8 * unit(rng) - 0.9);
    a.dual = unit(rng);
    return a;
  };
  MarketState s = reset(cfg, rng);
  const int warm = static_cast<int>(unit(rng) * 5.0);
  RewardWeights w;
  for (int i = 0; i < warm && s.t < cfg.steps_per_episode; ++i) {
    s = step(s, random_action(), cfg, w, rng).state;
  }
  std::normal_distribution<double> jitter(0.0, 0.1);
  for (auto& r : s.estimate_raw) {
    r.log_theta += jitter(rng);
    r.rho_raw += jitter(rng);
    r.psi_raw += jitter(rng);
  }
  s.estimate = surface_from_raw(s.estimate_raw, cfg.maturities, cfg.caps);
  return {s, random_action()};
}

}  // namespace essvi_mm
