#include "essvi_mm/env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "essvi_mm/errors.hpp"
#include "essvi_mm/pricing.hpp"

namespace essvi_mm {

namespace {

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require(bool ok, const char* key, const char* what) {
  if (!ok) throw InvalidConfig(key, what);
}

bool strictly_increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i] > v[i - 1])) return false;
  }
  return true;
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

Action clamp_action(const Action& a, const ActionBounds& b) {
  Action out;
  out.alpha = std::clamp(a.alpha, 0.0, b.alpha_max);
  out.hedge = std::clamp(a.hedge, 0.0, 1.0);
  out.psi_scale = std::clamp(a.psi_scale, b.psi_scale_min, b.psi_scale_max);
  out.rho_shift = std::clamp(a.rho_shift, -b.rho_shift_max, b.rho_shift_max);
  out.dual = std::max(a.dual, 0.0);
  return out;
}

EnvConfig EnvConfig::defaults() {
  EnvConfig cfg;
  for (double days : {7.0, 14.0, 21.0, 30.0, 60.0, 90.0}) cfg.maturities.push_back(days / 252.0);
  constexpr int kPoints = 21;
  constexpr int kHalf = kPoints / 2;
  for (int j = 0; j < kPoints; ++j) cfg.k_grid.push_back(0.35 * (j - kHalf) / kHalf);
  cfg.cvar.tail_fraction = 0.05;
  cfg.cvar.tau_cvar = 1e-3;
  cfg.cvar.n_scenarios = 64;
  return cfg;
}

void EnvConfig::validate() const {
  require(maturities.size() >= 2, "maturities", "need at least 2 maturities");
  require(all_finite(maturities) && maturities.front() > 0.0 && strictly_increasing(maturities),
          "maturities", "must be positive and strictly increasing");
  require(k_grid.size() >= 3, "k_grid", "need at least 3 points");
  require(all_finite(k_grid) && strictly_increasing(k_grid), "k_grid",
          "must be finite and strictly increasing");
  require(steps_per_episode > 0, "steps_per_episode", "must be positive");
  require(dt > 0.0 && std::isfinite(dt), "dt", "must be positive");
  require(spot0 > 0.0 && std::isfinite(spot0), "spot0", "must be positive");
  require(std::isfinite(heston.mu), "heston_mu", "must be finite");
  require(heston.kappa >= 0.0, "heston_kappa", "must be non-negative");
  require(heston.v_bar >= 0.0, "heston_v_bar", "must be non-negative");
  require(heston.xi >= 0.0, "heston_xi", "must be non-negative");
  require(std::abs(heston.rho_sv) <= 1.0, "heston_rho_sv", "must lie in [-1, 1]");
  require(heston.v0 >= 0.0, "heston_v0", "must be non-negative");
  require(intensity.lambda0 > 0.0, "lambda0", "must be positive");
  require(intensity.beta >= 0.0, "beta", "must be non-negative");
  require(intensity.kappa_k > 0.0, "kappa_k", "must be positive");
  require(intensity.s0 >= 0.0, "s0", "must be non-negative");
  require(bounds.alpha_max > 0.0, "alpha_max", "must be positive");
  require(bounds.psi_scale_min > 0.0 && bounds.psi_scale_max > bounds.psi_scale_min,
          "psi_scale_min", "need 0 < psi_scale_min < psi_scale_max");
  require(bounds.rho_shift_max >= 0.0 && bounds.rho_shift_max < 1.0, "rho_shift_max",
          "must lie in [0, 1)");
  require(lambda_shape_max >= 0.0, "lambda_shape_max", "must be non-negative");
  require(lambda_arb_max >= 0.0, "lambda_arb_max", "must be non-negative");
  require(lambda_cvar >= 0.0, "lambda_cvar", "must be non-negative");
  require(filter_rate > 0.0 && filter_rate <= 1.0, "filter_rate", "must lie in (0, 1]");
  require(std::abs(latent_rho) < 1.0, "latent_rho", "must lie in (-1, 1)");
  require(latent_psi_frac >= 0.0 && latent_psi_frac < 1.0, "latent_psi_frac",
          "must lie in [0, 1)");
  require(latent_theta_slope >= 0.0, "latent_theta_slope", "must be non-negative");
  require(cvar_noise_scale >= 0.0, "cvar_noise_scale", "must be non-negative");
  require(caps.eps_psi > 0.0 && caps.eps_psi < 1.0, "eps_psi", "must lie in (0, 1)");
  require(caps.tau_max > 0.0, "tau_max", "must be positive");
  require(caps.sigma_min > 0.0, "sigma_min", "must be positive");
  require(caps.t_min > 0.0, "t_min", "must be positive");
  require(caps.eps_rho > 0.0 && caps.eps_rho < 1.0, "eps_rho", "must lie in (0, 1)");
  require(caps.eps_num >= 0.0, "eps_num", "must be non-negative");
  require(penalty.hard_hinge || penalty.tau_arb > 0.0, "tau_arb", "must be positive");
  require(penalty.eps_norm > 0.0, "eps_norm", "must be positive");
  require(penalty.hinge_shift >= 0.0, "hinge_shift", "must be non-negative");
  require(cvar.tail_fraction > 0.0 && cvar.tail_fraction < 1.0, "cvar_tail_fraction",
          "must lie in (0, 1)");
  require(cvar.tau_cvar > 0.0, "tau_cvar", "must be positive");
  require(cvar.n_scenarios >= 2, "n_scenarios", "must be at least 2");
}

EssviSurface surface_from_raw(const std::vector<RawEssviSlice>& raw,
                              const std::vector<double>& maturities, const SurfaceCaps& caps) {
  EssviSurface s;
  s.maturities = maturities;
  s.slices.reserve(raw.size());
  for (const auto& r : raw) s.slices.push_back(reparam(r, caps));
  return s;
}

MarketState reset(const EnvConfig& cfg, std::mt19937_64& rng) {
  // The initial state is deterministic; the stream is taken so that future
  // randomized initializations keep the same signature.
  (void)rng;
  MarketState s;
  s.t = 0;
  s.spot = cfg.spot0;
  s.var = cfg.heston.v0;
  const double t_last = cfg.maturities.back();
  const double psi_raw = std::log(cfg.latent_psi_frac / (1.0 - cfg.latent_psi_frac));
  for (double t : cfg.maturities) {
    RawEssviSlice r;
    r.log_theta = std::log(cfg.heston.v0 * t * (1.0 + cfg.latent_theta_slope * t / t_last));
    r.rho_raw = std::atanh(cfg.latent_rho);
    r.psi_raw = psi_raw;
    s.latent_raw.push_back(r);
  }
  s.estimate_raw = s.latent_raw;
  s.latent = surface_from_raw(s.latent_raw, cfg.maturities, cfg.caps);
  s.estimate = s.latent;
  s.prev_action = anchor_action();
  return s;
}

std::pair<double, double> heston_step(double spot, double var, const EnvConfig& cfg,
                                      std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double z_v = normal(rng);
  const double z_perp = normal(rng);
  const HestonParams& h = cfg.heston;
  const double z_s = h.rho_sv * z_v + std::sqrt(1.0 - h.rho_sv * h.rho_sv) * z_perp;
  const double v_pos = std::max(var, 0.0);
  const double root = std::sqrt(v_pos * cfg.dt);
  double v_next = var + h.kappa * (h.v_bar - v_pos) * cfg.dt + h.xi * root * z_v;
  v_next = std::max(v_next, 0.0);
  const double s_next = spot * std::exp((h.mu - 0.5 * v_pos) * cfg.dt + root * z_s);
  return {s_next, v_next};
}

QuoteGrid quote_grid(const MarketState& state, const Action& action, const EnvConfig& cfg) {
  const Action a = clamp_action(action, cfg.bounds);
  const auto m_count = static_cast<Eigen::Index>(cfg.maturities.size());
  const auto j_count = static_cast<Eigen::Index>(cfg.k_grid.size());
  QuoteGrid q;
  q.quoted = deform(state.estimate, a.psi_scale, a.rho_shift, cfg.caps);
  q.strikes.resize(cfg.k_grid.size());
  for (std::size_t j = 0; j < cfg.k_grid.size(); ++j) q.strikes[j] = state.spot * std::exp(cfg.k_grid[j]);
  q.vol.resize(m_count, j_count);
  q.mid.resize(m_count, j_count);
  q.ask.resize(m_count, j_count);
  q.bid.resize(m_count, j_count);
  q.delta.resize(m_count, j_count);
  for (Eigen::Index m = 0; m < m_count; ++m) {
    const double t = std::max(cfg.maturities[static_cast<std::size_t>(m)], cfg.caps.t_min);
    const EssviSlice& slice = q.quoted.slices[static_cast<std::size_t>(m)];
    for (Eigen::Index j = 0; j < j_count; ++j) {
      const double k = cfg.k_grid[static_cast<std::size_t>(j)];
      const double vol = implied_vol(essvi_total_variance(slice, k), t, cfg.caps);
      const BsQuoteInputs in{state.spot, q.strikes[static_cast<std::size_t>(j)], t, vol};
      const double mid = bs_call(in);
      const double half = a.alpha * state.spot * vol * std::sqrt(t) * cfg.intensity.s0;
      q.vol(m, j) = vol;
      q.mid(m, j) = mid;
      q.ask(m, j) = mid + half;
      q.bid(m, j) = std::max(mid - half, 0.0);
      q.delta(m, j) = bs_greeks(in).delta;
    }
  }
  return q;
}

Eigen::MatrixXd true_prices(const MarketState& state, const EnvConfig& cfg) {
  const auto m_count = static_cast<Eigen::Index>(cfg.maturities.size());
  const auto j_count = static_cast<Eigen::Index>(cfg.k_grid.size());
  Eigen::MatrixXd fair(m_count, j_count);
  for (Eigen::Index m = 0; m < m_count; ++m) {
    const double t = std::max(cfg.maturities[static_cast<std::size_t>(m)], cfg.caps.t_min);
    const EssviSlice& slice = state.latent.slices[static_cast<std::size_t>(m)];
    for (Eigen::Index j = 0; j < j_count; ++j) {
      const double k = cfg.k_grid[static_cast<std::size_t>(j)];
      const double vol = implied_vol(essvi_total_variance(slice, k), t, cfg.caps);
      fair(m, j) = bs_call(BsQuoteInputs{state.spot, state.spot * std::exp(k), t, vol});
    }
  }
  return fair;
}

Intensities intensities(const Eigen::MatrixXd& ask, const Eigen::MatrixXd& bid,
                        const Eigen::MatrixXd& fair, const std::vector<double>& k_grid,
                        const IntensityParams& params) {
  if (ask.rows() != fair.rows() || ask.cols() != fair.cols() || bid.rows() != fair.rows() ||
      bid.cols() != fair.cols() || static_cast<std::size_t>(fair.cols()) != k_grid.size()) {
    throw ShapeMismatch("quote, fair-price and k-grid shapes differ");
  }
  Intensities lam;
  lam.buy.resize(fair.rows(), fair.cols());
  lam.sell.resize(fair.rows(), fair.cols());
  for (Eigen::Index j = 0; j < fair.cols(); ++j) {
    const double weight =
        params.lambda0 * std::exp(-std::abs(k_grid[static_cast<std::size_t>(j)]) / params.kappa_k);
    for (Eigen::Index m = 0; m < fair.rows(); ++m) {
      lam.buy(m, j) = weight * logistic(-params.beta * (ask(m, j) - fair(m, j)));
      lam.sell(m, j) = weight * logistic(-params.beta * (fair(m, j) - bid(m, j)));
    }
  }
  return lam;
}

ExpectedPnl expected_pnl_and_delta(const Intensities& lam, const Eigen::MatrixXd& ask,
                                   const Eigen::MatrixXd& bid, const Eigen::MatrixXd& fair,
                                   const Eigen::MatrixXd& delta) {
  const auto same = [&](const Eigen::MatrixXd& x) {
    return x.rows() == fair.rows() && x.cols() == fair.cols();
  };
  if (!same(lam.buy) || !same(lam.sell) || !same(ask) || !same(bid) || !same(delta)) {
    throw ShapeMismatch("expected P&L inputs differ in shape");
  }
  ExpectedPnl out;
  for (Eigen::Index m = 0; m < fair.rows(); ++m) {
    for (Eigen::Index j = 0; j < fair.cols(); ++j) {
      out.pnl_quote += lam.buy(m, j) * (ask(m, j) - fair(m, j)) +
                       lam.sell(m, j) * (fair(m, j) - bid(m, j));
      out.net_delta += (lam.sell(m, j) - lam.buy(m, j)) * delta(m, j);
    }
  }
  return out;
}

std::vector<RawEssviSlice> filter_update(const std::vector<RawEssviSlice>& estimate,
                                         const std::vector<RawEssviSlice>& latent, double rate) {
  if (estimate.size() != latent.size()) throw ShapeMismatch("estimate and latent differ in size");
  if (!(rate > 0.0 && rate <= 1.0)) throw InvalidConfig("filter_rate", "must lie in (0, 1]");
  if (rate == 1.0) return latent;
  std::vector<RawEssviSlice> out(estimate.size());
  for (std::size_t m = 0; m < estimate.size(); ++m) {
    const RawEssviSlice& e = estimate[m];
    const RawEssviSlice& l = latent[m];
    out[m].log_theta = e.log_theta + rate * (l.log_theta - e.log_theta);
    out[m].rho_raw = e.rho_raw + rate * (l.rho_raw - e.rho_raw);
    out[m].psi_raw = e.psi_raw + rate * (l.psi_raw - e.psi_raw);
  }
  return out;
}

std::vector<double> penalty_strikes(double spot, const EnvConfig& cfg) {
  std::vector<double> strikes(cfg.k_grid.size());
  for (std::size_t j = 0; j < cfg.k_grid.size(); ++j) strikes[j] = spot * std::exp(cfg.k_grid[j]);
  const double step = (strikes.back() - strikes.front()) / static_cast<double>(strikes.size() - 1);
  bool even = true;
  for (std::size_t j = 1; j < strikes.size() && even; ++j) {
    even = std::abs(strikes[j] - strikes[j - 1] - step) <= 1e-9 * strikes[j];
  }
  if (even) return strikes;
  return even_strikes(spot, cfg.k_grid.front(), cfg.k_grid.back(),
                      static_cast<int>(cfg.k_grid.size()));
}

ArbPenalties surface_penalties(const EssviSurface& quoted, double spot, const EnvConfig& cfg) {
  const PriceLattice lat = surface_lattice(quoted, spot, penalty_strikes(spot, cfg), cfg.caps);
  ArbPenalties p;
  p.bf = bf_penalty(lat, cfg.penalty).value;
  p.cal = cal_penalty(lat, cfg.penalty).value;
  p.shape = shape_penalty(quoted);
  return p;
}

FeatureVector features(const MarketState& state, const EnvConfig& cfg) {
  FeatureVector f{};
  const double scale = std::sqrt(std::max(cfg.heston.v_bar, 1e-12) * cfg.dt);
  const auto n_ret = static_cast<int>(state.log_returns.size());
  for (int lag = 0; lag < kReturnLags && lag < n_ret; ++lag) {
    f[static_cast<std::size_t>(lag)] =
        state.log_returns[static_cast<std::size_t>(n_ret - 1 - lag)] / scale;
  }
  double sq = 0.0;
  for (double r : state.log_returns) sq += r * r;
  f[5] = n_ret > 0 ? std::sqrt(sq / n_ret / cfg.dt) : 0.0;
  f[6] = static_cast<double>(state.t) / static_cast<double>(cfg.steps_per_episode);
  double theta = 0.0;
  double rho = 0.0;
  double psi = 0.0;
  for (const auto& s : state.estimate.slices) {
    theta += s.theta;
    rho += s.rho;
    psi += s.psi;
  }
  const double m = static_cast<double>(std::max<std::size_t>(state.estimate.size(), 1));
  f[7] = theta / m;
  f[8] = rho / m;
  f[9] = psi / m;
  const auto prev = state.prev_action.as_array();
  for (int i = 0; i < kActionDim; ++i) f[static_cast<std::size_t>(10 + i)] = prev[static_cast<std::size_t>(i)];
  for (double& x : f) {
    if (!std::isfinite(x)) x = 0.0;
  }
  return f;
}

double scenario_noise_std(const MarketState& state, const EnvConfig& cfg) {
  const double t0 = std::max(state.estimate.maturities.front(), cfg.caps.t_min);
  const double sigma_atm = std::sqrt(state.estimate.slices.front().theta / t0);
  return cfg.cvar_noise_scale * state.spot * sigma_atm * std::sqrt(cfg.dt);
}

StepResult step(const MarketState& state, const Action& action, const EnvConfig& cfg,
                const RewardWeights& weights, std::mt19937_64& rng) {
  if (state.t >= cfg.steps_per_episode) {
    std::ostringstream msg;
    msg << "episode finished at step " << state.t;
    throw EpisodeDone(msg.str());
  }
  const Action a = clamp_action(action, cfg.bounds);

  const QuoteGrid q = quote_grid(state, a, cfg);
  const Eigen::MatrixXd fair = true_prices(state, cfg);
  const Intensities lam = intensities(q.ask, q.bid, fair, cfg.k_grid, cfg.intensity);
  const ExpectedPnl expected = expected_pnl_and_delta(lam, q.ask, q.bid, fair, q.delta);

  const auto [spot_next, var_next] = heston_step(state.spot, state.var, cfg, rng);
  const double spot_move = spot_next - state.spot;
  const double pnl_hedge = hedge_pnl(a.hedge, expected.net_delta, spot_move);

  const ArbPenalties pen = surface_penalties(q.quoted, state.spot, cfg);

  std::vector<double> fills;
  std::vector<double> edges;
  fills.reserve(static_cast<std::size_t>(2 * fair.size()));
  edges.reserve(static_cast<std::size_t>(2 * fair.size()));
  for (Eigen::Index m = 0; m < fair.rows(); ++m) {
    for (Eigen::Index j = 0; j < fair.cols(); ++j) {
      fills.push_back(lam.buy(m, j));
      edges.push_back(q.ask(m, j) - fair(m, j));
      fills.push_back(lam.sell(m, j));
      edges.push_back(fair(m, j) - q.bid(m, j));
    }
  }
  CvarConfig cvar_cfg = cfg.cvar;
  cvar_cfg.price_noise_std = scenario_noise_std(state, cfg);
  const ScenarioBatch batch = sample_scenarios(fills, edges, a.hedge * expected.net_delta,
                                               spot_move, cvar_cfg, rng);
  const double cvar = cvar_smoothed(batch, cvar_cfg);

  StepResult out;
  RewardBreakdown& b = out.breakdown;
  b.pnl_quote = expected.pnl_quote;
  b.pnl_hedge = pnl_hedge;
  b.bf = pen.bf;
  b.cal = pen.cal;
  b.shape = pen.shape;
  b.cvar_est = cvar;
  b.lambda_shape = weights.lambda_shape;
  b.lambda_arb = weights.lambda_arb;
  b.lambda_cvar = weights.lambda_cvar;
  b.lambda_eff = weights.lambda_arb + a.dual;
  b.reward = compose_reward(b.pnl_quote, b.pnl_hedge, b.shape, b.bf, b.cal, b.cvar_est,
                            b.lambda_shape, b.lambda_eff, b.lambda_cvar);
  out.reward = b.reward;
  out.action = a;

  MarketState& next = out.state;
  next = state;
  next.t = state.t + 1;
  next.spot = spot_next;
  next.var = var_next;
  next.estimate_raw = filter_update(state.estimate_raw, state.latent_raw, cfg.filter_rate);
  next.estimate = surface_from_raw(next.estimate_raw, cfg.maturities, cfg.caps);
  next.prev_action = a;
  next.log_returns.push_back(std::log(spot_next / state.spot));
  while (static_cast<int>(next.log_returns.size()) > kReturnWindow) next.log_returns.pop_front();
  out.features = features(next, cfg);
  return out;
}

MarketMakingEnv::MarketMakingEnv(EnvConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), rng_(seed) {
  cfg_.validate();
  state_ = essvi_mm::reset(cfg_, rng_);
}

FeatureVector MarketMakingEnv::reset() {
  state_ = essvi_mm::reset(cfg_, rng_);
  return features(state_, cfg_);
}

StepResult MarketMakingEnv::step(const Action& action) {
  StepResult r = essvi_mm::step(state_, action, cfg_, weights_, rng_);
  state_ = r.state;
  return r;
}

}  // namespace essvi_mm
