#pragma once

// Option market-making environment on a Heston mid price.
//
// Each step the agent deforms the filtered eSSVI estimate, quotes a symmetric
// volatility-proportional spread around the Black-Scholes mid on an (M x J)
// maturity/moneyness grid, collects expected fills against a latent fair
// surface, delta-hedges a fraction of the net option delta, and pays
// no-arbitrage, shape and CVaR penalties.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <deque>
#include <random>
#include <vector>

#include "essvi_mm/noarb.hpp"
#include "essvi_mm/risk.hpp"
#include "essvi_mm/surface.hpp"

namespace essvi_mm {

struct HestonParams {
  double mu = 0.0;
  double kappa = 3.0;
  double v_bar = 0.04;
  double xi = 0.5;
  double rho_sv = -0.5;
  double v0 = 0.04;
};

struct IntensityParams {
  double lambda0 = 0.8;
  double beta = 35.0;
  double kappa_k = 0.25;  // moneyness decay of the fill weight exp(-|k|/kappa_k)
  double s0 = 0.1;        // spread scale
};

struct ActionBounds {
  double alpha_max = 0.05;
  double psi_scale_min = 0.5;
  double psi_scale_max = 1.5;
  double rho_shift_max = 0.2;
};

inline constexpr int kActionDim = 5;

struct Action {
  double alpha = 0.0;
  double hedge = 0.0;
  double psi_scale = 1.0;
  double rho_shift = 0.0;
  double dual = 0.0;

  std::array<double, kActionDim> as_array() const { return {alpha, hedge, psi_scale, rho_shift, dual}; }
  static Action from_array(const std::array<double, kActionDim>& a) {
    return {a[0], a[1], a[2], a[3], a[4]};
  }
  friend bool operator==(const Action&, const Action&) = default;
};

// Conservative baseline action: tight spread, half hedge, identity deformation.
inline Action anchor_action() { return {0.01, 0.5, 1.0, 0.0, 0.0}; }

Action clamp_action(const Action& a, const ActionBounds& bounds);

struct EnvConfig {
  std::vector<double> maturities;  // years
  std::vector<double> k_grid;      // log-moneyness
  int steps_per_episode = 780;
  double dt = 1.0 / (252.0 * 780.0);
  double spot0 = 100.0;
  HestonParams heston;
  IntensityParams intensity;
  ActionBounds bounds;
  double lambda_shape_max = 0.5;
  double lambda_arb_max = 0.05;
  double lambda_cvar = 0.01;
  double filter_rate = 0.1;
  // Latent surface: theta_m = v0 T_m (1 + theta_slope T_m / T_M), fixed rho and
  // psi = psi_frac * psi_max(rho).
  double latent_rho = -0.4;
  double latent_psi_frac = 0.3;
  double latent_theta_slope = 0.1;
  // Scenario price noise is noise_scale * S * sigma_atm * sqrt(dt).
  double cvar_noise_scale = 0.5;
  SurfaceCaps caps;
  PenaltyConfig penalty;
  CvarConfig cvar;

  static EnvConfig defaults();
  // Throws InvalidConfig naming the offending field.
  void validate() const;
};

inline constexpr int kReturnWindow = 20;
inline constexpr int kReturnLags = 5;
inline constexpr int kFeatureDim = 15;

using FeatureVector = std::array<double, kFeatureDim>;

struct MarketState {
  int t = 0;
  double spot = 0.0;
  double var = 0.0;
  std::vector<RawEssviSlice> latent_raw;
  std::vector<RawEssviSlice> estimate_raw;
  EssviSurface latent;
  EssviSurface estimate;
  Action prev_action;
  std::deque<double> log_returns;  // most recent last, at most kReturnWindow
};

struct RewardWeights {
  double lambda_shape = 0.0;
  double lambda_arb = 0.0;
  double lambda_cvar = 0.0;
};

struct RewardBreakdown {
  double pnl_quote = 0.0;
  double pnl_hedge = 0.0;
  double bf = 0.0;
  double cal = 0.0;
  double shape = 0.0;
  double cvar_est = 0.0;
  double lambda_shape = 0.0;
  double lambda_arb = 0.0;
  double lambda_cvar = 0.0;
  double lambda_eff = 0.0;
  double reward = 0.0;
};

// The reward identity shared by the environment and anything that re-derives
// rewards from logs.
inline double compose_reward(double pnl_quote, double pnl_hedge, double shape, double bf,
                             double cal, double cvar, double lambda_shape, double lambda_eff,
                             double lambda_cvar) {
  return pnl_quote + pnl_hedge - lambda_shape * shape - lambda_eff * (bf + cal) -
         lambda_cvar * cvar;
}

struct QuoteGrid {
  std::vector<double> strikes;  // per k-grid column at the current spot
  EssviSurface quoted;          // deformed estimate
  Eigen::MatrixXd vol;          // quoted implied vol
  Eigen::MatrixXd mid;
  Eigen::MatrixXd ask;
  Eigen::MatrixXd bid;
  Eigen::MatrixXd delta;        // Black-Scholes delta at the quoted vol
};

struct Intensities {
  Eigen::MatrixXd buy;
  Eigen::MatrixXd sell;
};

struct ExpectedPnl {
  double pnl_quote = 0.0;
  double net_delta = 0.0;
};

MarketState reset(const EnvConfig& cfg, std::mt19937_64& rng);

std::pair<double, double> heston_step(double spot, double var, const EnvConfig& cfg,
                                      std::mt19937_64& rng);

QuoteGrid quote_grid(const MarketState& state, const Action& action, const EnvConfig& cfg);

// Fair prices from the latent surface on the same grid as quote_grid.
Eigen::MatrixXd true_prices(const MarketState& state, const EnvConfig& cfg);

Intensities intensities(const Eigen::MatrixXd& ask, const Eigen::MatrixXd& bid,
                        const Eigen::MatrixXd& fair, const std::vector<double>& k_grid,
                        const IntensityParams& params);

ExpectedPnl expected_pnl_and_delta(const Intensities& lam, const Eigen::MatrixXd& ask,
                                   const Eigen::MatrixXd& bid, const Eigen::MatrixXd& fair,
                                   const Eigen::MatrixXd& delta);

inline double hedge_pnl(double hedge, double net_delta, double spot_move) {
  return hedge * net_delta * spot_move;
}

// Moves each raw parameter of the estimate a fraction `rate` toward the latent one.
std::vector<RawEssviSlice> filter_update(const std::vector<RawEssviSlice>& estimate,
                                         const std::vector<RawEssviSlice>& latent, double rate);

EssviSurface surface_from_raw(const std::vector<RawEssviSlice>& raw,
                              const std::vector<double>& maturities, const SurfaceCaps& caps);

// Evenly spaced strike lattice for the BF/CAL penalties at the given spot.
std::vector<double> penalty_strikes(double spot, const EnvConfig& cfg);

struct ArbPenalties {
  double bf = 0.0;
  double cal = 0.0;
  double shape = 0.0;
};

ArbPenalties surface_penalties(const EssviSurface& quoted, double spot, const EnvConfig& cfg);

FeatureVector features(const MarketState& state, const EnvConfig& cfg);

double scenario_noise_std(const MarketState& state, const EnvConfig& cfg);

struct StepResult {
  MarketState state;
  double reward = 0.0;
  RewardBreakdown breakdown;
  FeatureVector features{};
  Action action;  // the action actually applied, after clamping
};

StepResult step(const MarketState& state, const Action& action, const EnvConfig& cfg,
                const RewardWeights& weights, std::mt19937_64& rng);

// Stateful wrapper owning its configuration, random stream and current state.
class MarketMakingEnv {
 public:
  MarketMakingEnv(EnvConfig cfg, std::uint64_t seed);

  FeatureVector reset();
  StepResult step(const Action& action);
  bool done() const { return state_.t >= cfg_.steps_per_episode; }

  void set_weights(const RewardWeights& w) { weights_ = w; }
  const RewardWeights& weights() const { return weights_; }
  const MarketState& state() const { return state_; }
  const EnvConfig& config() const { return cfg_; }
  std::mt19937_64& rng() { return rng_; }

 private:
  EnvConfig cfg_;
  std::mt19937_64 rng_;
  MarketState state_;
  RewardWeights weights_;
};

}  // namespace essvi_mm
