#pragma once

// Numerical checks of the closed-form sensitivities and of the convergence,
// detection and wing-growth properties of the surface and risk layers.

#include <random>
#include <string>
#include <vector>

#include "essvi_mm/env.hpp"
#include "essvi_mm/risk.hpp"
#include "essvi_mm/surface.hpp"

namespace essvi_mm {

struct Check {
  double analytic = 0.0;
  double fd = 0.0;
  double rel_err = 0.0;  // |analytic - fd| / |analytic|, or 0 if analytic is tiny
  bool claimed_zero = false;
  bool ok = true;
};

struct SensitivityRow {
  int m = 0;
  double k = 0.0;
  Check d_mid_d_alpha;
  Check d_ask_d_alpha;
  Check d_bid_d_alpha;
  Check d_mid_d_rho_shift;
  Check d_mid_d_psi_scale;
  Check d_mid_d_dual;
  Check d_lambda_buy_d_alpha;
  Check d_lambda_sell_d_alpha;
  Check d_delta_d_rho_shift;
  Check d_delta_d_psi_scale;
  Check d_vega_d_rho_shift;
  Check d_vega_d_psi_scale;
  bool bid_floored = false;
};

struct SensitivityReport {
  std::vector<SensitivityRow> rows;
  bool pass = true;
  double max_quote_rel_err = 0.0;
  double max_greek_rel_err = 0.0;
  double max_atm_analytic = 0.0;  // largest |shape-action sensitivity| in the k = 0 column
  double max_atm_fd = 0.0;
  bool signs_ok = true;  // sign pattern of the spread and intensity sensitivities
};

struct SensitivityTolerances {
  double quote_rel = 1e-4;
  double greek_rel = 1e-3;
  double tiny = 1e-8;
  double fd_rel_step = 1e-5;
};

// Analytic quote and Greek sensitivities against central differences of a
// long-double re-quote. Throws ClampActive if a clamp binds at the action or a
// bid sits on its zero floor within the difference step.
SensitivityReport quote_sensitivities(const MarketState& state, const Action& action,
                                      const EnvConfig& cfg,
                                      const SensitivityTolerances& tol = {});

// Same report restricted to the Delta and Vega chains.
SensitivityReport greek_sensitivity_check(const MarketState& state, const Action& action,
                                          const EnvConfig& cfg,
                                          const SensitivityTolerances& tol = {});

struct MonotonicityRow {
  int m = 0;
  int j = 0;
  double alpha_lo = 0.0;
  double alpha_hi = 0.0;
  double buy_lo = 0.0;
  double buy_hi = 0.0;
  double sell_lo = 0.0;
  double sell_hi = 0.0;
  bool sell_checked = true;
  bool ok = true;
};

struct MonotonicityReport {
  bool pass = true;
  std::vector<MonotonicityRow> rows;
};

// Intensities must fall strictly as the half-spread grows. Sell intensities are
// only compared where the bid is off its zero floor.
MonotonicityReport intensity_monotonicity_check(const MarketState& state, const EnvConfig& cfg,
                                                const std::vector<double>& alphas,
                                                const Action& base = anchor_action());

struct GridSpec {
  double spot = 100.0;
  double k_lo = 70.0;
  double k_hi = 130.0;
  double vol = 0.2;
  double maturity = 1.0;
  double dk0 = 1.0;
  double inject_frac = 0.01;  // concave spike size relative to the row's mean price
  double t_lo = 0.25;
  double t_hi = 1.0;
  double dt0 = 0.25;
  double swap_at = 0.5;  // maturity whose row is swapped with the next one
  double cal_rate_min = 0.05;
  double tau_soft = 1e-3;
  double rate_lo = 2.5;
  double rate_hi = 6.0;
};

struct BfLevel {
  double dk = 0.0;
  double bf_clean = 0.0;
  double floor = 0.0;
  double ratio = 0.0;  // bf_clean at the previous level / bf_clean here; 0 if undefined
  double bf_injected = 0.0;
  bool at_floor = false;
  bool detected = false;
};

struct CalLevel {
  double dt = 0.0;
  double cal_clean_hard = 0.0;
  double cal_clean_soft = 0.0;
  double soft_bound = 0.0;
  double cal_swap_pair = 0.0;  // worst per-pair value after the row swap
  double pair_over_dt = 0.0;
  bool ok = true;
};

struct GridReport {
  std::vector<BfLevel> bf;
  std::vector<CalLevel> cal;
  bool bf_rate_ok = true;
  bool bf_detect_ok = true;
  bool cal_ok = true;
  bool pass = true;
};

// Runs BF on a flat-vol strike lattice refined by halving dk `levels` times
// and CAL on a maturity lattice refined by halving dt. Requires levels >= 3.
GridReport grid_consistency_experiment(const GridSpec& spec, int levels);

struct WingReport {
  int samples = 0;
  double k_eval = 0.0;
  double max_slope = 0.0;
  double bound = 0.0;
  bool pass = true;
};

// Largest w(k)/|k| at k = +-k_eval over random admissible capped slices.
WingReport wing_bound_sweep(int n_samples, double k_eval, const SurfaceCaps& caps,
                            std::mt19937_64& rng);

struct CvarGradSpec {
  int buckets = 20;
  int n_scenarios = 10000;
  double net_delta = 2.0;
  double hedge = 0.5;
  double delta_s = 0.05;
  double noise_std = 0.2;
  double fd_step = 1e-4;
  int repeats = 20;
  int repeat_scenarios = 2000;
};

struct CvarGradReport {
  double pathwise = 0.0;  // envelope-theorem gradient in the hedge coordinate
  double crn_fd = 0.0;    // central difference with common random numbers
  double rel_err = 0.0;
  double zero_noise_grad = 0.0;  // gradient with no price noise and no drift
  double grad_tau_coarse = 0.0;  // pathwise gradient at tau = 1e-2
  double grad_tau_fine = 0.0;    // pathwise gradient at tau = 1e-3
  double crn_var = 0.0;
  double indep_var = 0.0;
  bool pass = true;
};

CvarGradReport cvar_gradient_check(const CvarConfig& cfg, const CvarGradSpec& spec,
                                   std::mt19937_64& rng);

// A state reached by a short random interior rollout with a jittered estimate,
// together with a random interior action.
std::pair<MarketState, Action> random_interior_state(const EnvConfig& cfg, std::mt19937_64& rng);

}  // namespace essvi_mm
