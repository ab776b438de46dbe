#pragma once

// Smoothed Rockafellar-Uryasev CVaR on Monte Carlo P&L scenarios.
//
// Losses are L = -pnl. For tail fraction alpha the smoothed objective is
//
//   h(eta) = eta + (1/alpha) * mean_i s_tau(L_i - eta)
//
// and the smoothed CVaR is its minimum over eta.

#include <random>
#include <vector>

namespace essvi_mm {

struct CvarConfig {
  double tail_fraction = 0.05;
  double tau_cvar = 1e-3;  // zero selects the hard hinge in ru_objective
  int n_scenarios = 64;
  double price_noise_std = 0.0;
};

struct ScenarioBatch {
  std::vector<double> pnl;
};

// Raw random inputs of a scenario batch, kept separate so that callers can
// reuse them (common random numbers).
struct ScenarioDraws {
  std::vector<std::vector<int>> volumes;  // [scenario][bucket]
  std::vector<double> normals;            // [scenario]
};

ScenarioDraws draw_scenarios(const std::vector<double>& fills_mean, int n_scenarios,
                             std::mt19937_64& rng);

// pnl_i = sum_b volumes_ib * edges_b + hedge_term_base * (delta_s + noise_std * normals_i)
ScenarioBatch scenarios_from_draws(const ScenarioDraws& draws, const std::vector<double>& edges,
                                   double hedge_term_base, double delta_s, double noise_std);

ScenarioBatch sample_scenarios(const std::vector<double>& fills_mean,
                               const std::vector<double>& edges, double hedge_term_base,
                               double delta_s, const CvarConfig& cfg, std::mt19937_64& rng);

double ru_objective(double eta, const ScenarioBatch& batch, const CvarConfig& cfg);
// d ru_objective / d eta
double ru_objective_grad(double eta, const ScenarioBatch& batch, const CvarConfig& cfg);

// Minimizer of ru_objective by safeguarded Newton, started at the empirical
// (1 - alpha) loss quantile. Throws NoConvergence after 100 iterations.
double solve_eta(const ScenarioBatch& batch, const CvarConfig& cfg);

double cvar_smoothed(const ScenarioBatch& batch, const CvarConfig& cfg);

// Upper (1 - alpha) quantile of the losses: the loss at rank ceil(alpha N)
// counted from the worst.
double empirical_var(const ScenarioBatch& batch, double alpha);

// Exact CVaR of the empirical loss distribution.
double empirical_cvar_exact(const ScenarioBatch& batch, double alpha);

}  // namespace essvi_mm
