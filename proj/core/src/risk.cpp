#include "essvi_mm/risk.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "essvi_mm/errors.hpp"
#include "essvi_mm/noarb.hpp"

namespace essvi_mm {

namespace {

constexpr int kMaxEtaIterations = 100;
constexpr double kEtaGradTol = 1e-10;

void require_batch(const ScenarioBatch& batch) {
  if (batch.pnl.empty()) throw InvalidConfig("pnl", "scenario batch is empty");
}

std::vector<double> losses_descending(const ScenarioBatch& batch) {
  std::vector<double> losses(batch.pnl.size());
  std::transform(batch.pnl.begin(), batch.pnl.end(), losses.begin(),
                 [](double p) { return -p; });
  std::sort(losses.begin(), losses.end(), std::greater<>());
  return losses;
}

double hinge(double x, double tau) { return tau > 0.0 ? softplus_tau(x, tau) : std::max(x, 0.0); }

// Second derivative of the smoothed objective.
double ru_objective_curv(double eta, const ScenarioBatch& batch, const CvarConfig& cfg) {
  double acc = 0.0;
  for (double p : batch.pnl) {
    const double s = softplus_tau_grad(-p - eta, cfg.tau_cvar);
    acc += s * (1.0 - s);
  }
  return acc / (static_cast<double>(batch.pnl.size()) * cfg.tail_fraction * cfg.tau_cvar);
}

}  // namespace

ScenarioDraws draw_scenarios(const std::vector<double>& fills_mean, int n_scenarios,
                             std::mt19937_64& rng) {
  ScenarioDraws draws;
  draws.volumes.assign(static_cast<std::size_t>(n_scenarios),
                       std::vector<int>(fills_mean.size(), 0));
  draws.normals.resize(static_cast<std::size_t>(n_scenarios));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < n_scenarios; ++i) {
    auto& row = draws.volumes[static_cast<std::size_t>(i)];
    for (std::size_t b = 0; b < fills_mean.size(); ++b) {
      if (fills_mean[b] > 0.0) {
        std::poisson_distribution<int> poisson(fills_mean[b]);
        row[b] = poisson(rng);
      }
    }
    draws.normals[static_cast<std::size_t>(i)] = normal(rng);
  }
  return draws;
}

ScenarioBatch scenarios_from_draws(const ScenarioDraws& draws, const std::vector<double>& edges,
                                   double hedge_term_base, double delta_s, double noise_std) {
  ScenarioBatch batch;
  batch.pnl.resize(draws.normals.size());
  for (std::size_t i = 0; i < draws.normals.size(); ++i) {
    const auto& vol = draws.volumes[i];
    if (vol.size() != edges.size()) throw ShapeMismatch("volumes and edges differ in length");
    double quote = 0.0;
    for (std::size_t b = 0; b < edges.size(); ++b) quote += vol[b] * edges[b];
    batch.pnl[i] = quote + hedge_term_base * (delta_s + noise_std * draws.normals[i]);
  }
  return batch;
}

ScenarioBatch sample_scenarios(const std::vector<double>& fills_mean,
                               const std::vector<double>& edges, double hedge_term_base,
                               double delta_s, const CvarConfig& cfg, std::mt19937_64& rng) {
  if (fills_mean.size() != edges.size()) throw ShapeMismatch("fills_mean and edges differ in length");
  for (double v : fills_mean) {
    if (!(v >= 0.0)) throw InvalidConfig("fills_mean", "expected fills must be non-negative");
  }
  const ScenarioDraws draws = draw_scenarios(fills_mean, cfg.n_scenarios, rng);
  return scenarios_from_draws(draws, edges, hedge_term_base, delta_s, cfg.price_noise_std);
}

double ru_objective(double eta, const ScenarioBatch& batch, const CvarConfig& cfg) {
  require_batch(batch);
  double acc = 0.0;
  for (double p : batch.pnl) acc += hinge(-p - eta, cfg.tau_cvar);
  return eta + acc / (static_cast<double>(batch.pnl.size()) * cfg.tail_fraction);
}

double ru_objective_grad(double eta, const ScenarioBatch& batch, const CvarConfig& cfg) {
  require_batch(batch);
  double acc = 0.0;
  for (double p : batch.pnl) {
    const double x = -p - eta;
    acc += cfg.tau_cvar > 0.0 ? softplus_tau_grad(x, cfg.tau_cvar) : (x > 0.0 ? 1.0 : 0.0);
  }
  return 1.0 - acc / (static_cast<double>(batch.pnl.size()) * cfg.tail_fraction);
}

double solve_eta(const ScenarioBatch& batch, const CvarConfig& cfg) {
  require_batch(batch);
  if (!(cfg.tau_cvar > 0.0)) throw InvalidConfig("tau_cvar", "must be positive");
  const auto [lo_it, hi_it] = std::minmax_element(batch.pnl.begin(), batch.pnl.end());
  // h' < 0 well below the smallest loss and h' > 0 well above the largest one.
  double lo = -*hi_it - 50.0 * cfg.tau_cvar;
  double hi = -*lo_it + 50.0 * cfg.tau_cvar;
  double eta = empirical_var(batch, cfg.tail_fraction);

  for (int iter = 0; iter < kMaxEtaIterations; ++iter) {
    const double g = ru_objective_grad(eta, batch, cfg);
    if (std::abs(g) < kEtaGradTol) return eta;
    if (g > 0.0) {
      hi = eta;
    } else {
      lo = eta;
    }
    if (std::nextafter(lo, hi) >= hi) return eta;
    const double curv = ru_objective_curv(eta, batch, cfg);
    double next = curv > 0.0 ? eta - g / curv : lo;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    eta = next;
  }
  std::ostringstream msg;
  msg << "eta search did not converge in " << kMaxEtaIterations << " iterations (N="
      << batch.pnl.size() << ", tau=" << cfg.tau_cvar << ")";
  throw NoConvergence(msg.str());
}

double cvar_smoothed(const ScenarioBatch& batch, const CvarConfig& cfg) {
  return ru_objective(solve_eta(batch, cfg), batch, cfg);
}

double empirical_var(const ScenarioBatch& batch, double alpha) {
  require_batch(batch);
  const std::vector<double> losses = losses_descending(batch);
  const double k = alpha * static_cast<double>(losses.size());
  std::size_t rank = static_cast<std::size_t>(std::ceil(k));
  rank = std::clamp<std::size_t>(rank, 1, losses.size());
  return losses[rank - 1];
}

double empirical_cvar_exact(const ScenarioBatch& batch, double alpha) {
  require_batch(batch);
  const std::vector<double> losses = losses_descending(batch);
  const double k = alpha * static_cast<double>(losses.size());
  if (k <= 1.0) return losses.front();
  const std::size_t full = std::min(static_cast<std::size_t>(std::floor(k)), losses.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < full; ++i) acc += losses[i];
  const double frac = k - static_cast<double>(full);
  if (full < losses.size() && frac > 0.0) acc += frac * losses[full];
  return acc / k;
}

}  // namespace essvi_mm
