#pragma once

// Static no-arbitrage surrogates on a call-price lattice and the shape penalty.

#include <Eigen/Dense>
#include <vector>

#include "essvi_mm/surface.hpp"

namespace essvi_mm {

// tau * log(1 + exp(x / tau)), evaluated without overflow.
double softplus_tau(double x, double tau);
// Derivative of softplus_tau with respect to x.
double softplus_tau_grad(double x, double tau);

struct PenaltyConfig {
  double tau_arb = 1e-3;
  double eps_norm = 1e-8;
  bool hard_hinge = false;
  // The soft hinge is softplus_tau(x - hinge_shift * tau_arb). A shift of zero gives
  // the plain softplus, whose value at x = 0 is tau * log 2.
  double hinge_shift = 10.0;

  double hinge(double x) const;
};

struct PriceLattice {
  std::vector<double> strikes;
  std::vector<double> maturities;
  Eigen::MatrixXd prices;  // rows: maturities, cols: strikes

  double strike_step() const;
  // Throws InvalidGrid on shape mismatch, non-increasing axes or uneven strikes.
  void validate() const;
};

struct PenaltyResult {
  double value = 0.0;
  std::vector<double> parts;  // per maturity (BF) or per adjacent pair (CAL)
};

PenaltyResult bf_penalty(const PriceLattice& lat, const PenaltyConfig& cfg);
PenaltyResult cal_penalty(const PriceLattice& lat, const PenaltyConfig& cfg);
double shape_penalty(const EssviSurface& surface);

// Level of rounding noise in the normalized second differences / adjacent
// differences of a lattice computed in double precision.
double bf_rounding_floor(const PriceLattice& lat);
double cal_rounding_floor(const PriceLattice& lat);

// n strikes evenly spaced over [spot * e^k_min, spot * e^k_max].
std::vector<double> even_strikes(double spot, double k_min, double k_max, int n);

// Call prices of an eSSVI surface at the given strikes and the surface's maturities.
PriceLattice surface_lattice(const EssviSurface& surface, double spot,
                             const std::vector<double>& strikes, const SurfaceCaps& caps);

}  // namespace essvi_mm
