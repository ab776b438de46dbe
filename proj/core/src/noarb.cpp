#include "essvi_mm/noarb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "essvi_mm/errors.hpp"
#include "essvi_mm/pricing.hpp"

namespace essvi_mm {

double softplus_tau(double x, double tau) {
  const double u = x / tau;
  return tau * (std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u))));
}

double softplus_tau_grad(double x, double tau) {
  const double u = x / tau;
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

double PenaltyConfig::hinge(double x) const {
  if (hard_hinge) return std::max(x, 0.0);
  return softplus_tau(x - hinge_shift * tau_arb, tau_arb);
}

double PriceLattice::strike_step() const {
  return (strikes.back() - strikes.front()) / static_cast<double>(strikes.size() - 1);
}

void PriceLattice::validate() const {
  if (prices.rows() != static_cast<Eigen::Index>(maturities.size()) ||
      prices.cols() != static_cast<Eigen::Index>(strikes.size())) {
    throw InvalidGrid("price matrix shape does not match the lattice axes");
  }
  for (std::size_t m = 1; m < maturities.size(); ++m) {
    if (!(maturities[m] > maturities[m - 1])) {
      throw InvalidGrid("lattice maturities must be strictly increasing");
    }
  }
  if (strikes.size() < 2) return;
  const double dk = strike_step();
  for (std::size_t j = 1; j < strikes.size(); ++j) {
    const double step = strikes[j] - strikes[j - 1];
    if (!(step > 0.0)) throw InvalidGrid("lattice strikes must be strictly increasing");
    if (std::abs(step - dk) > 1e-9 * std::max(std::abs(dk), strikes[j])) {
      throw InvalidGrid("lattice strikes must be evenly spaced");
    }
  }
}

PenaltyResult bf_penalty(const PriceLattice& lat, const PenaltyConfig& cfg) {
  if (lat.strikes.size() < 3) throw GridTooSmall("butterfly penalty needs at least 3 strikes");
  if (lat.maturities.empty()) throw GridTooSmall("butterfly penalty needs a maturity");
  lat.validate();
  const double dk = lat.strike_step();
  const double dk2 = dk * dk;
  const Eigen::Index n = lat.prices.cols();

  PenaltyResult out;
  out.parts.reserve(lat.maturities.size());
  for (Eigen::Index m = 0; m < lat.prices.rows(); ++m) {
    const auto row = lat.prices.row(m);
    const double level = row.cwiseAbs().mean() + cfg.eps_norm;
    double acc = 0.0;
    for (Eigen::Index j = 1; j + 1 < n; ++j) {
      const double d2 = (row(j + 1) - 2.0 * row(j) + row(j - 1)) / dk2;
      acc += cfg.hinge(-d2);
    }
    out.parts.push_back(acc / static_cast<double>(n - 2) / level);
  }
  for (double p : out.parts) out.value += p;
  out.value /= static_cast<double>(out.parts.size());
  return out;
}

PenaltyResult cal_penalty(const PriceLattice& lat, const PenaltyConfig& cfg) {
  if (lat.maturities.size() < 2) throw GridTooSmall("calendar penalty needs at least 2 maturities");
  if (lat.strikes.empty()) throw GridTooSmall("calendar penalty needs a strike");
  lat.validate();
  const Eigen::Index n = lat.prices.cols();

  PenaltyResult out;
  out.parts.reserve(lat.maturities.size() - 1);
  for (Eigen::Index m = 0; m + 1 < lat.prices.rows(); ++m) {
    const auto near = lat.prices.row(m);
    const auto far = lat.prices.row(m + 1);
    const double level =
        0.5 * (near.cwiseAbs().mean() + far.cwiseAbs().mean()) + cfg.eps_norm;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) acc += cfg.hinge(near(j) - far(j));
    out.parts.push_back(acc / static_cast<double>(n) / level);
  }
  for (double p : out.parts) out.value += p;
  out.value /= static_cast<double>(out.parts.size());
  return out;
}

double shape_penalty(const EssviSurface& surface) {
  if (surface.size() < 2) throw GridTooSmall("shape penalty needs at least 2 maturities");
  double acc = 0.0;
  for (std::size_t m = 1; m < surface.size(); ++m) {
    const EssviSlice& a = surface.slices[m - 1];
    const EssviSlice& b = surface.slices[m];
    const double dt = b.theta - a.theta;
    const double dr = b.rho - a.rho;
    const double dp = b.psi - a.psi;
    acc += dt * dt + dr * dr + dp * dp;
  }
  return acc / static_cast<double>(surface.size() - 1);
}

namespace {

// Prices are differences of terms of size ~strike, so absolute rounding error
// per price is a few ulps of the largest strike.
double price_noise(const PriceLattice& lat) {
  const double k_max = lat.strikes.empty() ? 1.0 : lat.strikes.back();
  const double c_max = lat.prices.size() == 0 ? 0.0 : lat.prices.cwiseAbs().maxCoeff();
  return 16.0 * std::numeric_limits<double>::epsilon() * std::max(k_max, c_max);
}

double min_level(const PriceLattice& lat) {
  double lo = std::numeric_limits<double>::infinity();
  for (Eigen::Index m = 0; m < lat.prices.rows(); ++m) {
    lo = std::min(lo, lat.prices.row(m).cwiseAbs().mean());
  }
  return std::max(lo, std::numeric_limits<double>::min());
}

}  // namespace

double bf_rounding_floor(const PriceLattice& lat) {
  const double dk = lat.strikes.size() >= 2 ? lat.strike_step() : 1.0;
  return 4.0 * price_noise(lat) / (dk * dk) / min_level(lat);
}

double cal_rounding_floor(const PriceLattice& lat) {
  return 2.0 * price_noise(lat) / min_level(lat);
}

std::vector<double> even_strikes(double spot, double k_min, double k_max, int n) {
  if (n < 2) throw InvalidGrid("strike lattice needs at least 2 points");
  const double lo = spot * std::exp(k_min);
  const double hi = spot * std::exp(k_max);
  std::vector<double> out(static_cast<std::size_t>(n));
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] = lo + step * j;
  out.back() = hi;
  return out;
}

PriceLattice surface_lattice(const EssviSurface& surface, double spot,
                             const std::vector<double>& strikes, const SurfaceCaps& caps) {
  PriceLattice lat;
  lat.strikes = strikes;
  lat.maturities = surface.maturities;
  lat.prices.resize(static_cast<Eigen::Index>(surface.size()),
                    static_cast<Eigen::Index>(strikes.size()));
  for (std::size_t m = 0; m < surface.size(); ++m) {
    const double t = surface.maturities[m];
    for (std::size_t j = 0; j < strikes.size(); ++j) {
      const double k = std::log(strikes[j] / spot);
      const double w = essvi_total_variance(surface.slices[m], k);
      const double vol = implied_vol(w, t, caps);
      lat.prices(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(j)) =
          bs_call(BsQuoteInputs{spot, strikes[j], std::max(t, caps.t_min), vol});
    }
  }
  return lat;
}

}  // namespace essvi_mm
