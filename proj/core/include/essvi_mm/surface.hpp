#pragma once

// eSSVI total-variance layer.
//
// A slice at maturity T is described by (theta, rho, psi) with phi = psi/sqrt(theta):
//
//   w(k) = theta/2 * (1 + rho*phi*k + sqrt((phi*k + rho)^2 + 1 - rho^2))
//
// Admissible slices satisfy theta > 0, |rho| < 1, 0 <= psi < psi_max(rho) with
// psi_max(rho) = 2/(1+|rho|) - eps_psi (butterfly bound), and the wing cap
// psi*sqrt(theta) = theta*phi <= tau_max.
//
// The slice math is templated on the scalar type so that finite-difference
// oracles can run in extended precision.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace essvi_mm {

struct SurfaceCaps {
  double eps_psi = 1e-3;   // butterfly-bound margin
  double tau_max = 1.0;    // wing cap on theta*phi
  double sigma_min = 1e-4;
  double t_min = 1e-4;
  double eps_rho = 1e-4;   // |rho| <= 1 - eps_rho after squashing or shifting
  double eps_num = 1e-6;   // psi stays this far below psi_max after deformation
  double log_theta_bound = 30.0;  // raw log-theta is saturated to +-bound
};

struct RawEssviSlice {
  double log_theta = 0.0;
  double rho_raw = 0.0;
  double psi_raw = 0.0;
};

template <typename Real>
struct BasicEssviSlice {
  Real theta{};
  Real rho{};
  Real psi{};
  Real phi{};

  friend bool operator==(const BasicEssviSlice&, const BasicEssviSlice&) = default;
};

using EssviSlice = BasicEssviSlice<double>;

template <typename Real>
Real psi_max(Real rho, double eps_psi) {
  using std::abs;
  return Real(2) / (Real(1) + abs(rho)) - Real(eps_psi);
}

template <typename Real>
BasicEssviSlice<Real> make_slice(Real theta, Real rho, Real psi) {
  using std::sqrt;
  return {theta, rho, psi, psi / sqrt(theta)};
}

// g(k; rho, phi) = sqrt((phi k + rho)^2 + 1 - rho^2)
template <typename Real>
Real essvi_g(Real rho, Real phi, Real k) {
  using std::sqrt;
  const Real a = phi * k + rho;
  return sqrt(a * a + (Real(1) - rho * rho));
}

template <typename Real>
Real essvi_total_variance(const BasicEssviSlice<Real>& s, Real k) {
  const Real g = essvi_g(s.rho, s.phi, k);
  return s.theta / Real(2) * (Real(1) + s.rho * s.phi * k + g);
}

// Projects psi onto the wing cap psi*sqrt(theta) <= tau_max. The result satisfies
// the cap exactly in floating point.
template <typename Real>
BasicEssviSlice<Real> apply_wing_cap(BasicEssviSlice<Real> s, const SurfaceCaps& caps) {
  using std::sqrt;
  const Real root_theta = sqrt(s.theta);
  const Real tau = Real(caps.tau_max);
  if (s.psi * root_theta <= tau) return s;
  Real psi = tau / root_theta;
  while (psi * root_theta > tau) psi = std::nextafter(psi, Real(0));
  s.psi = psi;
  s.phi = psi / root_theta;
  return s;
}

// Structured deformation driven by the psi-scale and rho-shift actions.
template <typename Real>
BasicEssviSlice<Real> deform_slice(const BasicEssviSlice<Real>& s, Real psi_scale, Real rho_shift,
                                   const SurfaceCaps& caps) {
  const Real rho_bound = Real(1) - Real(caps.eps_rho);
  const Real rho = std::clamp(s.rho + rho_shift, -rho_bound, rho_bound);
  Real psi = std::min(s.psi * psi_scale, psi_max(rho, caps.eps_psi) - Real(caps.eps_num));
  psi = std::max(psi, Real(0));
  return apply_wing_cap(make_slice(s.theta, rho, psi), caps);
}

template <typename Real>
Real implied_vol(Real w, Real maturity, const SurfaceCaps& caps) {
  using std::sqrt;
  const Real t = std::max(maturity, Real(caps.t_min));
  const Real var = std::max(w, Real(0)) / t;
  return std::max(sqrt(var), Real(caps.sigma_min));
}

EssviSlice reparam(const RawEssviSlice& raw, const SurfaceCaps& caps);

bool is_admissible(const EssviSlice& s, const SurfaceCaps& caps);

struct EssviSurface {
  std::vector<double> maturities;
  std::vector<EssviSlice> slices;

  std::size_t size() const { return slices.size(); }
  // Throws InvalidGrid when maturities are not strictly increasing and positive
  // or the slice count does not match.
  void validate() const;
};

EssviSurface deform(const EssviSurface& surface, double psi_scale, double rho_shift,
                    const SurfaceCaps& caps);

struct EssviPartials {
  double dw_dtheta = 0.0;
  double dw_drho = 0.0;
  double dw_dphi = 0.0;
};

EssviPartials essvi_partials(const EssviSlice& s, double k);

struct ActionPartials {
  double dw_drho_shift = 0.0;
  double dw_dpsi_scale = 0.0;
};

// Chain-rule partials of the deformed total variance w.r.t. the two shape
// actions. Throws ClampActive if any clamp or the wing cap binds at the
// evaluation point.
ActionPartials action_partials(const EssviSlice& pre_deform, double psi_scale, double rho_shift,
                               double k, const SurfaceCaps& caps);

}  // namespace essvi_mm
