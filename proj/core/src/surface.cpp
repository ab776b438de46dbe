#include "essvi_mm/surface.hpp"

#include <cmath>
#include <sstream>

#include "essvi_mm/errors.hpp"

namespace essvi_mm {

namespace {

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

EssviSlice reparam(const RawEssviSlice& raw, const SurfaceCaps& caps) {
  const double log_theta = std::clamp(raw.log_theta, -caps.log_theta_bound, caps.log_theta_bound);
  const double theta = std::exp(log_theta);
  const double rho_bound = 1.0 - caps.eps_rho;
  const double rho = std::clamp(std::tanh(raw.rho_raw), -rho_bound, rho_bound);
  const double cap = psi_max(rho, caps.eps_psi);
  const double psi = std::min(cap * logistic(raw.psi_raw), cap - caps.eps_num);
  return apply_wing_cap(make_slice(theta, rho, std::max(psi, 0.0)), caps);
}

bool is_admissible(const EssviSlice& s, const SurfaceCaps& caps) {
  if (!std::isfinite(s.theta) || !std::isfinite(s.rho) || !std::isfinite(s.psi) ||
      !std::isfinite(s.phi)) {
    return false;
  }
  if (!(s.theta > 0.0) || !(std::abs(s.rho) < 1.0)) return false;
  if (!(s.psi >= 0.0) || !(s.psi < psi_max(s.rho, caps.eps_psi))) return false;
  return s.psi * std::sqrt(s.theta) <= caps.tau_max;
}

void EssviSurface::validate() const {
  if (maturities.size() != slices.size()) {
    std::ostringstream msg;
    msg << "surface has " << maturities.size() << " maturities but " << slices.size()
        << " slices";
    throw InvalidGrid(msg.str());
  }
  for (std::size_t m = 0; m < maturities.size(); ++m) {
    if (!(maturities[m] > 0.0)) throw InvalidGrid("maturities must be positive");
    if (m > 0 && !(maturities[m] > maturities[m - 1])) {
      throw InvalidGrid("maturities must be strictly increasing");
    }
  }
}

EssviSurface deform(const EssviSurface& surface, double psi_scale, double rho_shift,
                    const SurfaceCaps& caps) {
  EssviSurface out;
  out.maturities = surface.maturities;
  out.slices.reserve(surface.size());
  for (const auto& s : surface.slices) {
    out.slices.push_back(deform_slice(s, psi_scale, rho_shift, caps));
  }
  return out;
}

EssviPartials essvi_partials(const EssviSlice& s, double k) {
  const double g = essvi_g(s.rho, s.phi, k);
  const double phik = s.phi * k;
  EssviPartials p;
  p.dw_dtheta = 0.5 * (1.0 + s.rho * phik + g);
  p.dw_drho = 0.5 * s.theta * phik * (1.0 + 1.0 / g);
  p.dw_dphi = 0.5 * s.theta * (s.rho * k + (phik + s.rho) * k / g);
  return p;
}

ActionPartials action_partials(const EssviSlice& pre, double psi_scale, double rho_shift,
                               double k, const SurfaceCaps& caps) {
  const double rho_bound = 1.0 - caps.eps_rho;
  const double shifted = pre.rho + rho_shift;
  if (std::abs(shifted) >= rho_bound) {
    throw ClampActive("rho clamp active after rho-shift");
  }
  const double psi_cap = psi_max(shifted, caps.eps_psi) - caps.eps_num;
  const double scaled = pre.psi * psi_scale;
  if (scaled >= psi_cap) throw ClampActive("psi re-projection active after psi-scale");
  if (scaled * std::sqrt(pre.theta) >= caps.tau_max) throw ClampActive("wing cap active");

  const EssviSlice deformed = deform_slice(pre, psi_scale, rho_shift, caps);
  const EssviPartials p = essvi_partials(deformed, k);
  return {p.dw_drho, p.dw_dphi * pre.phi};
}

}  // namespace essvi_mm
