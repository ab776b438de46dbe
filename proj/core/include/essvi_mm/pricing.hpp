#pragma once

// Black-Scholes call prices and Greeks with zero rate and carry.

#include <cmath>
#include <numbers>

namespace essvi_mm {

template <typename Real>
Real norm_cdf(Real x) {
  using std::erfc;
  return Real(0.5) * erfc(-x / std::numbers::sqrt2_v<Real>);
}

template <typename Real>
Real norm_pdf(Real x) {
  using std::exp;
  return exp(Real(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<Real> /
         std::numbers::sqrt2_v<Real>;
}

template <typename Real>
struct BasicBsQuoteInputs {
  Real spot{};
  Real strike{};
  Real maturity{};
  Real vol{};
};

using BsQuoteInputs = BasicBsQuoteInputs<double>;

template <typename Real>
struct BsD {
  Real d_plus;
  Real d_minus;
  Real vol_root_t;
};

template <typename Real>
BsD<Real> bs_d(const BasicBsQuoteInputs<Real>& in) {
  using std::log;
  using std::sqrt;
  const Real s = in.vol * sqrt(in.maturity);
  const Real m = log(in.spot / in.strike);
  const Real d_plus = (m + Real(0.5) * s * s) / s;
  return {d_plus, d_plus - s, s};
}

template <typename Real>
Real bs_call(const BasicBsQuoteInputs<Real>& in) {
  const BsD<Real> d = bs_d(in);
  return in.spot * norm_cdf(d.d_plus) - in.strike * norm_cdf(d.d_minus);
}

template <typename Real>
struct BasicBsGreeks {
  Real delta{};
  Real vega{};   // dC/dsigma
  Real vanna{};  // d2C/(dS dsigma)
  Real volga{};  // d2C/dsigma2
};

using BsGreeks = BasicBsGreeks<double>;

template <typename Real>
BasicBsGreeks<Real> bs_greeks(const BasicBsQuoteInputs<Real>& in) {
  using std::sqrt;
  const BsD<Real> d = bs_d(in);
  const Real pdf = norm_pdf(d.d_plus);
  BasicBsGreeks<Real> g;
  g.delta = norm_cdf(d.d_plus);
  g.vega = in.spot * sqrt(in.maturity) * pdf;
  g.vanna = -pdf * d.d_minus / in.vol;
  g.volga = g.vega * d.d_plus * d.d_minus / in.vol;
  return g;
}

}  // namespace essvi_mm
