#pragma once

#include <cmath>

#include "unicornn/common.hpp"

namespace unicornn {

// Gate that modulates the nominal time step: sigma_hat(u) = 0.5 + 0.5*tanh(u/2),
// i.e. the logistic sigmoid. Strictly in (0,1).
inline double sigma_hat(double u) { return 0.5 + 0.5 * std::tanh(0.5 * u); }

inline Arr sigma_hat(const Arr& u) { return 0.5 + 0.5 * (0.5 * u).tanh(); }

// d/du sigma_hat = sigma_hat * (1 - sigma_hat)
inline Arr dsigma_hat(const Arr& u) {
  Arr s = sigma_hat(u);
  return s * (1.0 - s);
}

// log(cosh(a)) without overflow for large |a|
inline double log_cosh(double a) {
  const double t = std::abs(a);
  return t - std::log(2.0) + std::log1p(std::exp(-2.0 * t));
}

}  // namespace unicornn
