#pragma once

// Test-side helpers: central finite differences over f64 tensors and small random fixtures.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mvalign/rng.hpp"
#include "mvalign/tensor.hpp"

namespace mvtest {

using mvalign::Rng;
using mvalign::Shape;
using mvalign::TensorD;

inline TensorD rand_t(Shape s, Rng& rng, bool grad = true, double lo = -1.0, double hi = 1.0) {
  return TensorD::uniform(std::move(s), lo, hi, rng, grad);
}

/// Relative error of the analytic gradient of `loss` against central differences with
/// step h, per parameter tensor: max|g − n| / max(max|g|, max|n|). Returns the worst tensor.
/// `coords` > 0 checks only that many evenly spaced coordinates per tensor.
inline double fd_rel_error(const std::function<TensorD()>& loss, const std::vector<TensorD*>& params,
                           double h = 1e-3, std::size_t coords = 0) {
  mvalign::Tape<double> tape;
  {
    mvalign::Tape<double>::Scope scope(tape);
    for (auto* p : params) {
      p->set_requires_grad(true);
      p->mutable_grad();
      p->zero_grad();
    }
    const auto l = loss();
    mvalign::backward(l, tape);
  }
  double worst = 0.0;
  for (auto* p : params) {
    const std::vector<double> analytic(p->grad().begin(), p->grad().end());
    const std::size_t n = p->numel();
    const std::size_t stride = coords == 0 || coords >= n ? 1 : n / coords;
    double num_max = 0.0, ana_max = 0.0, err = 0.0;
    for (std::size_t i = 0; i < n; i += stride) {
      auto data = p->mutable_data();
      const double x0 = data[i];
      double lp = 0, lm = 0;
      {
        mvalign::NoGradScope<double> off;
        data[i] = x0 + h;
        lp = loss().item();
        data[i] = x0 - h;
        lm = loss().item();
        data[i] = x0;
      }
      const double num = (lp - lm) / (2 * h);
      num_max = std::max(num_max, std::abs(num));
      ana_max = std::max(ana_max, std::abs(analytic[i]));
      err = std::max(err, std::abs(num - analytic[i]));
    }
    const double scale = std::max(num_max, ana_max);
    if (scale > 0.0) worst = std::max(worst, err / scale);
  }
  return worst;
}

}  // namespace mvtest
