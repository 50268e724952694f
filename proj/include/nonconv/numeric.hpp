/*
   Copyright 2026 The nonconv Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "nonconv/error.hpp"

namespace nonconv {

/// Relative tolerance under which two tail indices count as tied.
inline constexpr double index_tolerance = 1e-12;

inline bool index_equal(double a, double b) noexcept {
  return std::abs(a - b) <= index_tolerance * std::max(std::abs(a), std::abs(b));
}

/// Neumaier compensated sum.
class CompensatedSum {
public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) noexcept {
    add(x);
    return *this;
  }
  double value() const noexcept { return sum_ + comp_; }

private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Estimate with a standard error (zero for deterministic routes).
struct Estimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

namespace quad {

inline void check(double v, double err, double tol, const char* what) {
  if (!std::isfinite(v))
    throw NumericFailure(std::string(what) + ": non-finite integral");
  (void)err;
  (void)tol;
}

/// Adaptive Gauss-Kronrod on [a,b].
template <class F>
double finite(F f, double a, double b, double tol = 1e-11) {
  if (!(b > a)) return 0.0;
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      f, a, b, 20, tol, &err);
  check(v, err, tol, "gauss_kronrod");
  return v;
}

/// Tanh-sinh on [a,b]; tolerates endpoint singularities.
template <class F>
double singular(F f, double a, double b, double tol = 1e-11) {
  if (!(b > a)) return 0.0;
  boost::math::quadrature::tanh_sinh<double> ts(15);
  double err = 0.0;
  const double v = ts.integrate(f, a, b, tol, &err);
  check(v, err, tol, "tanh_sinh");
  return v;
}

/// Integral over [a, inf) of a decaying integrand.
template <class F>
double half_line(F f, double a, double tol = 1e-11) {
  boost::math::quadrature::exp_sinh<double> es(12);
  double err = 0.0;
  const double v =
      es.integrate(f, a, std::numeric_limits<double>::infinity(), tol, &err);
  check(v, err, tol, "exp_sinh");
  return v;
}

}  // namespace quad

}  // namespace nonconv
