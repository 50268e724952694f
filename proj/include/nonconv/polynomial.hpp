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

#include <cmath>
#include <cstddef>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "nonconv/error.hpp"

namespace nonconv {

/// h * x_1^s_1 ... x_l^s_l.
struct Monomial {
  std::vector<double> exponents;
  double coefficient = 1.0;

  std::size_t arity() const noexcept { return exponents.size(); }

  bool integral() const noexcept {
    for (double s : exponents)
      if (s != std::floor(s)) return false;
    return true;
  }

  /// Variables (1-based) that carry a positive exponent.
  std::vector<int> support() const {
    std::vector<int> out;
    for (std::size_t j = 0; j < exponents.size(); ++j)
      if (exponents[j] > 0.0) out.push_back(static_cast<int>(j + 1));
    return out;
  }

  /// g(x) = prod x_j^s_j, without the coefficient.
  template <class Vec>
  double evaluate(const Vec& x) const {
    double v = 1.0;
    for (std::size_t j = 0; j < exponents.size(); ++j) {
      const double s = exponents[j];
      if (s == 0.0) continue;
      v *= ipow(x[j], s);
    }
    return v;
  }

  static double ipow(double x, double s) noexcept {
    if (s == 1.0) return x;
    if (s == 2.0) return x * x;
    if (s == std::floor(s) && s <= 64.0) {
      unsigned n = static_cast<unsigned>(s);
      double r = 1.0, b = x;
      while (n) {
        if (n & 1u) r *= b;
        b *= b;
        n >>= 1u;
      }
      return r;
    }
    return std::pow(x, s);
  }

  void validate(bool nonnegativeVariables = false) const {
    bool any = false;
    for (double s : exponents) {
      if (!(s >= 0.0) || !std::isfinite(s))
        throw InvalidArgument("Monomial: exponents must be finite and >= 0");
      if (s > 0.0) any = true;
      if (s != std::floor(s) && !nonnegativeVariables)
        throw InvalidArgument(
            "Monomial: non-integer exponent requires nonnegative variables");
    }
    if (!any) throw InvalidArgument("Monomial: at least one exponent must be > 0");
    if (!(coefficient != 0.0) || !std::isfinite(coefficient))
      throw InvalidArgument("Monomial: coefficient must be finite and nonzero");
  }

  friend bool operator==(const Monomial&, const Monomial&) = default;
};

/// F = sum over terms of h_theta g_theta.
struct Polynomial {
  std::size_t arity = 1;
  std::vector<Monomial> terms;
  bool nonnegativeVariables = false;

  static Polynomial make(std::size_t arity, std::vector<Monomial> terms,
                         bool nonnegativeVariables = false) {
    Polynomial p{arity, std::move(terms), nonnegativeVariables};
    p.validate();
    return p;
  }

  /// x_1 + ... + x_l.
  static Polynomial linear(std::size_t arity) {
    std::vector<Monomial> t;
    for (std::size_t j = 0; j < arity; ++j) {
      Monomial m{std::vector<double>(arity, 0.0), 1.0};
      m.exponents[j] = 1.0;
      t.push_back(m);
    }
    return make(arity, std::move(t));
  }

  void validate() const {
    if (arity == 0) throw InvalidArgument("Polynomial: arity must be >= 1");
    if (terms.empty()) throw InvalidArgument("Polynomial: no terms");
    std::set<std::vector<double>> seen;
    for (const auto& m : terms) {
      if (m.arity() != arity)
        throw InvalidArgument("Polynomial: exponent vector length != arity");
      m.validate(nonnegativeVariables);
      if (!seen.insert(m.exponents).second)
        throw InvalidArgument("Polynomial: duplicate exponent vector");
    }
  }

  template <class Vec>
  double evaluate(const Vec& x) const {
    double v = 0.0;
    for (const auto& m : terms) v += m.coefficient * m.evaluate(x);
    return v;
  }
};

inline std::string to_string(const Monomial& m) {
  std::string s;
  for (std::size_t j = 0; j < m.exponents.size(); ++j) {
    if (m.exponents[j] == 0.0) continue;
    if (!s.empty()) s += "*";
    s += "x" + std::to_string(j + 1);
    if (m.exponents[j] != 1.0) {
      double e = m.exponents[j];
      s += "^" + (e == std::floor(e) ? std::to_string(static_cast<long long>(e))
                                     : std::to_string(e));
    }
  }
  return s;
}

inline std::ostream& operator<<(std::ostream& os, const Monomial& m) {
  return os << m.coefficient << "*" << to_string(m);
}

}  // namespace nonconv
