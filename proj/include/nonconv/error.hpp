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

#include <stdexcept>
#include <string>

namespace nonconv {

/// Thrown when an input violates a documented invariant.
class InvalidArgument : public std::invalid_argument {
public:
  explicit InvalidArgument(const std::string& what)
      : std::invalid_argument(what) {}
};

/// A fractional moment of order >= alpha was requested.
class UndefinedMoment : public std::domain_error {
public:
  explicit UndefinedMoment(const std::string& what)
      : std::domain_error(what) {}
};

/// Quadrature, root finding or a simulation produced something unusable.
class NumericFailure : public std::runtime_error {
public:
  explicit NumericFailure(const std::string& what)
      : std::runtime_error(what) {}
};

/// File system trouble.
class IoFailure : public std::runtime_error {
public:
  explicit IoFailure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace nonconv
