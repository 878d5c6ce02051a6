// Copyright 2026 The fedq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FEDQ_ERRORS_HPP_
#define FEDQ_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace fedq {

/// Invalid user-supplied configuration: shapes, probabilities, stepsizes.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of a closed-form routine.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An iterative method failed to reach its tolerance.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// A runtime identity or invariant check failed during a verified run.
class VerificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A verifier was asked to check an identity outside its stated hypotheses.
class UnsupportedIdentityError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace fedq

#endif  // FEDQ_ERRORS_HPP_
