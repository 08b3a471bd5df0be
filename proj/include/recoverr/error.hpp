/*
 * Copyright 2026 The recoverr Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef RECOVERR_ERROR_HPP_
#define RECOVERR_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace recoverr {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Fitting data lacks the variety needed (e.g. only one label class).
class DegenerateData : public Error {
 public:
  using Error::Error;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class Unsupported : public Error {
 public:
  using Error::Error;
};

class ComparisonError : public Error {
 public:
  using Error::Error;
};

// Failure talking to a model backend (network, timeout, bad status).
// Recovery treats these as fail-closed.
class TransportError : public Error {
 public:
  using Error::Error;
};

// The backend cannot provide what the caller needs (e.g. no log-probs).
// Never swallowed by fail-closed handling.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace recoverr

#endif  // RECOVERR_ERROR_HPP_
