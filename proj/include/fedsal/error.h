// Copyright 2026 The fedsal Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#pragma once

#include <stdexcept>
#include <string>

namespace fedsal {

// Violated precondition or inconsistent arguments (shape mismatch, bad index,
// out-of-range hyperparameter).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A primitive produced a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A client partition has no samples to split or train on.
class EmptyClientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed configuration or data file; the message names the field.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define FEDSAL_CHECK(cond, msg)                                  \
  do {                                                           \
    if (!(cond)) throw ::fedsal::ContractError(std::string(msg)); \
  } while (0)

}  // namespace fedsal
