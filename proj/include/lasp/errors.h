// Copyright 2026 The LASP Authors.
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

#ifndef LASP_ERRORS_H_
#define LASP_ERRORS_H_

#include <stdexcept>
#include <string>

namespace lasp {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes are incompatible.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A scalar parameter is outside its admissible range (e.g. decay rate).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Sequence, world or head counts do not divide as required.
class PartitionError : public Error {
 public:
  using Error::Error;
};

// Operation invoked out of order, e.g. backward before forward.
class StateError : public Error {
 public:
  using Error::Error;
};

// Point-to-point message missing or malformed.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Non-finite values encountered.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed file or trace record.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace lasp

#endif  // LASP_ERRORS_H_
