// Copyright 2026 The xregion Authors.
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

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace xregion {

// Dense storage used throughout. Row-major so that entity rows are contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Dense 0-based indexes into a region's user / POI tables.
using UserIndex = std::int32_t;
using PoiIndex = std::int32_t;

enum class RegionTag { kSource, kTarget };

inline const char* to_string(RegionTag tag) {
  return tag == RegionTag::kSource ? "source" : "target";
}

// Runtime failure (exit code 1 at the CLI).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or usage (exit code 2 at the CLI).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Numerical blow-up during training or evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace xregion
