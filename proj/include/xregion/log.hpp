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

#include <spdlog/spdlog.h>

namespace xregion {

// Diagnostics go to stderr through spdlog; structured training records are
// written separately (see TrainingLog).
inline spdlog::logger& logger() {
  static auto instance = [] {
    auto l = spdlog::default_logger();
    l->set_pattern("[%l] %v");
    return l;
  }();
  return *instance;
}

}  // namespace xregion
