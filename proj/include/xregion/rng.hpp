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
#include <initializer_list>
#include <random>
#include <string_view>

namespace xregion {

// splitmix64 finalizer; used to derive independent seeds from a root seed.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// A named random stream. Every draw site derives its own engine from the
// stream seed plus a tuple of indices (epoch, step, node, ...), so results do
// not depend on call order and resuming mid-run reproduces the same draws.
class SeedStream {
 public:
  SeedStream() = default;
  SeedStream(std::uint64_t root, std::string_view name)
      : seed_(mix64(root ^ hash_name(name))) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t derive(std::initializer_list<std::uint64_t> keys) const {
    std::uint64_t s = seed_;
    for (std::uint64_t k : keys) s = mix64(s ^ mix64(k + 0x632be59bd9b4e019ULL));
    return s;
  }

  std::mt19937_64 engine(std::initializer_list<std::uint64_t> keys) const {
    return std::mt19937_64(derive(keys));
  }

 private:
  std::uint64_t seed_ = 0;
};

// All randomness of a run flows from one root seed through these streams.
struct SeedStreams {
  explicit SeedStreams(std::uint64_t root = 0)
      : init(root, "init"),
        negatives(root, "negatives"),
        sampler(root, "sampler"),
        batches(root, "batches"),
        kmeans(root, "kmeans"),
        generator(root, "generator") {}

  SeedStream init;
  SeedStream negatives;
  SeedStream sampler;
  SeedStream batches;
  SeedStream kmeans;
  SeedStream generator;
};

}  // namespace xregion
