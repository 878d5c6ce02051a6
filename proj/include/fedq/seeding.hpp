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

#ifndef FEDQ_SEEDING_HPP_
#define FEDQ_SEEDING_HPP_

#include <cstdint>
#include <initializer_list>

namespace fedq {

/// SplitMix64 finalizer; a bijective avalanche mix of one 64-bit word.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed from a parent seed and a path of integer labels.
constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(seed);
  for (std::uint64_t label : path) h = mix64(h ^ mix64(label + 0x632be59bd9b4e019ULL));
  return h;
}

/// Uniform double in [0, 1) from the top 53 bits.
constexpr double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Stream labels keep sub-seeds for different purposes apart.
inline constexpr std::uint64_t kMazeStream = 0x6d617a65;    // "maze"
inline constexpr std::uint64_t kRewardStream = 0x72657764;  // "rewd"
inline constexpr std::uint64_t kSampleStream = 0x73616d70;  // "samp"
inline constexpr std::uint64_t kRepeatStream = 0x72657074;  // "rept"

}  // namespace fedq

#endif  // FEDQ_SEEDING_HPP_
