/*
 * Copyright 2026 The SCALA-SFL Authors.
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

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace scala {

using Rng = std::mt19937_64;

/// Independent random streams derived from one master seed. Each component
/// draws from its own stream, so adding a consumer never perturbs the others.
enum class Stream : std::uint64_t {
  kSynthTrain = 1,
  kSynthTest = 2,
  kClassMeans = 3,
  kPartition = 4,
  kInit = 5,
  kParticipation = 6,
  kMinibatch = 7,
  kTheory = 8,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based derivation: (master, stream, index) -> seed.
std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
  return Rng(derive_seed(master, stream, index));
}

}  // namespace scala
