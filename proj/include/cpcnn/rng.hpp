// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cpcnn {

std::uint64_t splitmix64(std::uint64_t x);

/// Seed for a named sub-stream (`synth`, `init`, `train`, ...) of a run seed.
/// `index` separates per-item streams, e.g. one per scene.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

inline std::mt19937_64 make_stream(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0) {
  return std::mt19937_64(derive_seed(seed, stream, index));
}

}  // namespace cpcnn
