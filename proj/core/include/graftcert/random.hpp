#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace graftcert {

// Derives an independent, reproducible seed for a named substream of a run
// seed ("data", "pgd", "init", ...), so stages can be rerun in isolation.
std::uint64_t substream_seed(std::uint64_t run_seed, std::string_view name);

inline std::mt19937_64 make_rng(std::uint64_t run_seed, std::string_view name) {
  return std::mt19937_64(substream_seed(run_seed, name));
}

// 64-bit FNV-1a over raw bytes; stable across platforms and runs.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace graftcert
