// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

namespace invclr {

/// Independent purposes that draw random numbers. Keeping them apart means,
/// e.g., turning the penalty on does not perturb the views a run sees.
enum class Stream : std::uint64_t {
  kFactors = 1,
  kEvalNuisance = 2,
  kView = 3,
  kPenalty = 4,
  kShuffle = 5,
  kInit = 6,
  kFeatureAvg = 7,
  kCondvar = 8,
  kTest = 9,
};

/// Counter-based generator: the sequence is a pure function of
/// (seed, stream, a, b), so any sample can be regenerated in isolation.
class Rng {
 public:
  Rng(std::uint64_t seed, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double low, double high) { return low + (high - low) * uniform(); }
  bool bernoulli(double p) { return uniform() < p; }
  /// +1 or -1 with equal probability.
  double rademacher() { return (next_u64() >> 63) ? 1.0 : -1.0; }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t state_;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace invclr
