// Copyright 2026 The deltattr Authors
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

#ifndef DELTATTR_COALITION_HPP
#define DELTATTR_COALITION_HPP

#include <bit>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "deltattr/core.hpp"
#include "deltattr/rng.hpp"

namespace deltattr {

// Bitmask-indexed memo of coalition values v(A). Each distinct coalition is
// evaluated at most once; the counter reports how many evaluations actually
// happened. Dense storage bounds the player count: 2^(n+?) doubles.
class CoalitionCache {
 public:
  static constexpr int kMaxPlayers = 26;

  CoalitionCache(int num_players, std::function<double(std::uint64_t)> eval)
      : num_players_(num_players), eval_(std::move(eval)) {
    if (num_players < 1 || num_players > kMaxPlayers) {
      throw ValidationError("coalition cache supports 1.." +
                            std::to_string(kMaxPlayers) + " players, got " +
                            std::to_string(num_players));
    }
    values_.resize(std::size_t{1} << num_players, 0.0);
    known_.resize(std::size_t{1} << num_players, false);
  }

  double value(std::uint64_t mask) {
    if (!known_[mask]) {
      values_[mask] = eval_(mask);
      known_[mask] = true;
      ++evaluations_;
    }
    return values_[mask];
  }

  int num_players() const { return num_players_; }
  std::uint64_t full_mask() const {
    return (std::uint64_t{1} << num_players_) - 1;
  }
  std::size_t evaluations() const { return evaluations_; }

 private:
  int num_players_;
  std::function<double(std::uint64_t)> eval_;
  std::vector<double> values_;
  std::vector<bool> known_;
  std::size_t evaluations_ = 0;
};

// Shapley ordering weights 1/(n * C(n-1, k)) for a coalition of size k joined
// by one more player, n players total.
inline std::vector<double> shapley_subset_weights(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  double binom = 1.0;  // C(n-1, k)
  for (int k = 0; k < n; ++k) {
    w[static_cast<std::size_t>(k)] = 1.0 / (n * binom);
    binom = binom * (n - 1 - k) / (k + 1);
  }
  return w;
}

// Exact Shapley values by subset enumeration. Credits accumulate over the
// pairs (A, A u {i}) so that a player whose marginals are all exactly zero
// gets an exactly zero credit. Costs at most 2^n evaluations through the
// cache.
inline std::vector<double> exact_shapley(CoalitionCache& cache) {
  const int n = cache.num_players();
  const std::vector<double> w = shapley_subset_weights(n);
  std::vector<double> phi(static_cast<std::size_t>(n), 0.0);
  const std::uint64_t full = cache.full_mask();
  for (int i = 0; i < n; ++i) {
    const std::uint64_t bit = std::uint64_t{1} << i;
    const std::uint64_t others = full & ~bit;
    // Enumerate subsets A of the other players (standard subset walk).
    std::uint64_t a = 0;
    for (;;) {
      const int k = std::popcount(a);
      const double marginal = cache.value(a | bit) - cache.value(a);
      phi[static_cast<std::size_t>(i)] += w[static_cast<std::size_t>(k)] * marginal;
      if (a == others) break;
      a = (a - others) & others;
    }
  }
  return phi;
}

struct SampledShapley {
  std::vector<double> mean;
  std::vector<double> std_error;
  std::uint64_t permutations = 0;
};

// Monte-Carlo Shapley over uniformly random player orderings. Works for any
// player count; the membership vector marks who already switched foreground.
// Marginals per ordering telescope from v(empty) to v(full), so the means
// keep completeness up to rounding. std_error is sample sd / sqrt(M).
inline SampledShapley sampled_shapley(
    int n, const std::function<double(std::span<const std::uint8_t>)>& value,
    std::uint64_t num_permutations, SplitMix64& rng) {
  if (n < 1) throw ValidationError("sampling needs at least one player");
  if (num_permutations < 1) {
    throw ValidationError("number of permutations must be >= 1");
  }
  std::vector<std::uint8_t> member(static_cast<std::size_t>(n), 0);
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  const double v_empty = value(member);
  // Welford accumulators per player.
  std::vector<double> mean(static_cast<std::size_t>(n), 0.0);
  std::vector<double> m2(static_cast<std::size_t>(n), 0.0);

  for (std::uint64_t m = 1; m <= num_permutations; ++m) {
    rng.shuffle(order);
    std::fill(member.begin(), member.end(), 0);
    double prev = v_empty;
    for (const int p : order) {
      member[static_cast<std::size_t>(p)] = 1;
      const double v = value(member);
      const double marginal = v - prev;
      prev = v;
      const double delta = marginal - mean[static_cast<std::size_t>(p)];
      mean[static_cast<std::size_t>(p)] += delta / static_cast<double>(m);
      m2[static_cast<std::size_t>(p)] +=
          delta * (marginal - mean[static_cast<std::size_t>(p)]);
    }
  }

  SampledShapley out;
  out.mean = std::move(mean);
  out.permutations = num_permutations;
  out.std_error.assign(static_cast<std::size_t>(n), 0.0);
  if (num_permutations > 1) {
    const double mm = static_cast<double>(num_permutations);
    for (int i = 0; i < n; ++i) {
      const double var = m2[static_cast<std::size_t>(i)] / (mm - 1.0);
      out.std_error[static_cast<std::size_t>(i)] = std::sqrt(var / mm);
    }
  }
  return out;
}

}  // namespace deltattr

#endif  // DELTATTR_COALITION_HPP
