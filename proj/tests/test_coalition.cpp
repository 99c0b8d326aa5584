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

#include <doctest.h>

#include <bit>
#include <cstdint>

#include "deltattr/coalition.hpp"

using namespace deltattr;

TEST_CASE("cache evaluates each coalition at most once") {
  int calls = 0;
  CoalitionCache cache(3, [&calls](std::uint64_t mask) {
    ++calls;
    return static_cast<double>(mask);
  });
  CHECK(cache.value(5) == 5.0);
  CHECK(cache.value(5) == 5.0);
  CHECK(cache.value(0) == 0.0);
  CHECK(calls == 2);
  CHECK(cache.evaluations() == 2);
  CHECK(cache.full_mask() == 7);
}

TEST_CASE("cache rejects unsupported player counts") {
  const auto eval = [](std::uint64_t) { return 0.0; };
  CHECK_THROWS_AS(CoalitionCache(0, eval), ValidationError);
  CHECK_THROWS_AS(CoalitionCache(CoalitionCache::kMaxPlayers + 1, eval),
                  ValidationError);
}

TEST_CASE("subset weights average orderings correctly") {
  // Sum over all subsets A of the n-1 other players of w[|A|] must be 1:
  // every ordering contributes exactly one marginal per player.
  for (int n = 1; n <= 12; ++n) {
    const auto w = shapley_subset_weights(n);
    double total = 0.0;
    double binom = 1.0;
    for (int k = 0; k < n; ++k) {
      total += binom * w[static_cast<std::size_t>(k)];
      binom = binom * (n - 1 - k) / (k + 1);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("exact_shapley reproduces a hand-computed 3-player game") {
  // v(A) = sum of member weights plus a bonus when players 0 and 1 meet.
  const auto v = [](std::uint64_t mask) {
    double out = 0.0;
    if (mask & 1) out += 1.0;
    if (mask & 2) out += 2.0;
    if (mask & 4) out += 4.0;
    if ((mask & 3) == 3) out += 6.0;
    return out;
  };
  CoalitionCache cache(3, v);
  const auto phi = exact_shapley(cache);
  CHECK(phi[0] == doctest::Approx(4.0));  // 1 + 6/2
  CHECK(phi[1] == doctest::Approx(5.0));  // 2 + 6/2
  CHECK(phi[2] == doctest::Approx(4.0));
  CHECK(phi[0] + phi[1] + phi[2] == doctest::Approx(v(7)));
  CHECK(cache.evaluations() == 8);  // every coalition exactly once
}

TEST_CASE("sampled_shapley is deterministic and complete") {
  const auto v = [](std::span<const std::uint8_t> member) {
    double out = 0.0;
    for (std::size_t i = 0; i < member.size(); ++i) {
      if (member[i]) out += static_cast<double>(i + 1);
    }
    if (member[0] && member[1]) out += 3.0;
    return out;
  };
  SplitMix64 rng_a(123), rng_b(123);
  const auto a = sampled_shapley(4, v, 50, rng_a);
  const auto b = sampled_shapley(4, v, 50, rng_b);
  for (int i = 0; i < 4; ++i) {
    CHECK(a.mean[static_cast<std::size_t>(i)] == b.mean[static_cast<std::size_t>(i)]);
  }
  double total = 0.0;
  for (const double m : a.mean) total += m;
  CHECK(total == doctest::Approx(1.0 + 2 + 3 + 4 + 3).epsilon(1e-12));
}
