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

#ifndef DELTATTR_ATTRIBUTION_HPP
#define DELTATTR_ATTRIBUTION_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deltattr/coalition.hpp"
#include "deltattr/core.hpp"
#include "deltattr/rng.hpp"

namespace deltattr {

struct SamplingConfig {
  std::uint64_t num_permutations = 1000;
  std::uint64_t seed = 0;
};

// Largest input dimension attributed by exact subset enumeration unless the
// caller raises it. 2^21 coalition values is a comfortable desk-scale bound.
inline constexpr int kDefaultExactLimit = 20;

namespace detail {

// -0.0 credits (a zero delta times a negative weight) print confusingly;
// collapse them to +0.0.
inline double clean_zero(double v) { return v == 0.0 ? 0.0 : v; }

}  // namespace detail

// Two-player split of delta_y between the mechanism and the input vector as
// a whole. Closed form of the two-player Shapley game; exactly four oracle
// evaluations:
//   pi(f) = 1/2 [f_fg(x_bg) - f_bg(x_bg)] + 1/2 [f_fg(x_fg) - f_bg(x_fg)]
//   pi(x) = 1/2 [f_bg(x_fg) - f_bg(x_bg)] + 1/2 [f_fg(x_fg) - f_fg(x_bg)]
inline AttributionResult coarse_attrib(const ChangeInstance& inst) {
  const double y_bg_bg = inst.f_bg(inst.x_bg);
  const double y_bg_fg = inst.f_bg(inst.x_fg);
  const double y_fg_bg = inst.f_fg(inst.x_bg);
  const double y_fg_fg = inst.f_fg(inst.x_fg);

  AttributionResult out;
  out.method = Method::kCoarse;
  out.delta_y = y_fg_fg - y_bg_bg;
  out.credits[Player::mechanism()] = detail::clean_zero(
      0.5 * (y_fg_bg - y_bg_bg) + 0.5 * (y_fg_fg - y_bg_fg));
  out.credits[Player::input_bundle()] = detail::clean_zero(
      0.5 * (y_bg_fg - y_bg_bg) + 0.5 * (y_fg_fg - y_fg_bg));
  return out;
}

// Closed form for linear mechanisms f_k(x) = sum_j beta_k[j] x[j]:
//   pi(x_j) = (beta_bg[j] + beta_fg[j])/2 * (x_fg[j] - x_bg[j])
//   pi(f)   = sum_j (x_bg[j] + x_fg[j])/2 * (beta_fg[j] - beta_bg[j])
// No oracle calls; O(d) arithmetic.
inline AttributionResult linear_attrib(std::span<const double> beta_bg,
                                       std::span<const double> beta_fg,
                                       std::span<const double> x_bg,
                                       std::span<const double> x_fg) {
  const std::size_t d = beta_bg.size();
  if (d == 0) throw ValidationError("linear attribution needs d >= 1");
  if (beta_fg.size() != d || x_bg.size() != d || x_fg.size() != d) {
    throw ValidationError("coefficient and input vectors must share length");
  }

  AttributionResult out;
  out.method = Method::kLinear;
  double y_bg = 0.0, y_fg = 0.0, pi_f = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    y_bg += beta_bg[j] * x_bg[j];
    y_fg += beta_fg[j] * x_fg[j];
    out.credits[Player::input(static_cast<int>(j))] = detail::clean_zero(
        0.5 * (beta_bg[j] + beta_fg[j]) * (x_fg[j] - x_bg[j]));
    pi_f += 0.5 * (x_bg[j] + x_fg[j]) * (beta_fg[j] - beta_bg[j]);
  }
  out.delta_y = y_fg - y_bg;
  out.credits[Player::mechanism()] = detail::clean_zero(pi_f);
  return out;
}

namespace detail {

// Coalition evaluator for the (d+1)-player game over {inputs, mechanism}.
// Bit j < d switches input j to foreground; bit d switches the mechanism.
class InstanceGame {
 public:
  explicit InstanceGame(const ChangeInstance& inst)
      : inst_(inst), mask_(inst.x_bg.size(), 0) {}

  int num_players() const { return inst_.arity() + 1; }

  double operator()(std::uint64_t coalition) {
    const int d = inst_.arity();
    for (int j = 0; j < d; ++j) {
      mask_[static_cast<std::size_t>(j)] =
          (coalition >> j) & 1 ? std::uint8_t{1} : std::uint8_t{0};
    }
    const bool fg_mechanism = (coalition >> d) & 1;
    return counterfactual_eval(inst_, fg_mechanism, mask_);
  }

  double membership(std::span<const std::uint8_t> member) {
    const int d = inst_.arity();
    for (int j = 0; j < d; ++j) mask_[static_cast<std::size_t>(j)] = member[static_cast<std::size_t>(j)];
    return counterfactual_eval(inst_, member[static_cast<std::size_t>(d)] != 0, mask_);
  }

 private:
  const ChangeInstance& inst_;
  std::vector<std::uint8_t> mask_;
};

inline void check_exact_limit(int d, int exact_limit) {
  if (exact_limit < 1) throw ValidationError("exact limit must be >= 1");
  if (d > exact_limit) {
    throw ValidationError(
        "exact fine-grained attribution is limited to " +
        std::to_string(exact_limit) + " inputs (got " + std::to_string(d) +
        "); raise the exact limit or use the sampled estimator");
  }
}

}  // namespace detail

// Shapley values of the (d+1)-player game {mechanism, x_1..x_d} by exact
// subset enumeration over a coalition cache: at most 2^(d+1) oracle
// evaluations.
inline AttributionResult fine_attrib_exact(const ChangeInstance& inst,
                                           int exact_limit = kDefaultExactLimit) {
  const int d = inst.arity();
  detail::check_exact_limit(d, exact_limit);

  detail::InstanceGame game(inst);
  CoalitionCache cache(d + 1,
                       [&game](std::uint64_t mask) { return game(mask); });
  const std::vector<double> phi = exact_shapley(cache);

  AttributionResult out;
  out.method = Method::kFineExact;
  out.delta_y = cache.value(cache.full_mask()) - cache.value(0);
  for (int j = 0; j < d; ++j) {
    out.credits[Player::input(j)] =
        detail::clean_zero(phi[static_cast<std::size_t>(j)]);
  }
  out.credits[Player::mechanism()] =
      detail::clean_zero(phi[static_cast<std::size_t>(d)]);
  return out;
}

// Monte-Carlo estimate of the fine-grained Shapley values from
// config.num_permutations random orderings. Works for any d. Credits keep
// completeness (per-ordering marginals telescope to delta_y); std_errors
// report sample sd / sqrt(M).
inline AttributionResult fine_attrib_sampled(const ChangeInstance& inst,
                                             const SamplingConfig& config) {
  if (config.num_permutations < 1) {
    throw ValidationError("sampling budget must be >= 1 permutation");
  }
  const int d = inst.arity();
  detail::InstanceGame game(inst);
  SplitMix64 rng(config.seed);
  const SampledShapley s = sampled_shapley(
      d + 1,
      [&game](std::span<const std::uint8_t> member) {
        return game.membership(member);
      },
      config.num_permutations, rng);

  AttributionResult out;
  out.method = Method::kFineSampled;
  out.delta_y = delta_y(inst);
  out.permutations_used = s.permutations;
  out.std_errors.emplace();
  for (int j = 0; j < d; ++j) {
    out.credits[Player::input(j)] =
        detail::clean_zero(s.mean[static_cast<std::size_t>(j)]);
    (*out.std_errors)[Player::input(j)] = s.std_error[static_cast<std::size_t>(j)];
  }
  out.credits[Player::mechanism()] =
      detail::clean_zero(s.mean[static_cast<std::size_t>(d)]);
  (*out.std_errors)[Player::mechanism()] = s.std_error[static_cast<std::size_t>(d)];
  return out;
}

// Marginal contributions along one fixed ordering of the d+1 players, no
// averaging. `order` must be a permutation of {mechanism, input(0..d-1)}.
inline AttributionResult ordered_attrib(const ChangeInstance& inst,
                                        std::span<const Player> order) {
  const int d = inst.arity();
  if (static_cast<int>(order.size()) != d + 1) {
    throw ValidationError("ordering must list all d+1 players");
  }
  std::vector<bool> seen(static_cast<std::size_t>(d) + 1, false);
  for (const Player& p : order) {
    int slot = -1;
    if (p.kind() == PlayerKind::kMechanism) {
      slot = d;
    } else if (p.kind() == PlayerKind::kInput && p.index() < d) {
      slot = p.index();
    } else {
      throw ValidationError("ordering may only contain the mechanism and the instance's inputs");
    }
    if (seen[static_cast<std::size_t>(slot)]) {
      throw ValidationError("ordering repeats a player");
    }
    seen[static_cast<std::size_t>(slot)] = true;
  }

  detail::InstanceGame game(inst);
  std::vector<std::uint8_t> member(static_cast<std::size_t>(d) + 1, 0);
  AttributionResult out;
  out.method = Method::kOrdered;
  double prev = game.membership(member);
  const double y_bg = prev;
  for (const Player& p : order) {
    const int slot = p.kind() == PlayerKind::kMechanism ? d : p.index();
    member[static_cast<std::size_t>(slot)] = 1;
    const double v = game.membership(member);
    out.credits[p] = detail::clean_zero(v - prev);
    prev = v;
  }
  out.delta_y = prev - y_bg;
  return out;
}

// Convenience: the natural ordering (mechanism first, then inputs by index).
inline std::vector<Player> natural_order(int d) {
  std::vector<Player> order;
  order.reserve(static_cast<std::size_t>(d) + 1);
  order.push_back(Player::mechanism());
  for (int j = 0; j < d; ++j) order.push_back(Player::input(j));
  return order;
}

}  // namespace deltattr

#endif  // DELTATTR_ATTRIBUTION_HPP
