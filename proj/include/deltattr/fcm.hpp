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

#ifndef DELTATTR_FCM_HPP
#define DELTATTR_FCM_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "deltattr/attribution.hpp"
#include "deltattr/coalition.hpp"
#include "deltattr/core.hpp"

namespace deltattr {

// One structural equation X_j := f_j(parents, N_j) together with the inverse
// that recovers the noise from the node's value and its parents' values.
// Root nodes default to the trivial identity X_j := N_j.
struct FcmNode {
  std::string name;
  std::vector<int> parents;  // indices into InvertibleFcm::nodes
  // (parent values, noise) -> node value
  std::function<double(std::span<const double>, double)> structural_fn;
  // (node value, parent values) -> noise
  std::function<double(double, std::span<const double>)> noise_inverse;
};

inline FcmNode root_node(std::string name) {
  FcmNode node;
  node.name = std::move(name);
  node.structural_fn = [](std::span<const double>, double noise) {
    return noise;
  };
  node.noise_inverse = [](double x, std::span<const double>) { return x; };
  return node;
}

// A DAG of invertible structural equations with a designated sink (the
// output Y). Immutable after construction; the constructor validates
// acyclicity, parent indices, and that the sink has no children, and caches
// a topological order.
class InvertibleFcm {
 public:
  InvertibleFcm(std::vector<FcmNode> nodes, int sink)
      : nodes_(std::move(nodes)), sink_(sink) {
    const int n = static_cast<int>(nodes_.size());
    if (n == 0) throw ValidationError("FCM needs at least one node");
    if (sink_ < 0 || sink_ >= n) throw ValidationError("sink out of range");
    for (const FcmNode& node : nodes_) {
      if (!node.structural_fn || !node.noise_inverse) {
        throw ValidationError("node '" + node.name +
                              "' needs structural and inverse functions");
      }
      for (const int p : node.parents) {
        if (p < 0 || p >= n) {
          throw ValidationError("node '" + node.name +
                                "' has an out-of-range parent");
        }
        if (p == sink_) {
          throw ValidationError("sink node '" + nodes_[static_cast<std::size_t>(sink_)].name +
                                "' must not have children");
        }
      }
    }
    topo_ = topological_order();
  }

  int size() const { return static_cast<int>(nodes_.size()); }
  int sink() const { return sink_; }
  const FcmNode& node(int j) const { return nodes_[static_cast<std::size_t>(j)]; }
  const std::vector<int>& topo_order() const { return topo_; }

 private:
  std::vector<int> topological_order() const {
    const int n = size();
    std::vector<int> state(static_cast<std::size_t>(n), 0);  // 0 new, 1 open, 2 done
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(n));
    const auto visit = [&](auto&& self, int j) -> void {
      if (state[static_cast<std::size_t>(j)] == 2) return;
      if (state[static_cast<std::size_t>(j)] == 1) {
        throw ValidationError("FCM graph has a cycle through node '" +
                              nodes_[static_cast<std::size_t>(j)].name + "'");
      }
      state[static_cast<std::size_t>(j)] = 1;
      for (const int p : nodes_[static_cast<std::size_t>(j)].parents) self(self, p);
      state[static_cast<std::size_t>(j)] = 2;
      order.push_back(j);
    };
    for (int j = 0; j < n; ++j) visit(visit, j);
    return order;
  }

  std::vector<FcmNode> nodes_;
  int sink_;
  std::vector<int> topo_;
};

// Tolerance on |structural(pa, inverse(x, pa)) - x| before an inversion is
// reported as broken.
inline constexpr double kFcmRoundTripTol = 1e-6;

// Recovers the per-node noise values from one observed value per node, in
// topological order, and verifies each inversion round-trips.
inline Vec recover_noise(const InvertibleFcm& fcm, const Vec& observed) {
  const int n = fcm.size();
  if (static_cast<int>(observed.size()) != n) {
    throw ValidationError("one observed value per node is required");
  }
  Vec noise(static_cast<std::size_t>(n), 0.0);
  Vec parent_values;
  for (const int j : fcm.topo_order()) {
    const FcmNode& node = fcm.node(j);
    parent_values.clear();
    for (const int p : node.parents) parent_values.push_back(observed[static_cast<std::size_t>(p)]);
    const double x = observed[static_cast<std::size_t>(j)];
    const double nj = node.noise_inverse(x, parent_values);
    const double back = node.structural_fn(parent_values, nj);
    if (!(std::abs(back - x) <= kFcmRoundTripTol)) {
      throw NumericError("noise inversion at node '" + node.name +
                         "' does not round-trip (|" + std::to_string(back) +
                         " - " + std::to_string(x) + "| > 1e-6)");
    }
    noise[static_cast<std::size_t>(j)] = nj;
  }
  return noise;
}

// Forward-evaluates the FCM with each node's noise taken from the foreground
// vector where use_fg is set and from the background vector otherwise;
// returns the sink value. Non-selected ancestors keep their background
// noise, so this is the counterfactual propagation the contributions need.
inline double forward_eval(const InvertibleFcm& fcm,
                           std::span<const std::uint8_t> use_fg,
                           const Vec& noise_bg, const Vec& noise_fg) {
  const int n = fcm.size();
  if (static_cast<int>(use_fg.size()) != n ||
      static_cast<int>(noise_bg.size()) != n ||
      static_cast<int>(noise_fg.size()) != n) {
    throw ValidationError("selector and noise vectors must cover every node");
  }
  Vec values(static_cast<std::size_t>(n), 0.0);
  Vec parent_values;
  for (const int j : fcm.topo_order()) {
    const FcmNode& node = fcm.node(j);
    parent_values.clear();
    for (const int p : node.parents) parent_values.push_back(values[static_cast<std::size_t>(p)]);
    const double nj = use_fg[static_cast<std::size_t>(j)] ? noise_fg[static_cast<std::size_t>(j)]
                                                          : noise_bg[static_cast<std::size_t>(j)];
    values[static_cast<std::size_t>(j)] = node.structural_fn(parent_values, nj);
  }
  return values[static_cast<std::size_t>(fcm.sink())];
}

// Shapley attribution of the sink change to the per-node noise values: the
// coalition value switches the members' noises to their recovered foreground
// values. Exact enumeration up to exact_limit nodes, otherwise the sampled
// estimator (a sampling config is then required).
inline AttributionResult fcm_attrib(const InvertibleFcm& fcm,
                                    const Vec& observed_bg,
                                    const Vec& observed_fg,
                                    const std::optional<SamplingConfig>& config = std::nullopt,
                                    int exact_limit = kDefaultExactLimit) {
  const int n = fcm.size();
  const Vec noise_bg = recover_noise(fcm, observed_bg);
  const Vec noise_fg = recover_noise(fcm, observed_fg);

  AttributionResult out;
  out.method = Method::kFcm;

  if (n <= exact_limit && !config) {
    std::vector<std::uint8_t> member(static_cast<std::size_t>(n), 0);
    CoalitionCache cache(n, [&](std::uint64_t mask) {
      for (int j = 0; j < n; ++j) {
        member[static_cast<std::size_t>(j)] =
            (mask >> j) & 1 ? std::uint8_t{1} : std::uint8_t{0};
      }
      return forward_eval(fcm, member, noise_bg, noise_fg);
    });
    const std::vector<double> phi = exact_shapley(cache);
    out.delta_y = cache.value(cache.full_mask()) - cache.value(0);
    for (int j = 0; j < n; ++j) {
      out.credits[Player::node_noise(j)] =
          detail::clean_zero(phi[static_cast<std::size_t>(j)]);
    }
    return out;
  }

  if (!config) {
    throw ValidationError(
        "FCM has " + std::to_string(n) + " nodes, above the exact limit of " +
        std::to_string(exact_limit) + "; supply a sampling config");
  }
  SplitMix64 rng(config->seed);
  const SampledShapley s = sampled_shapley(
      n,
      [&](std::span<const std::uint8_t> member) {
        return forward_eval(fcm, member, noise_bg, noise_fg);
      },
      config->num_permutations, rng);
  std::vector<std::uint8_t> all_bg(static_cast<std::size_t>(n), 0);
  std::vector<std::uint8_t> all_fg(static_cast<std::size_t>(n), 1);
  out.delta_y = forward_eval(fcm, all_fg, noise_bg, noise_fg) -
                forward_eval(fcm, all_bg, noise_bg, noise_fg);
  out.permutations_used = s.permutations;
  out.std_errors.emplace();
  for (int j = 0; j < n; ++j) {
    out.credits[Player::node_noise(j)] =
        detail::clean_zero(s.mean[static_cast<std::size_t>(j)]);
    (*out.std_errors)[Player::node_noise(j)] =
        s.std_error[static_cast<std::size_t>(j)];
  }
  return out;
}

}  // namespace deltattr

#endif  // DELTATTR_FCM_HPP
