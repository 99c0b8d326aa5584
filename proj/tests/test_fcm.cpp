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

#include <cmath>
#include <cstdint>
#include <vector>

#include "deltattr/attribution.hpp"
#include "deltattr/fcm.hpp"
#include "deltattr/models.hpp"
#include "deltattr/rng.hpp"

using namespace deltattr;

namespace {

// X := n_x, Y := X + n_y.
InvertibleFcm chain_fcm() {
  FcmNode x = root_node("x");
  FcmNode y;
  y.name = "y";
  y.parents = {0};
  y.structural_fn = [](std::span<const double> pa, double noise) {
    return pa[0] + noise;
  };
  y.noise_inverse = [](double value, std::span<const double> pa) {
    return value - pa[0];
  };
  return InvertibleFcm({x, y}, 1);
}

// A random linear additive-noise DAG: node j reads parents with fixed
// weights, X_j := sum_i w_i pa_i + n_j. Node n-1 is the sink.
InvertibleFcm random_linear_dag(SplitMix64& rng, int n) {
  std::vector<FcmNode> nodes;
  for (int j = 0; j < n; ++j) {
    FcmNode node;
    node.name = "v" + std::to_string(j);
    Vec weights;
    for (int i = 0; i < j; ++i) {
      if (j == n - 1 || rng.uniform01() < 0.5) {
        node.parents.push_back(i);
        weights.push_back(rng.uniform(-2.0, 2.0));
      }
    }
    node.structural_fn = [weights](std::span<const double> pa, double noise) {
      double v = noise;
      for (std::size_t i = 0; i < pa.size(); ++i) v += weights[i] * pa[i];
      return v;
    };
    node.noise_inverse = [weights](double value, std::span<const double> pa) {
      double v = value;
      for (std::size_t i = 0; i < pa.size(); ++i) v -= weights[i] * pa[i];
      return v;
    };
    nodes.push_back(std::move(node));
  }
  return InvertibleFcm(std::move(nodes), n - 1);
}

Vec observe_all(const InvertibleFcm& fcm, const Vec& noise) {
  // Forward pass recording every node value.
  Vec values(static_cast<std::size_t>(fcm.size()), 0.0);
  for (const int j : fcm.topo_order()) {
    Vec pa;
    for (const int p : fcm.node(j).parents) pa.push_back(values[static_cast<std::size_t>(p)]);
    values[static_cast<std::size_t>(j)] =
        fcm.node(j).structural_fn(pa, noise[static_cast<std::size_t>(j)]);
  }
  return values;
}

}  // namespace

TEST_CASE("noise recovery on the chain") {
  const InvertibleFcm fcm = chain_fcm();
  const Vec n1 = recover_noise(fcm, {1.0, 3.0});
  CHECK(n1[0] == doctest::Approx(1.0));
  CHECK(n1[1] == doctest::Approx(2.0));
  const Vec n2 = recover_noise(fcm, {2.0, 7.0});
  CHECK(n2[0] == doctest::Approx(2.0));
  CHECK(n2[1] == doctest::Approx(5.0));
}

TEST_CASE("noise recovery inverts scaled parents") {
  FcmNode x = root_node("x");
  FcmNode y;
  y.name = "y";
  y.parents = {0};
  y.structural_fn = [](std::span<const double> pa, double noise) {
    return 2.0 * pa[0] + noise;
  };
  y.noise_inverse = [](double value, std::span<const double> pa) {
    return value - 2.0 * pa[0];
  };
  const InvertibleFcm fcm({x, y}, 1);
  const Vec noise = recover_noise(fcm, {1.0, 5.0});
  CHECK(noise[1] == doctest::Approx(3.0));
}

TEST_CASE("broken inversions are reported with the node name") {
  FcmNode x = root_node("x");
  FcmNode y;
  y.name = "y";
  y.parents = {0};
  y.structural_fn = [](std::span<const double> pa, double noise) {
    return pa[0] + noise;
  };
  y.noise_inverse = [](double value, std::span<const double>) {
    return value;  // wrong inverse
  };
  const InvertibleFcm fcm({x, y}, 1);
  CHECK_THROWS_WITH_AS(recover_noise(fcm, {1.0, 3.0}), doctest::Contains("'y'"),
                       NumericError);
}

TEST_CASE("forward_eval selects noise per node") {
  const InvertibleFcm fcm = chain_fcm();
  const Vec bg{1.0, 2.0}, fg{2.0, 5.0};
  CHECK(forward_eval(fcm, std::vector<std::uint8_t>{0, 0}, bg, fg) == doctest::Approx(3.0));
  CHECK(forward_eval(fcm, std::vector<std::uint8_t>{1, 1}, bg, fg) == doctest::Approx(7.0));
  CHECK(forward_eval(fcm, std::vector<std::uint8_t>{1, 0}, bg, fg) == doctest::Approx(4.0));
  CHECK(forward_eval(fcm, std::vector<std::uint8_t>{0, 1}, bg, fg) == doctest::Approx(6.0));
}

TEST_CASE("chain attribution splits 4 into 1 + 3") {
  const InvertibleFcm fcm = chain_fcm();
  const AttributionResult r = fcm_attrib(fcm, {1.0, 3.0}, {2.0, 7.0});
  CHECK(r.delta_y == doctest::Approx(4.0));
  CHECK(r.credit(Player::node_noise(0)) == doctest::Approx(1.0));
  CHECK(r.credit(Player::node_noise(1)) == doctest::Approx(3.0));
  CHECK(r.method == Method::kFcm);
}

TEST_CASE("unchanged noise earns exactly zero") {
  const InvertibleFcm fcm = chain_fcm();
  // Same x observation, different y: n_x is bit-equal across scenarios.
  const AttributionResult r = fcm_attrib(fcm, {1.0, 3.0}, {1.0, 9.0});
  CHECK(r.credit(Player::node_noise(0)) == 0.0);
  CHECK(r.credit(Player::node_noise(1)) == doctest::Approx(6.0));
}

TEST_CASE("a single-node FCM gives the noise all the credit") {
  const InvertibleFcm fcm({root_node("y")}, 0);
  const AttributionResult r = fcm_attrib(fcm, {1.5}, {4.0});
  CHECK(r.credit(Player::node_noise(0)) == doctest::Approx(2.5));
}

TEST_CASE("completeness and dummy on random additive DAGs") {
  SplitMix64 rng(71);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = rng.uniform_int(1, 6);
    const InvertibleFcm fcm = random_linear_dag(rng, n);
    Vec noise_bg(static_cast<std::size_t>(n)), noise_fg(static_cast<std::size_t>(n));
    for (auto& v : noise_bg) v = rng.normal();
    // Freeze an ancestor-closed set of nodes so the recovered foreground
    // noise is bit-equal there.
    std::vector<bool> frozen(static_cast<std::size_t>(n), false);
    for (int j = 0; j < n; ++j) {
      if (rng.uniform01() < 0.4) {
        bool parents_frozen = true;
        for (const int p : fcm.node(j).parents) {
          if (!frozen[static_cast<std::size_t>(p)]) parents_frozen = false;
        }
        if (parents_frozen) frozen[static_cast<std::size_t>(j)] = true;
      }
    }
    for (int j = 0; j < n; ++j) {
      noise_fg[static_cast<std::size_t>(j)] =
          frozen[static_cast<std::size_t>(j)] ? noise_bg[static_cast<std::size_t>(j)] : rng.normal();
    }
    const Vec obs_bg = observe_all(fcm, noise_bg);
    const Vec obs_fg = observe_all(fcm, noise_fg);

    const AttributionResult r = fcm_attrib(fcm, obs_bg, obs_fg);
    CHECK(std::abs(r.credit_sum() - r.delta_y) <=
          1e-9 * std::max(1.0, std::abs(r.delta_y)));
    for (int j = 0; j < n; ++j) {
      if (frozen[static_cast<std::size_t>(j)]) {
        CHECK(r.credit(Player::node_noise(j)) == 0.0);
      }
    }
  }
}

TEST_CASE("one-layer FCM reduces to fine-grained attribution") {
  SplitMix64 rng(73);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = rng.uniform_int(1, 4);
    Vec weights;
    for (int j = 0; j < d; ++j) weights.push_back(rng.uniform(-3.0, 3.0));
    const double sink_noise = rng.normal();

    std::vector<FcmNode> nodes;
    for (int j = 0; j < d; ++j) nodes.push_back(root_node("x" + std::to_string(j)));
    FcmNode y;
    y.name = "y";
    for (int j = 0; j < d; ++j) y.parents.push_back(j);
    y.structural_fn = [weights](std::span<const double> pa, double noise) {
      double v = noise;
      for (std::size_t i = 0; i < pa.size(); ++i) v += weights[i] * pa[i];
      return v;
    };
    y.noise_inverse = [weights](double value, std::span<const double> pa) {
      double v = value;
      for (std::size_t i = 0; i < pa.size(); ++i) v -= weights[i] * pa[i];
      return v;
    };
    nodes.push_back(std::move(y));
    const InvertibleFcm fcm(std::move(nodes), d);

    Vec x_bg(static_cast<std::size_t>(d)), x_fg(static_cast<std::size_t>(d));
    for (auto& v : x_bg) v = rng.normal();
    for (auto& v : x_fg) v = rng.normal();
    Vec obs_bg = x_bg, obs_fg = x_fg;
    obs_bg.push_back(dot(weights, x_bg) + sink_noise);
    obs_fg.push_back(dot(weights, x_fg) + sink_noise);

    // Equivalent change instance: fixed mechanism f(x) = w.x + sink_noise.
    const Mechanism f(d,
                      [weights, sink_noise](std::span<const double> x) {
                        return dot(weights, x) + sink_noise;
                      },
                      "induced");
    const AttributionResult fine =
        fine_attrib_exact(ChangeInstance(x_bg, x_fg, f, f));
    const AttributionResult fcm_r = fcm_attrib(fcm, obs_bg, obs_fg);

    for (int j = 0; j < d; ++j) {
      CHECK(fcm_r.credit(Player::node_noise(j)) ==
            doctest::Approx(fine.credit(Player::input(j))).epsilon(1e-9));
    }
    // The sink noise is recovered by inverting floating-point arithmetic, so
    // its bg/fg values agree only to rounding; the credit is 1e-9-small
    // rather than bit-exact zero.
    CHECK(std::abs(fcm_r.credit(Player::node_noise(d))) < 1e-9);
    CHECK(fine.credit(Player::mechanism()) == 0.0);
  }
}

TEST_CASE("sampled FCM attribution keeps completeness") {
  SplitMix64 rng(79);
  const InvertibleFcm fcm = random_linear_dag(rng, 6);
  Vec noise_bg(6), noise_fg(6);
  for (auto& v : noise_bg) v = rng.normal();
  for (auto& v : noise_fg) v = rng.normal();
  const Vec obs_bg = observe_all(fcm, noise_bg);
  const Vec obs_fg = observe_all(fcm, noise_fg);

  SamplingConfig config{.num_permutations = 64, .seed = 7};
  const AttributionResult r = fcm_attrib(fcm, obs_bg, obs_fg, config);
  CHECK(*r.permutations_used == 64);
  CHECK(std::abs(r.credit_sum() - r.delta_y) <=
        1e-9 * std::max(1.0, std::abs(r.delta_y)));

  // Above the exact limit a config is mandatory.
  CHECK_THROWS_AS(fcm_attrib(fcm, obs_bg, obs_fg, std::nullopt, /*exact_limit=*/3),
                  ValidationError);
}

TEST_CASE("graph validation") {
  // Cycle.
  FcmNode a;
  a.name = "a";
  a.parents = {1};
  a.structural_fn = [](std::span<const double> pa, double n) { return pa[0] + n; };
  a.noise_inverse = [](double v, std::span<const double> pa) { return v - pa[0]; };
  FcmNode b = a;
  b.name = "b";
  b.parents = {0};
  FcmNode sink;
  sink.name = "y";
  sink.parents = {0};
  sink.structural_fn = a.structural_fn;
  sink.noise_inverse = a.noise_inverse;
  CHECK_THROWS_AS(InvertibleFcm({a, b, sink}, 2), ValidationError);

  // Sink with children.
  FcmNode root = root_node("x");
  FcmNode child;
  child.name = "c";
  child.parents = {0};
  child.structural_fn = a.structural_fn;
  child.noise_inverse = a.noise_inverse;
  CHECK_THROWS_AS(InvertibleFcm({root, child}, 0), ValidationError);

  // Out-of-range parent.
  FcmNode bad;
  bad.name = "bad";
  bad.parents = {5};
  bad.structural_fn = a.structural_fn;
  bad.noise_inverse = a.noise_inverse;
  CHECK_THROWS_AS(InvertibleFcm({root_node("x"), bad}, 1), ValidationError);
}
