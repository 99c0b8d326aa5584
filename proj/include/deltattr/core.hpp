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

#ifndef DELTATTR_CORE_HPP
#define DELTATTR_CORE_HPP

#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace deltattr {

// Error taxonomy, mirrored by the CLI exit codes: validation -> 2,
// data -> 3, numeric -> 4.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Vec = std::vector<double>;

// Full round-trip precision, for result files. Tables use 6 significant
// digits instead.
inline std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// A deterministic scalar-valued function of a fixed-arity real vector.
// Copies share the underlying handle; two Mechanism objects are "the same
// mechanism" exactly when they share a handle (functional equality of
// black boxes is undecidable, so identity is the only equality we test).
class Mechanism {
 public:
  using EvalFn = std::function<double(std::span<const double>)>;

  Mechanism(int arity, EvalFn fn, std::string label)
      : impl_(std::make_shared<const Impl>(
            Impl{arity, std::move(fn), std::move(label)})) {
    if (arity < 1) throw ValidationError("mechanism arity must be positive");
    if (!impl_->fn) throw ValidationError("mechanism requires an evaluator");
  }

  int arity() const { return impl_->arity; }
  const std::string& label() const { return impl_->label; }

  double operator()(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != impl_->arity) {
      throw ValidationError("mechanism '" + impl_->label + "' expects " +
                            std::to_string(impl_->arity) + " inputs, got " +
                            std::to_string(x.size()));
    }
    const double y = impl_->fn(x);
    if (!std::isfinite(y)) {
      throw NumericError("mechanism '" + impl_->label +
                         "' produced a non-finite value");
    }
    return y;
  }

  bool same_handle(const Mechanism& other) const {
    return impl_ == other.impl_;
  }

 private:
  struct Impl {
    int arity;
    EvalFn fn;
    std::string label;
  };
  std::shared_ptr<const Impl> impl_;
};

// The unit under explanation: background/foreground input vectors plus
// background/foreground mechanisms, all of one arity.
struct ChangeInstance {
  Vec x_bg;
  Vec x_fg;
  Mechanism f_bg;
  Mechanism f_fg;

  ChangeInstance(Vec x_background, Vec x_foreground, Mechanism f_background,
                 Mechanism f_foreground)
      : x_bg(std::move(x_background)),
        x_fg(std::move(x_foreground)),
        f_bg(std::move(f_background)),
        f_fg(std::move(f_foreground)) {
    const std::size_t d = x_bg.size();
    if (d == 0) throw ValidationError("change instance needs at least one input");
    if (x_fg.size() != d || f_bg.arity() != static_cast<int>(d) ||
        f_fg.arity() != static_cast<int>(d)) {
      throw ValidationError(
          "input vectors and mechanism arities must all agree");
    }
  }

  int arity() const { return static_cast<int>(x_bg.size()); }
  bool same_mechanism() const { return f_bg.same_handle(f_fg); }
};

enum class PlayerKind : std::uint8_t {
  kMechanism = 0,
  kInputBundle = 1,
  kInput = 2,
  kNodeNoise = 3,
};

// An attribution target. Input and NodeNoise carry a 0-based index.
class Player {
 public:
  static Player mechanism() { return Player(PlayerKind::kMechanism, -1); }
  static Player input_bundle() { return Player(PlayerKind::kInputBundle, -1); }
  static Player input(int j) {
    if (j < 0) throw ValidationError("input player index must be >= 0");
    return Player(PlayerKind::kInput, j);
  }
  static Player node_noise(int j) {
    if (j < 0) throw ValidationError("noise player index must be >= 0");
    return Player(PlayerKind::kNodeNoise, j);
  }

  PlayerKind kind() const { return kind_; }
  int index() const { return index_; }

  friend auto operator<=>(const Player&, const Player&) = default;

 private:
  Player(PlayerKind kind, int index) : kind_(kind), index_(index) {}
  PlayerKind kind_;
  int index_;
};

enum class Method : std::uint8_t {
  kCoarse,
  kLinear,
  kFineExact,
  kFineSampled,
  kOrdered,
  kFcm,
};

inline const char* method_name(Method m) {
  switch (m) {
    case Method::kCoarse: return "coarse";
    case Method::kLinear: return "linear";
    case Method::kFineExact: return "fine_exact";
    case Method::kFineSampled: return "fine_sampled";
    case Method::kOrdered: return "ordered";
    case Method::kFcm: return "fcm";
  }
  return "?";
}

// Per-player credits for one output change. Completeness: the credits sum
// to delta_y (within 1e-9 relative; the producing operations guarantee it).
struct AttributionResult {
  double delta_y = 0.0;
  std::map<Player, double> credits;
  Method method = Method::kCoarse;
  std::optional<std::map<Player, double>> std_errors;  // sampling only
  std::optional<std::uint64_t> permutations_used;      // sampling only

  double credit_sum() const {
    double s = 0.0;
    for (const auto& [p, c] : credits) s += c;
    return s;
  }
  double credit(const Player& p) const {
    const auto it = credits.find(p);
    if (it == credits.end()) throw ValidationError("no such player in result");
    return it->second;
  }
};

// Delta y := f_fg(x_fg) - f_bg(x_bg).
inline double delta_y(const ChangeInstance& inst) {
  return inst.f_fg(inst.x_fg) - inst.f_bg(inst.x_bg);
}

// Fills `out` with the hybrid vector whose j-th entry is foreground where
// fg_mask[j] is nonzero and background elsewhere.
inline void hybrid_inputs(const ChangeInstance& inst,
                          std::span<const std::uint8_t> fg_mask, Vec& out) {
  const std::size_t d = inst.x_bg.size();
  out.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    out[j] = fg_mask[j] ? inst.x_fg[j] : inst.x_bg[j];
  }
}

// Evaluates the chosen mechanism on the hybrid vector selected by fg_mask.
// This is the elementary counterfactual every contribution C(w|A;.) is made
// of: (false, all-false) gives y_bg and (true, all-true) gives y_fg.
inline double counterfactual_eval(const ChangeInstance& inst,
                                  bool use_fg_mechanism,
                                  std::span<const std::uint8_t> fg_mask) {
  if (fg_mask.size() != inst.x_bg.size()) {
    throw ValidationError("counterfactual mask length must equal arity");
  }
  Vec hybrid;
  hybrid_inputs(inst, fg_mask, hybrid);
  return use_fg_mechanism ? inst.f_fg(hybrid) : inst.f_bg(hybrid);
}

}  // namespace deltattr

#endif  // DELTATTR_CORE_HPP
