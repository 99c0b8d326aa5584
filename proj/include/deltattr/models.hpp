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

#ifndef DELTATTR_MODELS_HPP
#define DELTATTR_MODELS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "deltattr/attribution.hpp"
#include "deltattr/core.hpp"
#include "deltattr/linalg.hpp"
#include "deltattr/rng.hpp"

namespace deltattr {

// f(x) = sum_j coeffs[j] x[j] (+ intercept). A fitted intercept is a
// coefficient on a constant pseudo-feature fixed at 1 in both scenarios;
// expand_with_intercept() produces that encoding, under which the closed
// forms route all intercept change to the mechanism player (the constant
// feature never changes).
struct LinearModel {
  Vec coeffs;
  std::optional<double> intercept;
  std::string label = "linear";

  int arity() const { return static_cast<int>(coeffs.size()); }

  double operator()(std::span<const double> x) const {
    double y = dot(coeffs, x);
    if (intercept) y += *intercept;
    return y;
  }

  // Coefficient vector with the intercept appended as a trailing
  // pseudo-feature coefficient (feature value 1 in both scenarios).
  Vec expand_with_intercept() const {
    Vec beta = coeffs;
    if (intercept) beta.push_back(*intercept);
    return beta;
  }

  Mechanism mechanism() const {
    return Mechanism(
        arity(), [m = *this](std::span<const double> x) { return m(x); },
        label);
  }
};

// Appends the constant pseudo-feature to an input vector when the model pair
// carries intercepts.
inline Vec with_pseudo_feature(std::span<const double> x, bool add) {
  Vec out(x.begin(), x.end());
  if (add) out.push_back(1.0);
  return out;
}

// Closed-form attribution for a pair of fitted linear models. Intercepts are
// expanded into the constant pseudo-feature for the computation; the pseudo
// player's credit is exactly zero and is dropped from the result.
inline AttributionResult linear_attrib(const LinearModel& bg,
                                       const LinearModel& fg,
                                       std::span<const double> x_bg,
                                       std::span<const double> x_fg) {
  if (bg.arity() != fg.arity()) {
    throw ValidationError("background and foreground models must share arity");
  }
  const bool pseudo = bg.intercept.has_value() || fg.intercept.has_value();
  Vec beta_bg = bg.coeffs, beta_fg = fg.coeffs;
  if (pseudo) {
    beta_bg.push_back(bg.intercept.value_or(0.0));
    beta_fg.push_back(fg.intercept.value_or(0.0));
  }
  AttributionResult out =
      linear_attrib(beta_bg, beta_fg, with_pseudo_feature(x_bg, pseudo),
                    with_pseudo_feature(x_fg, pseudo));
  if (pseudo) out.credits.erase(Player::input(bg.arity()));
  return out;
}

// f(x) = sum_t coef_t * prod_j x[j]^e[t][j].
struct PolynomialModel {
  struct Term {
    std::vector<int> exponents;
    double coef = 0.0;
  };

  int dim = 0;
  std::vector<Term> terms;
  std::string label = "polynomial";

  int arity() const { return dim; }
  int degree() const {
    int deg = 0;
    for (const Term& t : terms) {
      deg = std::max(deg, std::accumulate(t.exponents.begin(),
                                          t.exponents.end(), 0));
    }
    return deg;
  }

  double operator()(std::span<const double> x) const {
    double y = 0.0;
    for (const Term& t : terms) {
      double m = t.coef;
      for (int j = 0; j < dim; ++j) {
        const int e = t.exponents[static_cast<std::size_t>(j)];
        for (int r = 0; r < e; ++r) m *= x[static_cast<std::size_t>(j)];
      }
      y += m;
    }
    return y;
  }

  Mechanism mechanism() const {
    return Mechanism(
        dim, [m = *this](std::span<const double> x) { return m(x); }, label);
  }
};

// All exponent vectors with 1 <= total degree <= max_degree, in a fixed
// lexicographic order so the bg/fg coefficient draws line up term by term.
inline std::vector<std::vector<int>> monomial_basis(int dim, int max_degree,
                                                    bool include_constant = false) {
  std::vector<std::vector<int>> basis;
  std::vector<int> current(static_cast<std::size_t>(dim), 0);
  const auto walk = [&](auto&& self, int j, int remaining) -> void {
    if (j == dim) {
      const int total = max_degree - remaining;
      if (total >= 1 || include_constant) basis.push_back(current);
      return;
    }
    for (int e = 0; e <= remaining; ++e) {
      current[static_cast<std::size_t>(j)] = e;
      self(self, j + 1, remaining - e);
    }
    current[static_cast<std::size_t>(j)] = 0;
  };
  walk(walk, 0, max_degree);
  return basis;
}

// Additive ensemble of depth-1 regression trees fit by greedy least-squares
// gradient boosting. Stands in for a generic nonlinear regressor in the
// reliability experiments.
struct StumpEnsemble {
  struct Stump {
    int feature = 0;
    double threshold = 0.0;
    double left = 0.0;   // value when x[feature] <= threshold
    double right = 0.0;
  };

  int dim = 0;
  std::vector<Stump> stumps;
  double rate = 1.0;
  std::string label = "stump_ensemble";

  int arity() const { return dim; }

  double operator()(std::span<const double> x) const {
    double y = 0.0;
    for (const Stump& s : stumps) {
      y += x[static_cast<std::size_t>(s.feature)] <= s.threshold ? s.left
                                                                 : s.right;
    }
    return y;
  }

  Mechanism mechanism() const {
    return Mechanism(
        dim, [m = *this](std::span<const double> x) { return m(x); }, label);
  }
};

struct Dataset {
  Matrix x;  // n rows, d features
  Vec y;

  Dataset() = default;
  Dataset(Matrix features, Vec targets) : x(std::move(features)), y(std::move(targets)) {
    if (x.rows() != y.size()) {
      throw ValidationError("feature rows and target length must agree");
    }
  }

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return x.cols(); }
};

struct OlsFit {
  LinearModel model;
  bool rank_deficient = false;
  int rank = 0;
  double r2_centered = 0.0;
  double r2_uncentered = 0.0;
};

// Ordinary least squares through the pivoted-QR solver. An intercept, when
// requested, is fit as the constant pseudo-feature. Rank-deficient designs
// resolve to the minimum-norm coefficients and set the warning flag instead
// of failing; degenerate resamples in bootstraps are handled by the caller.
inline OlsFit fit_ols(const Dataset& data, bool with_intercept = false) {
  const std::size_t n = data.size(), d = data.dim();
  if (n == 0 || d == 0) throw DataError("cannot fit on an empty dataset");
  for (const double v : data.x.data()) {
    if (!std::isfinite(v)) throw DataError("non-finite feature value in OLS data");
  }
  for (const double v : data.y) {
    if (!std::isfinite(v)) throw DataError("non-finite target value in OLS data");
  }

  const std::size_t cols = d + (with_intercept ? 1 : 0);
  Matrix design(n, cols);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) design(i, j) = data.x(i, j);
    if (with_intercept) design(i, d) = 1.0;
  }

  const LstsqResult ls = lstsq_qr(design, data.y);

  OlsFit fit;
  fit.rank = ls.rank;
  fit.rank_deficient = ls.rank_deficient;
  fit.model.coeffs.assign(ls.solution.begin(), ls.solution.begin() + static_cast<std::ptrdiff_t>(d));
  if (with_intercept) fit.model.intercept = ls.solution[d];
  fit.model.label = "ols";

  double ssr = 0.0, ss_tot = 0.0, ss_raw = 0.0;
  const double mean_y = std::accumulate(data.y.begin(), data.y.end(), 0.0) /
                        static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pred = fit.model(data.x.row(i));
    const double r = data.y[i] - pred;
    ssr += r * r;
    ss_tot += (data.y[i] - mean_y) * (data.y[i] - mean_y);
    ss_raw += data.y[i] * data.y[i];
  }
  fit.r2_centered = ss_tot > 0.0 ? 1.0 - ssr / ss_tot : (ssr == 0.0 ? 1.0 : 0.0);
  fit.r2_uncentered = ss_raw > 0.0 ? 1.0 - ssr / ss_raw : (ssr == 0.0 ? 1.0 : 0.0);
  return fit;
}

// Greedy gradient boosting of depth-1 trees on squared error. Each round
// fits the best single split to the current residual and shrinks it by
// `rate`; training MSE is non-increasing in rounds.
inline StumpEnsemble fit_stump_ensemble(const Dataset& data, int rounds,
                                        double rate) {
  if (rounds < 1) throw ValidationError("boosting rounds must be >= 1");
  if (!(rate > 0.0 && rate <= 1.0)) {
    throw ValidationError("learning rate must be in (0, 1]");
  }
  const std::size_t n = data.size(), d = data.dim();
  if (n == 0) throw DataError("cannot fit on an empty dataset");

  // Sort row indices once per feature.
  std::vector<std::vector<std::size_t>> order(d);
  for (std::size_t j = 0; j < d; ++j) {
    order[j].resize(n);
    std::iota(order[j].begin(), order[j].end(), std::size_t{0});
    std::sort(order[j].begin(), order[j].end(),
              [&](std::size_t a, std::size_t b) {
                return data.x(a, j) < data.x(b, j);
              });
  }

  StumpEnsemble model;
  model.dim = static_cast<int>(d);
  model.rate = rate;
  Vec residual = data.y;

  for (int round = 0; round < rounds; ++round) {
    const double total = std::accumulate(residual.begin(), residual.end(), 0.0);
    const double mean = total / static_cast<double>(n);

    // Baseline: the no-split stump (both leaves at the residual mean).
    StumpEnsemble::Stump best;
    best.feature = 0;
    best.threshold = std::numeric_limits<double>::infinity();
    best.left = best.right = mean;
    double best_score = total * mean;  // n * mean^2

    for (std::size_t j = 0; j < d; ++j) {
      double left_sum = 0.0;
      for (std::size_t p = 0; p + 1 < n; ++p) {
        const std::size_t row = order[j][p];
        left_sum += residual[row];
        const double xv = data.x(row, j);
        const double xn = data.x(order[j][p + 1], j);
        if (xv == xn) continue;  // no boundary between equal values
        const double nl = static_cast<double>(p + 1);
        const double nr = static_cast<double>(n - p - 1);
        const double right_sum = total - left_sum;
        const double score =
            left_sum * left_sum / nl + right_sum * right_sum / nr;
        if (score > best_score) {
          best_score = score;
          best.feature = static_cast<int>(j);
          best.threshold = 0.5 * (xv + xn);
          best.left = left_sum / nl;
          best.right = right_sum / nr;
        }
      }
    }

    best.left *= rate;
    best.right *= rate;
    model.stumps.push_back(best);
    for (std::size_t i = 0; i < n; ++i) {
      residual[i] -= data.x(i, static_cast<std::size_t>(best.feature)) <=
                             best.threshold
                         ? best.left
                         : best.right;
    }
  }
  return model;
}

enum class ModelKind : std::uint8_t { kLinear, kPolynomial };

inline const char* model_kind_name(ModelKind k) {
  return k == ModelKind::kLinear ? "linear" : "polynomial";
}

// A randomly drawn background/foreground ground-truth pair of one kind.
struct GroundTruth {
  ModelKind kind = ModelKind::kLinear;
  int dim = 0;
  std::variant<std::pair<LinearModel, LinearModel>,
               std::pair<PolynomialModel, PolynomialModel>>
      models;

  Mechanism mech_bg() const {
    if (kind == ModelKind::kLinear) {
      return std::get<0>(models).first.mechanism();
    }
    return std::get<1>(models).first.mechanism();
  }
  Mechanism mech_fg() const {
    if (kind == ModelKind::kLinear) {
      return std::get<0>(models).second.mechanism();
    }
    return std::get<1>(models).second.mechanism();
  }
  const std::pair<LinearModel, LinearModel>& linear_pair() const {
    return std::get<0>(models);
  }
};

// Draws a ground-truth model pair: d ~ U{1..5}; every coefficient ~ U(-5,5),
// independently for background and foreground; polynomial degree ~ U{2..4}
// shared by the pair, with the full monomial basis up to that degree.
inline GroundTruth gen_ground_truth(ModelKind kind, std::uint64_t seed) {
  SplitMix64 rng(seed);
  GroundTruth out;
  out.kind = kind;
  out.dim = rng.uniform_int(1, 5);
  if (kind == ModelKind::kLinear) {
    LinearModel bg, fg;
    bg.label = "truth_bg";
    fg.label = "truth_fg";
    for (int j = 0; j < out.dim; ++j) bg.coeffs.push_back(rng.uniform(-5.0, 5.0));
    for (int j = 0; j < out.dim; ++j) fg.coeffs.push_back(rng.uniform(-5.0, 5.0));
    out.models = std::make_pair(std::move(bg), std::move(fg));
  } else {
    const int degree = rng.uniform_int(2, 4);
    const auto basis = monomial_basis(out.dim, degree);
    PolynomialModel bg, fg;
    bg.dim = fg.dim = out.dim;
    bg.label = "truth_bg";
    fg.label = "truth_fg";
    for (const auto& e : basis) {
      bg.terms.push_back({e, rng.uniform(-5.0, 5.0)});
    }
    for (const auto& e : basis) {
      fg.terms.push_back({e, rng.uniform(-5.0, 5.0)});
    }
    out.models = std::make_pair(std::move(bg), std::move(fg));
  }
  return out;
}

// n x d matrix of iid standard normal draws.
inline Matrix gen_inputs(int d, int n, std::uint64_t seed) {
  if (d < 1 || n < 1) throw ValidationError("gen_inputs needs d, n >= 1");
  SplitMix64 rng(seed);
  Matrix x(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();
  }
  return x;
}

// Applies a mechanism row-wise.
inline Vec apply_mechanism(const Mechanism& f, const Matrix& x) {
  Vec y(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) y[i] = f(x.row(i));
  return y;
}

}  // namespace deltattr

#endif  // DELTATTR_MODELS_HPP
