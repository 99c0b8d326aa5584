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

#ifndef DELTATTR_EXPERIMENTS_HPP
#define DELTATTR_EXPERIMENTS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <future>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "deltattr/attribution.hpp"
#include "deltattr/core.hpp"
#include "deltattr/models.hpp"
#include "deltattr/rng.hpp"

namespace deltattr {

enum class FittedKind : std::uint8_t { kOlsLinear, kStumpEnsemble, kTruth };

inline const char* fitted_kind_name(FittedKind k) {
  switch (k) {
    case FittedKind::kOlsLinear: return "ols_linear";
    case FittedKind::kStumpEnsemble: return "stump_ensemble";
    case FittedKind::kTruth: return "truth";
  }
  return "?";
}

enum class AttribMethod : std::uint8_t { kCoarse, kFine };

inline const char* attrib_method_name(AttribMethod m) {
  return m == AttribMethod::kCoarse ? "coarse" : "fine";
}

struct ReliabilityConfig {
  int num_models = 100;
  int n = 2000;
  // Ground-truth kinds are assigned round-robin over the model index, so
  // `num_models` counts models in total, each contributing one row per
  // (fitted kind, method).
  std::vector<ModelKind> model_kinds = {ModelKind::kLinear,
                                        ModelKind::kPolynomial};
  std::vector<FittedKind> fitted_kinds = {FittedKind::kOlsLinear,
                                          FittedKind::kStumpEnsemble};
  std::uint64_t seed = 0;
  int stump_rounds = 50;
  double stump_rate = 0.3;
  int threads = 1;
};

struct MaeRecord {
  ModelKind kind = ModelKind::kLinear;
  FittedKind fitted = FittedKind::kOlsLinear;
  AttribMethod method = AttribMethod::kCoarse;
  int model_idx = 0;
  int dim = 0;
  double mae = 0.0;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
};

namespace detail {

inline double coarse_mae(const AttributionResult& truth,
                         const AttributionResult& est) {
  return 0.5 * (std::abs(truth.credit(Player::mechanism()) -
                         est.credit(Player::mechanism())) +
                std::abs(truth.credit(Player::input_bundle()) -
                         est.credit(Player::input_bundle())));
}

inline double fine_mae(const AttributionResult& truth,
                       const AttributionResult& est, int d) {
  double s = std::abs(truth.credit(Player::mechanism()) -
                      est.credit(Player::mechanism()));
  for (int j = 0; j < d; ++j) {
    s += std::abs(truth.credit(Player::input(j)) - est.credit(Player::input(j)));
  }
  return s / (d + 1);
}

}  // namespace detail

// One ground-truth model pair: draw bg/fg samples, fit each requested model
// class per scenario, then compare estimated and ground-truth attributions
// instance by instance. Returns one record per (fitted kind, method).
inline std::vector<MaeRecord> reliability_for_model(
    const ReliabilityConfig& config, int model_idx) {
  const ModelKind kind =
      config.model_kinds[static_cast<std::size_t>(model_idx) %
                         config.model_kinds.size()];
  const std::uint64_t model_seed = derive_seed(config.seed, static_cast<std::uint64_t>(model_idx));
  const GroundTruth truth = gen_ground_truth(kind, derive_seed(model_seed, 1));
  const int d = truth.dim;
  const Matrix x_bg = gen_inputs(d, config.n, derive_seed(model_seed, 2));
  const Matrix x_fg = gen_inputs(d, config.n, derive_seed(model_seed, 3));
  const Mechanism f_bg = truth.mech_bg();
  const Mechanism f_fg = truth.mech_fg();
  const Vec y_bg = apply_mechanism(f_bg, x_bg);
  const Vec y_fg = apply_mechanism(f_fg, x_fg);

  std::vector<MaeRecord> records;
  for (const FittedKind fitted : config.fitted_kinds) {
    MaeRecord base;
    base.kind = kind;
    base.fitted = fitted;
    base.model_idx = model_idx;
    base.dim = d;
    base.seed = config.seed;

    Mechanism est_bg = f_bg, est_fg = f_fg;
    try {
      if (fitted == FittedKind::kOlsLinear) {
        est_bg = fit_ols(Dataset(x_bg, y_bg)).model.mechanism();
        est_fg = fit_ols(Dataset(x_fg, y_fg)).model.mechanism();
      } else if (fitted == FittedKind::kStumpEnsemble) {
        est_bg = fit_stump_ensemble(Dataset(x_bg, y_bg), config.stump_rounds,
                                    config.stump_rate)
                     .mechanism();
        est_fg = fit_stump_ensemble(Dataset(x_fg, y_fg), config.stump_rounds,
                                    config.stump_rate)
                     .mechanism();
      }
    } catch (const std::exception& e) {
      base.ok = false;
      base.error = e.what();
      for (const AttribMethod m : {AttribMethod::kCoarse, AttribMethod::kFine}) {
        MaeRecord r = base;
        r.method = m;
        records.push_back(std::move(r));
      }
      continue;
    }

    double sum_coarse = 0.0, sum_fine = 0.0;
    for (int i = 0; i < config.n; ++i) {
      const Vec xi_bg(x_bg.row(static_cast<std::size_t>(i)).begin(),
                      x_bg.row(static_cast<std::size_t>(i)).end());
      const Vec xi_fg(x_fg.row(static_cast<std::size_t>(i)).begin(),
                      x_fg.row(static_cast<std::size_t>(i)).end());
      const ChangeInstance truth_inst(xi_bg, xi_fg, f_bg, f_fg);
      const ChangeInstance est_inst(xi_bg, xi_fg, est_bg, est_fg);
      sum_coarse += detail::coarse_mae(coarse_attrib(truth_inst),
                                       coarse_attrib(est_inst));
      sum_fine += detail::fine_mae(fine_attrib_exact(truth_inst),
                                   fine_attrib_exact(est_inst), d);
    }

    MaeRecord coarse = base;
    coarse.method = AttribMethod::kCoarse;
    coarse.mae = sum_coarse / config.n;
    records.push_back(std::move(coarse));
    MaeRecord fine = base;
    fine.method = AttribMethod::kFine;
    fine.mae = sum_fine / config.n;
    records.push_back(std::move(fine));
  }
  return records;
}

// Records come back in canonical order (model index, then fitted kind, then
// method) no matter how many threads ran the grid.
inline std::vector<MaeRecord> run_reliability(const ReliabilityConfig& config) {
  if (config.num_models < 1 || config.n < 1) {
    throw ValidationError("reliability config counts must be >= 1");
  }
  if (config.model_kinds.empty() || config.fitted_kinds.empty()) {
    throw ValidationError("reliability config needs model and fitted kinds");
  }
  std::vector<std::vector<MaeRecord>> per_model(
      static_cast<std::size_t>(config.num_models));
  if (config.threads > 1) {
    std::vector<std::future<std::vector<MaeRecord>>> futures;
    futures.reserve(per_model.size());
    for (int m = 0; m < config.num_models; ++m) {
      futures.push_back(std::async(std::launch::async, [&config, m] {
        return reliability_for_model(config, m);
      }));
    }
    for (int m = 0; m < config.num_models; ++m) {
      per_model[static_cast<std::size_t>(m)] = futures[static_cast<std::size_t>(m)].get();
    }
  } else {
    for (int m = 0; m < config.num_models; ++m) {
      per_model[static_cast<std::size_t>(m)] = reliability_for_model(config, m);
    }
  }
  std::vector<MaeRecord> records;
  for (auto& group : per_model) {
    for (auto& r : group) records.push_back(std::move(r));
  }
  return records;
}

struct ScalabilityConfig {
  std::vector<int> dims = {10, 20, 30};
  std::vector<std::uint64_t> budgets;  // strictly ascending
  int repeats = 100;  // ground-truth models per cell
  int n = 1000;       // instances per model
  std::uint64_t seed = 0;
  int threads = 1;
};

struct ScalabilityRecord {
  int dim = 0;
  std::uint64_t budget = 0;
  double mae_mean = 0.0;
  double mae_stderr = 0.0;
  std::uint64_t seed = 0;
};

// One (dimension, budget) cell: `repeats` random linear ground truths with
// `n` instances each; per trial the sampled fine-grained attribution is
// compared to the linear closed form, which is exact for any d. Models and
// instances depend only on (seed, d, model, instance), so cells at the same
// d share them across budgets and only the permutation draws differ.
inline ScalabilityRecord scalability_cell(const ScalabilityConfig& config,
                                          int d, std::uint64_t budget) {
  const std::uint64_t d_seed = derive_seed(derive_seed(config.seed, 0xD), static_cast<std::uint64_t>(d));
  double mean = 0.0, m2 = 0.0;
  std::uint64_t count = 0;
  for (int r = 0; r < config.repeats; ++r) {
    const std::uint64_t model_seed = derive_seed(d_seed, static_cast<std::uint64_t>(r));
    SplitMix64 model_rng(model_seed);
    LinearModel bg, fg;
    for (int j = 0; j < d; ++j) bg.coeffs.push_back(model_rng.uniform(-5.0, 5.0));
    for (int j = 0; j < d; ++j) fg.coeffs.push_back(model_rng.uniform(-5.0, 5.0));
    const Mechanism mech_bg = bg.mechanism();
    const Mechanism mech_fg = fg.mechanism();

    for (int i = 0; i < config.n; ++i) {
      const std::uint64_t inst_seed = derive_seed(model_seed, 0x10000u + static_cast<std::uint64_t>(i));
      SplitMix64 inst_rng(inst_seed);
      Vec x_bg(static_cast<std::size_t>(d)), x_fg(static_cast<std::size_t>(d));
      for (auto& v : x_bg) v = inst_rng.normal();
      for (auto& v : x_fg) v = inst_rng.normal();

      const AttributionResult exact =
          linear_attrib(bg.coeffs, fg.coeffs, x_bg, x_fg);
      SamplingConfig sampling;
      sampling.num_permutations = budget;
      sampling.seed = derive_seed(derive_seed(inst_seed, 0x5A), budget);
      const AttributionResult approx = fine_attrib_sampled(
          ChangeInstance(x_bg, x_fg, mech_bg, mech_fg), sampling);

      const double mae = detail::fine_mae(exact, approx, d);
      ++count;
      const double delta = mae - mean;
      mean += delta / static_cast<double>(count);
      m2 += delta * (mae - mean);
    }
  }
  ScalabilityRecord cell;
  cell.dim = d;
  cell.budget = budget;
  cell.mae_mean = mean;
  cell.mae_stderr =
      count > 1 ? std::sqrt(m2 / static_cast<double>(count - 1) /
                            static_cast<double>(count))
                : 0.0;
  cell.seed = config.seed;
  return cell;
}

inline std::vector<ScalabilityRecord> run_scalability(
    const ScalabilityConfig& config) {
  if (config.repeats < 1 || config.n < 1) {
    throw ValidationError("scalability config counts must be >= 1");
  }
  if (config.budgets.empty()) throw ValidationError("no permutation budgets given");
  for (std::size_t i = 1; i < config.budgets.size(); ++i) {
    if (config.budgets[i] <= config.budgets[i - 1]) {
      throw ValidationError("permutation budgets must be strictly ascending");
    }
  }

  std::vector<std::pair<int, std::uint64_t>> cells;
  for (const int d : config.dims) {
    for (const std::uint64_t b : config.budgets) cells.emplace_back(d, b);
  }
  std::vector<ScalabilityRecord> records(cells.size());
  if (config.threads > 1) {
    std::vector<std::future<ScalabilityRecord>> futures;
    futures.reserve(cells.size());
    for (const auto& [d, b] : cells) {
      futures.push_back(std::async(std::launch::async, [&config, d = d, b = b] {
        return scalability_cell(config, d, b);
      }));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) records[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      records[i] = scalability_cell(config, cells[i].first, cells[i].second);
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// Result files. One shared CSV schema for both simulations; fields that do
// not apply to a run stay empty. The JSON-lines mirror carries the same
// fields plus error strings and the generator name.

inline constexpr const char* kResultsCsvHeader =
    "kind,fitted,method,model_idx,d,budget,mae,stderr,seed";

inline void write_reliability_csv(const std::vector<MaeRecord>& records,
                                  std::ostream& out) {
  out << kResultsCsvHeader << '\n';
  for (const MaeRecord& r : records) {
    out << model_kind_name(r.kind) << ',' << fitted_kind_name(r.fitted) << ','
        << attrib_method_name(r.method) << ',' << r.model_idx << ',' << r.dim
        << ",," << (r.ok ? fmt_full(r.mae) : "") << ",," << r.seed << '\n';
  }
}

inline void write_reliability_jsonl(const std::vector<MaeRecord>& records,
                                    std::ostream& out) {
  for (const MaeRecord& r : records) {
    nlohmann::json j{{"kind", model_kind_name(r.kind)},
                     {"fitted", fitted_kind_name(r.fitted)},
                     {"method", attrib_method_name(r.method)},
                     {"model_idx", r.model_idx},
                     {"d", r.dim},
                     {"mae", r.mae},
                     {"seed", r.seed},
                     {"ok", r.ok},
                     {"rng", "splitmix64"}};
    if (!r.ok) j["error"] = r.error;
    out << j.dump() << '\n';
  }
}

inline void write_scalability_csv(const std::vector<ScalabilityRecord>& records,
                                  std::ostream& out) {
  out << kResultsCsvHeader << '\n';
  for (const ScalabilityRecord& r : records) {
    out << "linear,,fine_sampled,," << r.dim << ',' << r.budget << ','
        << fmt_full(r.mae_mean) << ',' << fmt_full(r.mae_stderr) << ','
        << r.seed << '\n';
  }
}

inline void write_scalability_jsonl(
    const std::vector<ScalabilityRecord>& records, std::ostream& out) {
  for (const ScalabilityRecord& r : records) {
    const nlohmann::json j{{"kind", "linear"},
                           {"method", "fine_sampled"},
                           {"d", r.dim},
                           {"budget", r.budget},
                           {"mae", r.mae_mean},
                           {"stderr", r.mae_stderr},
                           {"seed", r.seed},
                           {"rng", "splitmix64"}};
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Bootstrap confidence intervals for attributions of fitted mechanisms.

struct BootstrapConfig {
  int num_resamples = 1000;
  std::uint64_t seed = 0;
  bool with_intercept = false;
};

struct PlayerInterval {
  double lo = 0.0;
  double hi = 0.0;
};

struct BootstrapResult {
  AttributionResult point;  // full-data fit attribution
  std::map<Player, PlayerInterval> intervals;  // 95% percentile
  int resamples_used = 0;
  int resamples_skipped = 0;
};

namespace detail {

inline Dataset resample_rows(const Dataset& data, SplitMix64& rng) {
  const std::size_t n = data.size();
  Matrix x(n, data.dim());
  Vec y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pick = static_cast<std::size_t>(rng.below(n));
    for (std::size_t j = 0; j < data.dim(); ++j) x(i, j) = data.x(pick, j);
    y[i] = data.y[pick];
  }
  return Dataset(std::move(x), std::move(y));
}

// Linear-interpolation percentile on a sorted sample (type 7).
inline double percentile_sorted(const Vec& sorted, double p) {
  const std::size_t m = sorted.size();
  if (m == 1) return sorted[0];
  const double h = p * static_cast<double>(m - 1);
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= m) return sorted[m - 1];
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace detail

// Percentile bootstrap over refits: each resample redraws rows with
// replacement per scenario, refits OLS, and recomputes the closed-form
// attribution of the given instance. Resamples whose fit loses rank are
// skipped and counted.
inline BootstrapResult bootstrap_attributions(const Dataset& bg,
                                              const Dataset& fg,
                                              std::span<const double> x_bg,
                                              std::span<const double> x_fg,
                                              const BootstrapConfig& config) {
  if (config.num_resamples < 100) {
    throw ValidationError("bootstrap needs at least 100 resamples");
  }
  BootstrapResult out;
  const OlsFit full_bg = fit_ols(bg, config.with_intercept);
  const OlsFit full_fg = fit_ols(fg, config.with_intercept);
  out.point = linear_attrib(full_bg.model, full_fg.model, x_bg, x_fg);

  std::map<Player, Vec> samples;
  for (const auto& [p, c] : out.point.credits) samples[p] = {};

  SplitMix64 rng(config.seed);
  for (int b = 0; b < config.num_resamples; ++b) {
    const Dataset re_bg = detail::resample_rows(bg, rng);
    const Dataset re_fg = detail::resample_rows(fg, rng);
    const OlsFit fit_bg_b = fit_ols(re_bg, config.with_intercept);
    const OlsFit fit_fg_b = fit_ols(re_fg, config.with_intercept);
    if (fit_bg_b.rank_deficient || fit_fg_b.rank_deficient) {
      ++out.resamples_skipped;
      continue;
    }
    const AttributionResult r =
        linear_attrib(fit_bg_b.model, fit_fg_b.model, x_bg, x_fg);
    for (auto& [p, values] : samples) values.push_back(r.credit(p));
    ++out.resamples_used;
  }

  if (out.resamples_used == 0) {
    throw NumericError("every bootstrap resample was rank deficient");
  }
  for (auto& [p, values] : samples) {
    std::sort(values.begin(), values.end());
    out.intervals[p] = {detail::percentile_sorted(values, 0.025),
                        detail::percentile_sorted(values, 0.975)};
  }
  return out;
}

}  // namespace deltattr

#endif  // DELTATTR_EXPERIMENTS_HPP
