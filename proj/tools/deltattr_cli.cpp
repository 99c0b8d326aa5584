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

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "deltattr/attribution.hpp"
#include "deltattr/casestudy.hpp"
#include "deltattr/core.hpp"
#include "deltattr/experiments.hpp"
#include "deltattr/fcm.hpp"
#include "deltattr/fcm_io.hpp"
#include "deltattr/model_io.hpp"
#include "deltattr/models.hpp"

namespace {

using namespace deltattr;

// Exit codes: 0 success, 2 usage/validation, 3 data error, 4 numerical
// failure.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("DELTA_ATTRIB_SEED")) {
    std::uint64_t value = 0;
    const std::string s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec == std::errc() && ptr == s.data() + s.size()) return value;
    throw ValidationError("DELTA_ATTRIB_SEED is not an unsigned integer: " + s);
  }
  return 0;
}

Vec parse_vector(const std::string& text, const std::string& flag) {
  Vec out;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    std::size_t end = text.find(',', begin);
    if (end == std::string::npos) end = text.size();
    const std::string cell = text.substr(begin, end - begin);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) {
      throw ValidationError(flag + ": cannot parse '" + cell + "' as a number");
    }
    out.push_back(value);
    begin = end + 1;
  }
  return out;
}

std::vector<Player> parse_order(const std::string& text, int arity) {
  std::vector<Player> order;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    std::size_t end = text.find(',', begin);
    if (end == std::string::npos) end = text.size();
    const std::string token = text.substr(begin, end - begin);
    if (token == "f" || token == "mechanism") {
      order.push_back(Player::mechanism());
    } else if (token.size() > 1 && token[0] == 'x') {
      int idx = 0;
      const auto [ptr, ec] =
          std::from_chars(token.data() + 1, token.data() + token.size(), idx);
      if (ec != std::errc() || ptr != token.data() + token.size() || idx < 1 ||
          idx > arity) {
        throw ValidationError("--order: bad player token '" + token + "'");
      }
      order.push_back(Player::input(idx - 1));
    } else {
      throw ValidationError("--order: bad player token '" + token +
                            "' (use f, x1, x2, ...)");
    }
    begin = end + 1;
  }
  return order;
}

void print_table(const AttributionResult& result, const PlayerNames& names,
                 std::ostream& out) {
  out << "method: " << method_name(result.method) << "\n";
  char line[160];
  std::snprintf(line, sizeof(line), "delta_y: %.6g\n", result.delta_y);
  out << line;
  for (const auto& [player, credit] : result.credits) {
    if (result.std_errors && result.std_errors->count(player)) {
      std::snprintf(line, sizeof(line), "  %-12s %12.6g  (se %.6g)\n",
                    names.of(player).c_str(), credit,
                    result.std_errors->at(player));
    } else {
      std::snprintf(line, sizeof(line), "  %-12s %12.6g\n",
                    names.of(player).c_str(), credit);
    }
    out << line;
  }
  if (result.permutations_used) {
    out << "permutations: " << *result.permutations_used << " (rng splitmix64)\n";
  }
}

void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write output file '" + path + "'");
  out << j.dump(2) << '\n';
}

// --format for single-result subcommands: json keeps full precision, csv is
// one row per player, text mirrors the stdout table.
void write_result_file(const AttributionResult& result, const PlayerNames& names,
                       const std::string& format, const std::string& path) {
  if (format == "json") {
    write_json_file(result_to_json(result, names), path);
    return;
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write output file '" + path + "'");
  if (format == "csv") {
    out << "player,credit,stderr\n";
    for (const auto& [player, credit] : result.credits) {
      out << names.of(player) << ',' << fmt_full(credit) << ',';
      if (result.std_errors && result.std_errors->count(player)) {
        out << fmt_full(result.std_errors->at(player));
      }
      out << '\n';
    }
  } else if (format == "text") {
    print_table(result, names, out);
  } else {
    throw ValidationError("--format must be json, csv, or text");
  }
}

struct AttributeArgs {
  std::string model_bg, model_fg;
  std::string x_bg_text, x_fg_text;
  std::string method = "fine";
  std::string order_text;
  std::optional<std::uint64_t> budget;
  std::uint64_t seed = 0;
  int exact_limit = kDefaultExactLimit;
  std::string out_path;
  std::string format = "json";
};

int run_attribute(const AttributeArgs& args) {
  const ModelFile bg = load_model(args.model_bg);
  const ModelFile fg = load_model(args.model_fg);
  const Vec x_bg = parse_vector(args.x_bg_text, "--x-bg");
  const Vec x_fg = parse_vector(args.x_fg_text, "--x-fg");
  const int d = arity_of(bg);
  if (arity_of(fg) != d) {
    throw ValidationError("model arities differ: " + std::to_string(d) +
                          " vs " + std::to_string(arity_of(fg)));
  }
  if (static_cast<int>(x_bg.size()) != d || static_cast<int>(x_fg.size()) != d) {
    throw ValidationError("--x-bg/--x-fg must have " + std::to_string(d) +
                          " entries to match the models");
  }

  AttributionResult result;
  if (args.method == "linear") {
    const auto* lin_bg = std::get_if<LinearModel>(&bg);
    const auto* lin_fg = std::get_if<LinearModel>(&fg);
    if (!lin_bg || !lin_fg) {
      throw ValidationError("--method linear needs linear model files");
    }
    result = linear_attrib(*lin_bg, *lin_fg, x_bg, x_fg);
  } else {
    const ChangeInstance inst(x_bg, x_fg, mechanism_of(bg), mechanism_of(fg));
    if (args.method == "coarse") {
      result = coarse_attrib(inst);
    } else if (args.method == "fine") {
      if (d > args.exact_limit) {
        if (!args.budget) {
          throw ValidationError(
              "d = " + std::to_string(d) + " exceeds the exact limit of " +
              std::to_string(args.exact_limit) +
              "; pass --budget M to sample, or raise --exact-limit");
        }
        result = fine_attrib_sampled(
            inst, {.num_permutations = *args.budget, .seed = args.seed});
      } else {
        result = fine_attrib_exact(inst, args.exact_limit);
      }
    } else if (args.method == "sampled") {
      if (!args.budget) {
        throw ValidationError("--method sampled requires --budget");
      }
      result = fine_attrib_sampled(
          inst, {.num_permutations = *args.budget, .seed = args.seed});
    } else if (args.method == "ordered") {
      std::vector<Player> order = args.order_text.empty()
                                      ? natural_order(d)
                                      : parse_order(args.order_text, d);
      result = ordered_attrib(inst, order);
    } else {
      throw ValidationError("unknown method '" + args.method + "'");
    }
  }

  const PlayerNames names;
  print_table(result, names, std::cout);
  if (!args.out_path.empty()) {
    write_result_file(result, names, args.format, args.out_path);
  }
  return kExitOk;
}

struct SimulateArgs {
  // reliability
  int models = 100;
  int n = 2000;
  std::string kinds = "linear,polynomial";
  std::string fitted = "ols_linear,stump_ensemble";
  int stump_rounds = 50;
  double stump_rate = 0.3;
  // scalability
  std::string dims = "10,20,30";
  std::string budgets = "10,100,1000";
  int repeats = 100;
  int instances = 1000;
  // shared
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out_csv, out_jsonl;
};

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    std::size_t end = text.find(',', begin);
    if (end == std::string::npos) end = text.size();
    out.push_back(text.substr(begin, end - begin));
    begin = end + 1;
  }
  return out;
}

template <typename WriteCsv, typename WriteJsonl>
void emit_results(const SimulateArgs& args, WriteCsv&& write_csv,
                  WriteJsonl&& write_jsonl) {
  if (!args.out_csv.empty()) {
    std::ofstream out(args.out_csv);
    if (!out) throw DataError("cannot write '" + args.out_csv + "'");
    write_csv(out);
  }
  if (!args.out_jsonl.empty()) {
    std::ofstream out(args.out_jsonl);
    if (!out) throw DataError("cannot write '" + args.out_jsonl + "'");
    write_jsonl(out);
  }
}

int run_reliability_cmd(const SimulateArgs& args) {
  ReliabilityConfig config;
  config.num_models = args.models;
  config.n = args.n;
  config.seed = args.seed;
  config.threads = args.threads;
  config.stump_rounds = args.stump_rounds;
  config.stump_rate = args.stump_rate;
  config.model_kinds.clear();
  for (const std::string& k : split_tokens(args.kinds)) {
    if (k == "linear") {
      config.model_kinds.push_back(ModelKind::kLinear);
    } else if (k == "polynomial") {
      config.model_kinds.push_back(ModelKind::kPolynomial);
    } else {
      throw ValidationError("unknown ground-truth kind '" + k + "'");
    }
  }
  config.fitted_kinds.clear();
  for (const std::string& k : split_tokens(args.fitted)) {
    if (k == "ols_linear") {
      config.fitted_kinds.push_back(FittedKind::kOlsLinear);
    } else if (k == "stump_ensemble") {
      config.fitted_kinds.push_back(FittedKind::kStumpEnsemble);
    } else if (k == "truth") {
      config.fitted_kinds.push_back(FittedKind::kTruth);
    } else {
      throw ValidationError("unknown fitted kind '" + k + "'");
    }
  }

  const auto records = run_reliability(config);
  emit_results(
      args, [&](std::ostream& o) { write_reliability_csv(records, o); },
      [&](std::ostream& o) { write_reliability_jsonl(records, o); });

  // Per-cell medians as the human summary.
  std::map<std::string, Vec> cells;
  for (const auto& r : records) {
    if (!r.ok) continue;
    cells[std::string(model_kind_name(r.kind)) + "/" + fitted_kind_name(r.fitted) +
          "/" + attrib_method_name(r.method)]
        .push_back(r.mae);
  }
  std::printf("%zu records (%d models, n=%d, seed=%llu, rng splitmix64)\n",
              records.size(), config.num_models, config.n,
              static_cast<unsigned long long>(config.seed));
  for (auto& [cell, values] : cells) {
    std::sort(values.begin(), values.end());
    const double median = values[values.size() / 2];
    std::printf("  %-40s median MAE %.6g over %zu models\n", cell.c_str(),
                median, values.size());
  }
  return kExitOk;
}

int run_scalability_cmd(const SimulateArgs& args) {
  ScalabilityConfig config;
  config.seed = args.seed;
  config.threads = args.threads;
  config.repeats = args.repeats;
  config.n = args.instances;
  config.dims.clear();
  for (const std::string& t : split_tokens(args.dims)) {
    config.dims.push_back(std::stoi(t));
  }
  config.budgets.clear();
  for (const std::string& t : split_tokens(args.budgets)) {
    config.budgets.push_back(std::stoull(t));
  }

  const auto records = run_scalability(config);
  emit_results(
      args, [&](std::ostream& o) { write_scalability_csv(records, o); },
      [&](std::ostream& o) { write_scalability_jsonl(records, o); });

  std::printf("%zu cells (repeats=%d, instances=%d, seed=%llu, rng splitmix64)\n",
              records.size(), config.repeats, config.n,
              static_cast<unsigned long long>(config.seed));
  for (const auto& r : records) {
    std::printf("  d=%-3d budget=%-8llu MAE %.6g (se %.6g)\n", r.dim,
                static_cast<unsigned long long>(r.budget), r.mae_mean,
                r.mae_stderr);
  }
  return kExitOk;
}

struct CasestudyArgs {
  std::string panel_path;
  int bg_year = 1976;
  int fg_year = 1982;
  std::string method = "linear";
  bool with_intercept = false;
  std::optional<long long> unit;
  std::optional<int> bootstrap;
  std::uint64_t seed = 0;
  std::string out_path, units_csv;
};

int run_casestudy(const CasestudyArgs& args) {
  if (args.method != "fine" && args.method != "linear") {
    throw ValidationError("--method must be linear or fine");
  }
  const PanelDataset data = ingest_panel(args.panel_path);
  if (!data.single_year_units.empty()) {
    std::printf("note: %zu unit(s) appear in a single year and are excluded: ",
                data.single_year_units.size());
    for (std::size_t i = 0; i < data.single_year_units.size() && i < 8; ++i) {
      std::printf("%s%lld", i ? ", " : "", data.single_year_units[i]);
    }
    std::printf(data.single_year_units.size() > 8 ? ", ...\n" : "\n");
  }
  const PanelMethod method = args.method == "fine" ? PanelMethod::kFine
                                                   : PanelMethod::kLinear;
  const PanelAttribution panel =
      attribute_panel(data, args.bg_year, args.fg_year, method, args.with_intercept);

  PlayerNames names;
  names.inputs = panel.feature_names;
  std::printf("%d -> %d: %d units (%d with higher wage)\n", panel.bg_year,
              panel.fg_year, panel.report.total_units,
              panel.report.units_increased);
  std::printf("delta wage%%: %.6g%%\n", panel.report.delta_wage_pct);
  std::printf("fit R^2 (centered/uncentered): %d: %.6g/%.6g  %d: %.6g/%.6g\n",
              panel.bg_year, panel.fit_bg.r2_centered, panel.fit_bg.r2_uncentered,
              panel.fg_year, panel.fit_fg.r2_centered, panel.fit_fg.r2_uncentered);
  std::printf("aggregate credits (share of total change):\n");
  for (const auto& [player, sum] : panel.report.sums) {
    std::printf("  %-12s %12.6g  (%.6g%%)\n", names.of(player).c_str(), sum,
                panel.report.shares_pct.at(player));
  }

  if (args.unit) {
    std::printf("\n%s", unit_report(panel, *args.unit).c_str());
    if (args.bootstrap) {
      const UnitAttribution& unit = find_unit(panel, *args.unit);
      std::vector<const PanelRow*> bg_rows, fg_rows;
      for (const PanelRow& row : data.rows) {
        if (row.year == args.bg_year) bg_rows.push_back(&row);
        if (row.year == args.fg_year) fg_rows.push_back(&row);
      }
      const auto make_dataset = [&](const std::vector<const PanelRow*>& rows) {
        Matrix x(rows.size(), data.schema.features.size());
        Vec y(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
          for (std::size_t j = 0; j < data.schema.features.size(); ++j) {
            x(i, j) = rows[i]->features[j];
          }
          y[i] = rows[i]->wage;
        }
        return Dataset(std::move(x), std::move(y));
      };
      const BootstrapResult boot = bootstrap_attributions(
          make_dataset(bg_rows), make_dataset(fg_rows), unit.x_bg, unit.x_fg,
          {.num_resamples = *args.bootstrap, .seed = args.seed,
           .with_intercept = args.with_intercept});
      std::printf("bootstrap 95%% intervals (%d resamples, %d skipped):\n",
                  boot.resamples_used, boot.resamples_skipped);
      for (const auto& [player, iv] : boot.intervals) {
        std::printf("  %-12s [%.6g, %.6g]\n", names.of(player).c_str(), iv.lo,
                    iv.hi);
      }
    }
  }

  if (!args.out_path.empty()) write_json_file(aggregate_to_json(panel), args.out_path);
  if (!args.units_csv.empty()) {
    std::ofstream out(args.units_csv);
    if (!out) throw DataError("cannot write '" + args.units_csv + "'");
    write_unit_credits_csv(panel, out);
  }
  return kExitOk;
}

struct FcmArgs {
  std::string spec_path, obs_bg_path, obs_fg_path;
  std::optional<std::uint64_t> budget;
  std::uint64_t seed = 0;
  int exact_limit = kDefaultExactLimit;
  std::string out_path;
  std::string format = "json";
};

int run_fcm(const FcmArgs& args) {
  const InvertibleFcm fcm = load_fcm(args.spec_path);
  const Vec obs_bg = load_observations(fcm, args.obs_bg_path);
  const Vec obs_fg = load_observations(fcm, args.obs_fg_path);
  std::optional<SamplingConfig> config;
  if (args.budget) {
    config = SamplingConfig{.num_permutations = *args.budget, .seed = args.seed};
  }
  const AttributionResult result =
      fcm_attrib(fcm, obs_bg, obs_fg, config, args.exact_limit);
  PlayerNames names;
  names.nodes = fcm_node_names(fcm);
  print_table(result, names, std::cout);
  if (!args.out_path.empty()) {
    write_result_file(result, names, args.format, args.out_path);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shapley-value attribution of unit-level output changes to "
               "mechanism and input changes"};
  app.require_subcommand(1);

  AttributeArgs attr;
  SimulateArgs sim;
  CasestudyArgs cs;
  FcmArgs fcm;

  std::uint64_t seed_flag = 0;
  bool seed_set = false;

  auto* attribute = app.add_subcommand(
      "attribute", "Attribute one change between two model files");
  attribute->add_option("--model-bg", attr.model_bg, "background model JSON")
      ->required()->check(CLI::ExistingFile);
  attribute->add_option("--model-fg", attr.model_fg, "foreground model JSON")
      ->required()->check(CLI::ExistingFile);
  attribute->add_option("--x-bg", attr.x_bg_text, "background inputs, comma separated")
      ->required();
  attribute->add_option("--x-fg", attr.x_fg_text, "foreground inputs, comma separated")
      ->required();
  attribute->add_option("--method", attr.method,
                        "coarse | linear | fine | sampled | ordered");
  attribute->add_option("--order", attr.order_text,
                        "player order for --method ordered, e.g. f,x2,x1");
  attribute->add_option("--budget", attr.budget, "permutations for sampling");
  attribute->add_option("--exact-limit", attr.exact_limit,
                        "max d for exact fine attribution");
  attribute->add_option("--out", attr.out_path, "result file path");
  attribute->add_option("--format", attr.format, "json | csv | text");

  auto* simulate = app.add_subcommand("simulate", "Run the simulation studies");
  simulate->require_subcommand(1);
  auto* reliability = simulate->add_subcommand(
      "reliability", "attribution error of fitted models vs ground truth");
  reliability->add_option("--models", sim.models, "number of ground-truth models");
  reliability->add_option("--n", sim.n, "sample size per scenario");
  reliability->add_option("--kinds", sim.kinds, "ground-truth kinds");
  reliability->add_option("--fitted", sim.fitted, "fitted kinds");
  reliability->add_option("--stump-rounds", sim.stump_rounds, "boosting rounds");
  reliability->add_option("--stump-rate", sim.stump_rate, "boosting rate");
  auto* scalability = simulate->add_subcommand(
      "scalability", "sampled fine attribution error vs permutation budget");
  scalability->add_option("--dims", sim.dims, "input dimensions");
  scalability->add_option("--budgets", sim.budgets, "ascending permutation budgets");
  scalability->add_option("--repeats", sim.repeats, "models per cell");
  scalability->add_option("--instances", sim.instances, "instances per model");
  for (CLI::App* sub : {reliability, scalability}) {
    sub->add_option("--out-csv", sim.out_csv, "CSV results path");
    sub->add_option("--out-jsonl", sim.out_jsonl, "JSON-lines results path");
    sub->add_option("--threads", sim.threads, "worker threads (outputs unchanged)");
  }

  auto* casestudy = app.add_subcommand(
      "casestudy", "Two-wave panel pipeline: fit yearly mechanisms, attribute per unit");
  casestudy->add_option("--panel", cs.panel_path, "panel CSV")
      ->required()->check(CLI::ExistingFile);
  casestudy->add_option("--bg-year", cs.bg_year, "background year");
  casestudy->add_option("--fg-year", cs.fg_year, "foreground year");
  casestudy->add_option("--method", cs.method, "linear | fine");
  casestudy->add_flag("--intercept", cs.with_intercept,
                      "fit with the constant pseudo-feature");
  casestudy->add_option("--unit", cs.unit, "print a unit report");
  casestudy->add_option("--bootstrap", cs.bootstrap,
                        "bootstrap resamples for the unit intervals");
  casestudy->add_option("--out", cs.out_path, "aggregate report JSON path");
  casestudy->add_option("--units-csv", cs.units_csv, "per-unit credits CSV path");

  auto* fcm_cmd = app.add_subcommand(
      "fcm", "Attribute a change through an invertible FCM's noise values");
  fcm_cmd->add_option("--spec", fcm.spec_path, "FCM spec JSON")
      ->required()->check(CLI::ExistingFile);
  fcm_cmd->add_option("--obs-bg", fcm.obs_bg_path, "background observations JSON")
      ->required()->check(CLI::ExistingFile);
  fcm_cmd->add_option("--obs-fg", fcm.obs_fg_path, "foreground observations JSON")
      ->required()->check(CLI::ExistingFile);
  fcm_cmd->add_option("--budget", fcm.budget, "permutations for sampling");
  fcm_cmd->add_option("--exact-limit", fcm.exact_limit,
                      "max node count for exact attribution");
  fcm_cmd->add_option("--out", fcm.out_path, "result file path");
  fcm_cmd->add_option("--format", fcm.format, "json | csv | text");

  for (CLI::App* sub : {attribute, reliability, scalability, casestudy, fcm_cmd}) {
    sub->add_option("--seed", seed_flag, "seed for every random draw")
        ->each([&seed_set](const std::string&) { seed_set = true; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message/help
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  try {
    const std::uint64_t seed = seed_set ? seed_flag : default_seed();
    attr.seed = sim.seed = cs.seed = fcm.seed = seed;
    if (attribute->parsed()) return run_attribute(attr);
    if (reliability->parsed()) return run_reliability_cmd(sim);
    if (scalability->parsed()) return run_scalability_cmd(sim);
    if (casestudy->parsed()) return run_casestudy(cs);
    if (fcm_cmd->parsed()) return run_fcm(fcm);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
