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

#ifndef DELTATTR_CASESTUDY_HPP
#define DELTATTR_CASESTUDY_HPP

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "deltattr/attribution.hpp"
#include "deltattr/core.hpp"
#include "deltattr/model_io.hpp"
#include "deltattr/models.hpp"

namespace deltattr {

struct PanelColumn {
  std::string name;
  bool boolean = false;
};

// Column layout of a two-wave panel extract. The default matches the
// earnings data: target is log-earnings ("wage"), inputs are years of
// education and experience, weeks worked, and five 0/1 indicators.
struct PanelSchema {
  std::vector<PanelColumn> features;

  static PanelSchema earnings() {
    PanelSchema s;
    s.features = {{"edu", false},  {"exp", false},  {"weeks", false},
                  {"occ", true},   {"union", true}, {"ind", true},
                  {"smsa", true},  {"south", true}};
    return s;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(features.size());
    for (const auto& c : features) out.push_back(c.name);
    return out;
  }
};

struct PanelRow {
  long long id = 0;
  int year = 0;
  Vec features;
  double wage = 0.0;
};

struct PanelDataset {
  PanelSchema schema;
  std::vector<PanelRow> rows;
  // Units that appear in exactly one year; they are kept for fitting but
  // excluded from change attribution.
  std::vector<long long> single_year_units;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (const char c : line) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  return cells;
}

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

[[noreturn]] inline void cell_error(const std::string& what, std::size_t row,
                                    const std::string& column) {
  throw DataError("cannot parse " + what + " at row " + std::to_string(row) +
                  ", column '" + column + "'");
}

inline double parse_number(const std::string& raw, std::size_t row,
                           const std::string& column) {
  const std::string s = trim(raw);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    cell_error("number '" + raw + "'", row, column);
  }
  return value;
}

inline double parse_boolean(const std::string& raw, std::size_t row,
                            const std::string& column) {
  const std::string s = lower(trim(raw));
  if (s == "1" || s == "yes" || s == "true") return 1.0;
  if (s == "0" || s == "no" || s == "false") return 0.0;
  cell_error("boolean '" + raw + "'", row, column);
}

inline long long parse_integer(const std::string& raw, std::size_t row,
                               const std::string& column) {
  const double v = parse_number(raw, row, column);
  if (v != std::floor(v)) cell_error("integer '" + raw + "'", row, column);
  return static_cast<long long>(v);
}

}  // namespace detail

// Reads a comma-separated panel extract with a header row. Required columns
// are id, year, wage, and every schema feature; extra columns are ignored.
// Boolean features accept {0, 1, yes, no, true, false}.
inline PanelDataset ingest_panel(const std::string& path,
                                 const PanelSchema& schema = PanelSchema::earnings()) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open panel file '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("panel file '" + path + "' is empty");
  const std::vector<std::string> header = detail::split_csv_line(line);

  std::map<std::string, std::size_t> column_of;
  for (std::size_t i = 0; i < header.size(); ++i) {
    column_of[detail::lower(detail::trim(header[i]))] = i;
  }
  const auto require = [&](const std::string& name) {
    const auto it = column_of.find(name);
    if (it == column_of.end()) {
      throw DataError("panel file is missing required column '" + name + "'");
    }
    return it->second;
  };
  const std::size_t id_col = require("id");
  const std::size_t year_col = require("year");
  const std::size_t wage_col = require("wage");
  std::vector<std::size_t> feature_cols;
  for (const auto& c : schema.features) feature_cols.push_back(require(c.name));

  PanelDataset data;
  data.schema = schema;
  std::set<std::pair<long long, int>> seen;
  std::map<long long, std::set<int>> years_of;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (detail::trim(line).empty()) continue;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() < header.size()) {
      throw DataError("row " + std::to_string(row_no) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(header.size()));
    }
    PanelRow row;
    row.id = detail::parse_integer(cells[id_col], row_no, "id");
    row.year = static_cast<int>(detail::parse_integer(cells[year_col], row_no, "year"));
    row.wage = detail::parse_number(cells[wage_col], row_no, "wage");
    if (!std::isfinite(row.wage)) detail::cell_error("finite wage", row_no, "wage");
    for (std::size_t f = 0; f < schema.features.size(); ++f) {
      const auto& col = schema.features[f];
      row.features.push_back(
          col.boolean ? detail::parse_boolean(cells[feature_cols[f]], row_no, col.name)
                      : detail::parse_number(cells[feature_cols[f]], row_no, col.name));
    }
    if (!seen.insert({row.id, row.year}).second) {
      throw DataError("duplicate (id, year) = (" + std::to_string(row.id) +
                      ", " + std::to_string(row.year) + ") at row " +
                      std::to_string(row_no));
    }
    years_of[row.id].insert(row.year);
    data.rows.push_back(std::move(row));
  }
  if (data.rows.empty()) throw DataError("panel file '" + path + "' has no data rows");

  for (const auto& [id, years] : years_of) {
    if (years.size() == 1) data.single_year_units.push_back(id);
  }
  return data;
}

enum class PanelMethod : std::uint8_t { kLinear, kFine };

struct UnitAttribution {
  long long id = 0;
  AttributionResult result;
  Vec x_bg, x_fg;
  double wage_bg = 0.0;  // observed
  double wage_fg = 0.0;
};

// All sums, shares, and the grand total live in fitted-mechanism space
// (credits sum to the fitted output change per unit, so shares add to 100%
// exactly). delta_wage_pct follows the survey formula on the observed wage
// column, which stays in natural-log units throughout.
struct AggregateReport {
  double delta_wage_pct = 0.0;
  std::map<Player, double> sums;
  std::map<Player, double> shares_pct;
  double total_delta = 0.0;  // sum of per-unit fitted output changes
  int units_increased = 0;   // observed wage increases
  int total_units = 0;
};

struct PanelAttribution {
  int bg_year = 0;
  int fg_year = 0;
  PanelMethod method = PanelMethod::kLinear;
  std::vector<std::string> feature_names;
  OlsFit fit_bg, fit_fg;
  std::vector<UnitAttribution> units;  // sorted by unit id
  AggregateReport report;
};

// Fits one linear mechanism per year (no free intercept unless requested)
// and attributes every unit present in both years. method kLinear uses the
// closed form; kFine runs exact fine-grained attribution on the fitted pair
// (equal by the linear-equivalence theorem, kept as a cross-check).
inline PanelAttribution attribute_panel(const PanelDataset& data, int bg_year,
                                        int fg_year,
                                        PanelMethod method = PanelMethod::kLinear,
                                        bool with_intercept = false) {
  const std::size_t d = data.schema.features.size();
  std::vector<const PanelRow*> bg_rows, fg_rows;
  for (const PanelRow& row : data.rows) {
    if (row.year == bg_year) bg_rows.push_back(&row);
    if (row.year == fg_year) fg_rows.push_back(&row);
  }
  if (bg_rows.empty()) throw DataError("no rows for background year " + std::to_string(bg_year));
  if (fg_rows.empty()) throw DataError("no rows for foreground year " + std::to_string(fg_year));

  const auto make_dataset = [&](const std::vector<const PanelRow*>& rows) {
    Matrix x(rows.size(), d);
    Vec y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) x(i, j) = rows[i]->features[j];
      y[i] = rows[i]->wage;
    }
    return Dataset(std::move(x), std::move(y));
  };

  PanelAttribution out;
  out.bg_year = bg_year;
  out.fg_year = fg_year;
  out.method = method;
  out.feature_names = data.schema.names();
  out.fit_bg = fit_ols(make_dataset(bg_rows), with_intercept);
  out.fit_fg = fit_ols(make_dataset(fg_rows), with_intercept);

  std::map<long long, const PanelRow*> bg_by_id, fg_by_id;
  for (const PanelRow* r : bg_rows) bg_by_id[r->id] = r;
  for (const PanelRow* r : fg_rows) fg_by_id[r->id] = r;

  const Mechanism mech_bg = out.fit_bg.model.mechanism();
  const Mechanism mech_fg = out.fit_fg.model.mechanism();

  double observed_bg_total = 0.0, observed_delta_total = 0.0;
  for (const auto& [id, bg_row] : bg_by_id) {
    const auto fg_it = fg_by_id.find(id);
    if (fg_it == fg_by_id.end()) continue;
    const PanelRow* fg_row = fg_it->second;

    UnitAttribution unit;
    unit.id = id;
    unit.x_bg = bg_row->features;
    unit.x_fg = fg_row->features;
    unit.wage_bg = bg_row->wage;
    unit.wage_fg = fg_row->wage;
    unit.result =
        method == PanelMethod::kLinear
            ? linear_attrib(out.fit_bg.model, out.fit_fg.model, unit.x_bg, unit.x_fg)
            : fine_attrib_exact(ChangeInstance(unit.x_bg, unit.x_fg, mech_bg, mech_fg));

    observed_bg_total += unit.wage_bg;
    observed_delta_total += unit.wage_fg - unit.wage_bg;
    if (unit.wage_fg > unit.wage_bg) ++out.report.units_increased;
    for (const auto& [player, credit] : unit.result.credits) {
      out.report.sums[player] += credit;
    }
    out.report.total_delta += unit.result.delta_y;
    out.units.push_back(std::move(unit));
  }
  if (out.units.empty()) {
    throw DataError("no unit appears in both " + std::to_string(bg_year) +
                    " and " + std::to_string(fg_year));
  }

  out.report.total_units = static_cast<int>(out.units.size());
  out.report.delta_wage_pct = observed_bg_total != 0.0
                                  ? observed_delta_total / observed_bg_total * 100.0
                                  : 0.0;
  for (const auto& [player, sum] : out.report.sums) {
    out.report.shares_pct[player] =
        out.report.total_delta != 0.0 ? sum / out.report.total_delta * 100.0 : 0.0;
  }
  return out;
}

inline const UnitAttribution& find_unit(const PanelAttribution& panel,
                                        long long unit_id) {
  for (const UnitAttribution& u : panel.units) {
    if (u.id == unit_id) return u;
  }
  throw DataError("unknown unit id " + std::to_string(unit_id));
}

namespace detail {

inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace detail

// Human-readable per-unit breakdown: observed wage change, each player's
// credit with its share of the fitted output change, and the raw feature
// values in both years.
inline std::string unit_report(const PanelAttribution& panel, long long unit_id) {
  const UnitAttribution& unit = find_unit(panel, unit_id);
  const double delta = unit.result.delta_y;
  std::ostringstream out;
  out << "unit " << unit_id << ": wage " << detail::fmt6(unit.wage_bg) << " ("
      << panel.bg_year << ") -> " << detail::fmt6(unit.wage_fg) << " ("
      << panel.fg_year << "), observed change "
      << detail::fmt6(unit.wage_fg - unit.wage_bg) << ", fitted change "
      << detail::fmt6(delta) << "\n";
  out << "  player      before     after      credit     share\n";
  const auto share = [&](double credit) {
    return delta != 0.0 ? detail::fmt6(credit / delta * 100.0) + "%" : "-";
  };
  char line[160];
  for (std::size_t j = 0; j < panel.feature_names.size(); ++j) {
    const Player p = Player::input(static_cast<int>(j));
    std::snprintf(line, sizeof(line), "  %-10s %-10s %-10s %-10s %s\n",
                  panel.feature_names[j].c_str(),
                  detail::fmt6(unit.x_bg[j]).c_str(),
                  detail::fmt6(unit.x_fg[j]).c_str(),
                  detail::fmt6(unit.result.credit(p)).c_str(),
                  share(unit.result.credit(p)).c_str());
    out << line;
  }
  std::snprintf(line, sizeof(line), "  %-10s %-10s %-10s %-10s %s\n",
                "mechanism", "-", "-",
                detail::fmt6(unit.result.credit(Player::mechanism())).c_str(),
                share(unit.result.credit(Player::mechanism())).c_str());
  out << line;
  return out.str();
}

inline nlohmann::json aggregate_to_json(const PanelAttribution& panel) {
  PlayerNames names;
  names.inputs = panel.feature_names;
  nlohmann::json sums = nlohmann::json::object();
  nlohmann::json shares = nlohmann::json::object();
  for (const auto& [p, v] : panel.report.sums) sums[names.of(p)] = v;
  for (const auto& [p, v] : panel.report.shares_pct) shares[names.of(p)] = v;
  nlohmann::json fit = {
      {"bg", {{"r2_centered", panel.fit_bg.r2_centered},
              {"r2_uncentered", panel.fit_bg.r2_uncentered},
              {"rank_deficient", panel.fit_bg.rank_deficient}}},
      {"fg", {{"r2_centered", panel.fit_fg.r2_centered},
              {"r2_uncentered", panel.fit_fg.r2_uncentered},
              {"rank_deficient", panel.fit_fg.rank_deficient}}}};
  nlohmann::json coeffs_bg = nlohmann::json::object();
  nlohmann::json coeffs_fg = nlohmann::json::object();
  for (std::size_t j = 0; j < panel.feature_names.size(); ++j) {
    coeffs_bg[panel.feature_names[j]] = panel.fit_bg.model.coeffs[j];
    coeffs_fg[panel.feature_names[j]] = panel.fit_fg.model.coeffs[j];
  }
  fit["bg"]["coefficients"] = std::move(coeffs_bg);
  fit["fg"]["coefficients"] = std::move(coeffs_fg);
  if (panel.fit_bg.model.intercept) fit["bg"]["intercept"] = *panel.fit_bg.model.intercept;
  if (panel.fit_fg.model.intercept) fit["fg"]["intercept"] = *panel.fit_fg.model.intercept;

  return nlohmann::json{{"bg_year", panel.bg_year},
                        {"fg_year", panel.fg_year},
                        {"method", panel.method == PanelMethod::kLinear ? "linear" : "fine"},
                        {"delta_wage_pct", panel.report.delta_wage_pct},
                        {"total_delta", panel.report.total_delta},
                        {"sums", std::move(sums)},
                        {"shares_pct", std::move(shares)},
                        {"units_increased", panel.report.units_increased},
                        {"total_units", panel.report.total_units},
                        {"fit", std::move(fit)}};
}

// Per-unit credits file: one row per (unit, player).
inline void write_unit_credits_csv(const PanelAttribution& panel,
                                   std::ostream& out) {
  PlayerNames names;
  names.inputs = panel.feature_names;
  out << "id,player,credit\n";
  for (const UnitAttribution& u : panel.units) {
    for (const auto& [p, c] : u.result.credits) {
      out << u.id << ',' << names.of(p) << ',' << fmt_full(c) << '\n';
    }
  }
}

}  // namespace deltattr

#endif  // DELTATTR_CASESTUDY_HPP
