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

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "deltattr/model_io.hpp"

using deltattr::Vec;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args) {
  const std::string command = std::string(DELTATTR_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult result;
  std::array<char, 4096> buffer{};
  std::size_t got = 0;
  while ((got = fread(buffer.data(), 1, buffer.size(), pipe)) > 0) {
    result.output.append(buffer.data(), got);
  }
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

std::string write_temp(const std::string& name, const std::string& content) {
  static int counter = 0;
  const std::string path =
      std::string("/tmp/deltattr_cli_") + std::to_string(++counter) + "_" + name;
  std::ofstream out(path);
  out << content;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kPanelCsv =
    "id,year,edu,exp,weeks,occ,union,ind,smsa,south,wage\n"
    "1,1976,10,5,0,0,0,0,0,0,3.5\n"
    "1,1982,10,11,0,0,0,0,0,0,4.82\n"
    "2,1976,16,2,0,0,0,0,0,0,5.0\n"
    "2,1982,16,8,0,0,0,0,0,0,6.56\n";

}  // namespace

TEST_CASE("attribute: linear closed form on the 2x/3x fixture") {
  const std::string bg = write_temp(
      "bg.json", R"({"kind":"linear","coefficients":[2.0],"label":"2x"})");
  const std::string fg = write_temp(
      "fg.json", R"({"kind":"linear","coefficients":[3.0],"label":"3x"})");
  const std::string out = write_temp("result.json", "");
  const RunResult r = run_cli("attribute --model-bg " + bg + " --model-fg " + fg +
                              " --x-bg 1 --x-fg 2 --method linear --out " + out);
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("2.5") != std::string::npos);
  CHECK(r.output.find("1.5") != std::string::npos);

  const auto parsed = nlohmann::json::parse(slurp(out));
  CHECK(parsed.at("method") == "linear");
  CHECK(parsed.at("credits").at("x1").get<double>() == 2.5);
  CHECK(parsed.at("credits").at("mechanism").get<double>() == 1.5);
  // Round-trip exactly.
  const deltattr::AttributionResult back = deltattr::result_from_json(parsed);
  CHECK(back.delta_y == 4.0);
}

TEST_CASE("attribute: paradox fixture prints zero credits") {
  const std::string bg = write_temp(
      "p1bg.json", R"({"kind":"linear","coefficients":[1.0],"label":"+x"})");
  const std::string fg = write_temp(
      "p1fg.json", R"({"kind":"linear","coefficients":[-1.0],"label":"-x"})");
  const std::string out = write_temp("p1.json", "");
  const RunResult r = run_cli("attribute --model-bg " + bg + " --model-fg " + fg +
                              " --x-bg 1 --x-fg -1 --method coarse --out " + out);
  CHECK(r.exit_code == 0);
  const auto parsed = nlohmann::json::parse(slurp(out));
  CHECK(parsed.at("credits").at("mechanism").get<double>() == 0.0);
  CHECK(parsed.at("credits").at("inputs").get<double>() == 0.0);
  CHECK(parsed.at("delta_y").get<double>() == 0.0);
}

TEST_CASE("attribute: fine beyond the exact limit asks for a budget") {
  // d = 25 polynomial-free linear model.
  nlohmann::json coeffs = nlohmann::json::array();
  for (int j = 0; j < 25; ++j) coeffs.push_back(0.1 * j);
  nlohmann::json model{{"kind", "linear"}, {"coefficients", coeffs}, {"label", "wide"}};
  const std::string path = write_temp("wide.json", model.dump());
  std::string xs = "1";
  for (int j = 1; j < 25; ++j) xs += ",1";
  const RunResult r = run_cli("attribute --model-bg " + path + " --model-fg " + path +
                              " --x-bg " + xs + " --x-fg " + xs + " --method fine");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("--budget") != std::string::npos);
  CHECK(r.output.find("--exact-limit") != std::string::npos);

  // Supplying a budget switches to the sampled estimator.
  const RunResult ok = run_cli("attribute --model-bg " + path + " --model-fg " + path +
                               " --x-bg " + xs + " --x-fg " + xs +
                               " --method fine --budget 50 --seed 3");
  CHECK(ok.exit_code == 0);
  CHECK(ok.output.find("permutations: 50") != std::string::npos);
}

TEST_CASE("attribute: --format csv and text outputs") {
  const std::string bg = write_temp(
      "fbg.json", R"({"kind":"linear","coefficients":[2.0],"label":"2x"})");
  const std::string fg = write_temp(
      "ffg.json", R"({"kind":"linear","coefficients":[3.0],"label":"3x"})");
  const std::string csv = write_temp("result.csv", "");
  const std::string base = "attribute --model-bg " + bg + " --model-fg " + fg +
                           " --x-bg 1 --x-fg 2 --method linear";
  CHECK(run_cli(base + " --format csv --out " + csv).exit_code == 0);
  const std::string csv_text = slurp(csv);
  CHECK(csv_text.rfind("player,credit,stderr\n", 0) == 0);
  CHECK(csv_text.find("x1,2.5,") != std::string::npos);
  CHECK(csv_text.find("mechanism,1.5,") != std::string::npos);

  const std::string txt = write_temp("result.txt", "");
  CHECK(run_cli(base + " --format text --out " + txt).exit_code == 0);
  CHECK(slurp(txt).find("method: linear") != std::string::npos);

  CHECK(run_cli(base + " --format yaml --out " + txt).exit_code == 2);
}

TEST_CASE("attribute: sampled without a budget is a usage error") {
  const std::string m = write_temp(
      "m.json", R"({"kind":"linear","coefficients":[1.0],"label":"id"})");
  const RunResult r = run_cli("attribute --model-bg " + m + " --model-fg " + m +
                              " --x-bg 1 --x-fg 2 --method sampled");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("--budget") != std::string::npos);
}

TEST_CASE("attribute: missing model file fails parse validation") {
  const RunResult r = run_cli(
      "attribute --model-bg /nonexistent.json --model-fg /nonexistent.json "
      "--x-bg 1 --x-fg 2");
  CHECK(r.exit_code == 2);
}

TEST_CASE("attribute: ordered with an explicit order") {
  const std::string bg = write_temp(
      "obg.json", R"({"kind":"linear","coefficients":[2.0,1.0],"label":"bg"})");
  const std::string fg = write_temp(
      "ofg.json", R"({"kind":"linear","coefficients":[3.0,1.0],"label":"fg"})");
  const std::string out = write_temp("ordered.json", "");
  const RunResult r = run_cli("attribute --model-bg " + bg + " --model-fg " + fg +
                              " --x-bg 1,0 --x-fg 2,0 --method ordered "
                              "--order f,x2,x1 --out " + out);
  CHECK(r.exit_code == 0);
  const auto parsed = nlohmann::json::parse(slurp(out));
  // Mechanism first: f_fg(x_bg) - f_bg(x_bg) = 3 - 2 = 1.
  CHECK(parsed.at("credits").at("mechanism").get<double>() == 1.0);

  const RunResult bad = run_cli("attribute --model-bg " + bg + " --model-fg " + fg +
                                " --x-bg 1,0 --x-fg 2,0 --method ordered --order f,x1,x9");
  CHECK(bad.exit_code == 2);
}

TEST_CASE("attribute: fine method on polynomial model files") {
  const std::string bg = write_temp("pbg.json", R"({
    "kind": "polynomial",
    "terms": [{"exponents": [1, 1], "coef": 1.0}],
    "label": "product"})");
  const std::string out = write_temp("poly_fine.json", "");
  // Same file twice: distinct handles but identical behavior, so the
  // mechanism credit is ~0 and the inputs split the product change.
  const RunResult r = run_cli("attribute --model-bg " + bg + " --model-fg " + bg +
                              " --x-bg 1,1 --x-fg 2,3 --method fine --out " + out);
  CHECK(r.exit_code == 0);
  const auto parsed = nlohmann::json::parse(slurp(out));
  CHECK(parsed.at("credits").at("x1").get<double>() == doctest::Approx(2.0));
  CHECK(parsed.at("credits").at("x2").get<double>() == doctest::Approx(3.0));
  CHECK(parsed.at("credits").at("mechanism").get<double>() ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("simulate reliability: deterministic result files") {
  const std::string csv_a = write_temp("rel_a.csv", "");
  const std::string csv_b = write_temp("rel_b.csv", "");
  const std::string jsonl = write_temp("rel.jsonl", "");
  const std::string args =
      "simulate reliability --models 5 --n 50 --seed 7 --out-jsonl " + jsonl;
  const RunResult a = run_cli(args + " --out-csv " + csv_a);
  const RunResult b = run_cli(args + " --out-csv " + csv_b);
  CHECK(a.exit_code == 0);
  CHECK(b.exit_code == 0);
  const std::string content_a = slurp(csv_a);
  CHECK(content_a == slurp(csv_b));
  // 5 models x 2 fitted kinds x 2 methods = 20 records.
  CHECK(std::count(content_a.begin(), content_a.end(), '\n') == 21);
  CHECK(a.output.find("20 records") != std::string::npos);
  const std::string lines = slurp(jsonl);
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 20);
}

TEST_CASE("simulate scalability: error decreases in the budget") {
  const std::string csv = write_temp("scal.csv", "");
  const RunResult r = run_cli(
      "simulate scalability --dims 10 --budgets 10,100,1000 --repeats 4 "
      "--instances 8 --seed 7 --out-csv " + csv);
  CHECK(r.exit_code == 0);
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);  // header
  Vec maes;
  while (std::getline(in, line)) {
    const auto cells = [&line] {
      std::vector<std::string> out;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) out.push_back(cell);
      return out;
    }();
    maes.push_back(std::stod(cells[6]));
  }
  REQUIRE(maes.size() == 3);
  CHECK(maes[1] < maes[0]);
  CHECK(maes[2] < maes[1]);
}

TEST_CASE("casestudy: synthetic panel end to end") {
  const std::string panel = write_temp("panel.csv", kPanelCsv);
  const std::string out = write_temp("agg.json", "");
  const std::string units = write_temp("units.csv", "");
  const RunResult r = run_cli("casestudy --panel " + panel +
                              " --bg-year 1976 --fg-year 1982 --unit 1 --out " + out +
                              " --units-csv " + units);
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("unit 1") != std::string::npos);

  const auto parsed = nlohmann::json::parse(slurp(out));
  CHECK(parsed.at("total_units").get<int>() == 2);
  CHECK(parsed.at("units_increased").get<int>() == 2);
  CHECK(parsed.at("delta_wage_pct").get<double>() ==
        doctest::Approx(100.0 * 2.88 / 8.5).epsilon(1e-9));
  CHECK(parsed.at("shares_pct").at("mechanism").get<double>() ==
        doctest::Approx(100.0 * 1.56 / 2.88).epsilon(1e-9));
  CHECK(parsed.at("shares_pct").at("edu").get<double>() == 0.0);

  const std::string units_content = slurp(units);
  CHECK(units_content.rfind("id,player,credit\n", 0) == 0);

  const RunResult missing = run_cli("casestudy --panel /nonexistent.csv");
  CHECK(missing.exit_code == 2);

  const RunResult bad_year =
      run_cli("casestudy --panel " + panel + " --bg-year 1970 --fg-year 1982");
  CHECK(bad_year.exit_code == 3);
}

TEST_CASE("fcm: chain fixture through spec files") {
  const std::string spec = write_temp("fcm.json", R"({
    "nodes": [
      {"name": "x", "parents": []},
      {"name": "y", "parents": ["x"],
       "structural": "pa[0] + noise", "inverse": "x - pa[0]"}
    ],
    "sink": "y"
  })");
  const std::string bg = write_temp("obs_bg.json", R"({"x": 1.0, "y": 3.0})");
  const std::string fg = write_temp("obs_fg.json", R"({"x": 2.0, "y": 7.0})");
  const std::string out = write_temp("fcm_result.json", "");
  const RunResult r = run_cli("fcm --spec " + spec + " --obs-bg " + bg +
                              " --obs-fg " + fg + " --out " + out);
  CHECK(r.exit_code == 0);
  const auto parsed = nlohmann::json::parse(slurp(out));
  CHECK(parsed.at("credits").at("noise_x").get<double>() == 1.0);
  CHECK(parsed.at("credits").at("noise_y").get<double>() == 3.0);

  // Identical observations: every credit is exactly zero.
  const std::string zero_out = write_temp("fcm_zero.json", "");
  const RunResult zero = run_cli("fcm --spec " + spec + " --obs-bg " + bg +
                                 " --obs-fg " + bg + " --out " + zero_out);
  CHECK(zero.exit_code == 0);
  const auto zeros = nlohmann::json::parse(slurp(zero_out));
  CHECK(zeros.at("credits").at("noise_x").get<double>() == 0.0);
  CHECK(zeros.at("credits").at("noise_y").get<double>() == 0.0);
  CHECK(zeros.at("delta_y").get<double>() == 0.0);

  // A broken inverse is a numerical failure (exit 4).
  const std::string broken = write_temp("broken.json", R"({
    "nodes": [
      {"name": "x", "parents": []},
      {"name": "y", "parents": ["x"],
       "structural": "pa[0] + noise", "inverse": "x"}
    ]
  })");
  const RunResult bad = run_cli("fcm --spec " + broken + " --obs-bg " + bg +
                                " --obs-fg " + fg);
  CHECK(bad.exit_code == 4);
  CHECK(bad.output.find("'y'") != std::string::npos);
}

TEST_CASE("seed falls back to the environment variable") {
  const std::string m = write_temp(
    "seeded.json", R"({"kind":"linear","coefficients":[1.0,1.0,1.0],"label":"m"})");
  const std::string base = "attribute --model-bg " + m + " --model-fg " + m +
                           " --x-bg 1,2,3 --x-fg 3,2,1 --method sampled --budget 7";
  // The env seed must act exactly like the explicit flag.
  const std::string out_env = write_temp("env.json", "");
  const std::string out_flag = write_temp("flag.json", "");
  const int status =
      std::system(("env DELTA_ATTRIB_SEED=99 " + std::string(DELTATTR_CLI_PATH) +
                   " " + base + " --out " + out_env + " > /dev/null 2>&1").c_str());
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
  run_cli(base + " --seed 99 --out " + out_flag);
  CHECK(slurp(out_env) == slurp(out_flag));
}
