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

#ifndef DELTATTR_MODEL_IO_HPP
#define DELTATTR_MODEL_IO_HPP

#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "deltattr/core.hpp"
#include "deltattr/models.hpp"

namespace deltattr {

using ModelFile = std::variant<LinearModel, PolynomialModel>;

inline nlohmann::json to_json(const LinearModel& m) {
  nlohmann::json j;
  j["kind"] = "linear";
  j["coefficients"] = m.coeffs;
  if (m.intercept) j["intercept"] = *m.intercept;
  j["label"] = m.label;
  return j;
}

inline nlohmann::json to_json(const PolynomialModel& m) {
  nlohmann::json j;
  j["kind"] = "polynomial";
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : m.terms) {
    terms.push_back({{"exponents", t.exponents}, {"coef", t.coef}});
  }
  j["terms"] = std::move(terms);
  j["label"] = m.label;
  return j;
}

inline ModelFile model_from_json(const nlohmann::json& j) try {
  if (!j.is_object() || !j.contains("kind")) {
    throw DataError("model file must be a JSON object with a 'kind' field");
  }
  const std::string kind = j.at("kind").get<std::string>();
  const std::string label = j.value("label", kind);
  if (kind == "linear") {
    LinearModel m;
    m.label = label;
    if (!j.contains("coefficients") || !j.at("coefficients").is_array()) {
      throw DataError("linear model needs a 'coefficients' array");
    }
    m.coeffs = j.at("coefficients").get<Vec>();
    if (m.coeffs.empty()) throw DataError("linear model needs >= 1 coefficient");
    if (j.contains("intercept")) m.intercept = j.at("intercept").get<double>();
    return m;
  }
  if (kind == "polynomial") {
    PolynomialModel m;
    m.label = label;
    if (!j.contains("terms") || !j.at("terms").is_array() || j.at("terms").empty()) {
      throw DataError("polynomial model needs a nonempty 'terms' array");
    }
    for (const auto& t : j.at("terms")) {
      PolynomialModel::Term term;
      term.exponents = t.at("exponents").get<std::vector<int>>();
      term.coef = t.at("coef").get<double>();
      for (const int e : term.exponents) {
        if (e < 0) throw DataError("polynomial exponents must be >= 0");
      }
      if (m.terms.empty()) {
        m.dim = static_cast<int>(term.exponents.size());
      } else if (static_cast<int>(term.exponents.size()) != m.dim) {
        throw DataError("all polynomial terms must share the exponent length");
      }
      m.terms.push_back(std::move(term));
    }
    if (m.dim < 1) throw DataError("polynomial model needs >= 1 input");
    return m;
  }
  throw DataError("unknown model kind '" + kind + "'");
} catch (const nlohmann::json::exception& e) {
  throw DataError(std::string("malformed model document: ") + e.what());
}

inline ModelFile load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model file '" + path + "' is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

inline void save_model(const ModelFile& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file '" + path + "'");
  std::visit([&out](const auto& m) { out << to_json(m).dump(2) << '\n'; },
             model);
}

inline Mechanism mechanism_of(const ModelFile& model) {
  return std::visit([](const auto& m) { return m.mechanism(); }, model);
}

inline int arity_of(const ModelFile& model) {
  return std::visit([](const auto& m) { return m.arity(); }, model);
}

// Player naming used in JSON documents and tables: the mechanism is
// "mechanism", the whole-input player is "inputs", input j is its feature
// name when one is supplied and "x<j+1>" otherwise, and node noises use
// "noise_<node name>" (index when unnamed).
struct PlayerNames {
  std::vector<std::string> inputs;  // feature names, may be empty
  std::vector<std::string> nodes;   // FCM node names, may be empty

  std::string of(const Player& p) const {
    switch (p.kind()) {
      case PlayerKind::kMechanism: return "mechanism";
      case PlayerKind::kInputBundle: return "inputs";
      case PlayerKind::kInput: {
        const auto j = static_cast<std::size_t>(p.index());
        if (j < inputs.size()) return inputs[j];
        return "x" + std::to_string(p.index() + 1);
      }
      case PlayerKind::kNodeNoise: {
        const auto j = static_cast<std::size_t>(p.index());
        if (j < nodes.size()) return "noise_" + nodes[j];
        return "noise_" + std::to_string(p.index());
      }
    }
    return "?";
  }

  Player parse(const std::string& name) const {
    if (name == "mechanism") return Player::mechanism();
    if (name == "inputs") return Player::input_bundle();
    for (std::size_t j = 0; j < inputs.size(); ++j) {
      if (inputs[j] == name) return Player::input(static_cast<int>(j));
    }
    if (name.rfind("noise_", 0) == 0) {
      const std::string rest = name.substr(6);
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        if (nodes[j] == rest) return Player::node_noise(static_cast<int>(j));
      }
      return Player::node_noise(std::stoi(rest));
    }
    if (name.size() >= 2 && name[0] == 'x') {
      return Player::input(std::stoi(name.substr(1)) - 1);
    }
    throw DataError("unknown player name '" + name + "'");
  }
};

inline nlohmann::json result_to_json(const AttributionResult& r,
                                     const PlayerNames& names = {}) {
  nlohmann::json j;
  j["method"] = method_name(r.method);
  j["delta_y"] = r.delta_y;
  nlohmann::json credits = nlohmann::json::object();
  for (const auto& [p, c] : r.credits) credits[names.of(p)] = c;
  j["credits"] = std::move(credits);
  if (r.std_errors) {
    nlohmann::json se = nlohmann::json::object();
    for (const auto& [p, s] : *r.std_errors) se[names.of(p)] = s;
    j["std_errors"] = std::move(se);
  }
  if (r.permutations_used) {
    j["permutations_used"] = *r.permutations_used;
    j["rng"] = "splitmix64";
  }
  if (!names.inputs.empty()) j["input_names"] = names.inputs;
  if (!names.nodes.empty()) j["node_names"] = names.nodes;
  return j;
}

inline AttributionResult result_from_json(const nlohmann::json& j) {
  PlayerNames names;
  if (j.contains("input_names")) {
    names.inputs = j.at("input_names").get<std::vector<std::string>>();
  }
  if (j.contains("node_names")) {
    names.nodes = j.at("node_names").get<std::vector<std::string>>();
  }
  AttributionResult r;
  const std::string method = j.at("method").get<std::string>();
  bool found = false;
  for (const Method m :
       {Method::kCoarse, Method::kLinear, Method::kFineExact,
        Method::kFineSampled, Method::kOrdered, Method::kFcm}) {
    if (method == method_name(m)) {
      r.method = m;
      found = true;
      break;
    }
  }
  if (!found) throw DataError("unknown method '" + method + "'");
  r.delta_y = j.at("delta_y").get<double>();
  for (const auto& [key, value] : j.at("credits").items()) {
    r.credits[names.parse(key)] = value.get<double>();
  }
  if (j.contains("std_errors")) {
    r.std_errors.emplace();
    for (const auto& [key, value] : j.at("std_errors").items()) {
      (*r.std_errors)[names.parse(key)] = value.get<double>();
    }
  }
  if (j.contains("permutations_used")) {
    r.permutations_used = j.at("permutations_used").get<std::uint64_t>();
  }
  return r;
}

}  // namespace deltattr

#endif  // DELTATTR_MODEL_IO_HPP
