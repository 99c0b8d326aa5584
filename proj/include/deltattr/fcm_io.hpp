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

#ifndef DELTATTR_FCM_IO_HPP
#define DELTATTR_FCM_IO_HPP

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "deltattr/core.hpp"
#include "deltattr/fcm.hpp"

namespace deltattr {
namespace expr {

// Tiny arithmetic expression language for structural equations and their
// inverses:
//   expr   := term (('+' | '-') term)*
//   term   := factor (('*' | '/') factor)*
//   factor := NUMBER | 'x' | 'noise' | 'pa' '[' INT ']'
//           | ('exp' | 'log' | 'neg') '(' expr ')' | '(' expr ')' | '-' factor
// 'x' is the node's own value (inverse expressions), 'noise' the node's
// noise (structural expressions), pa[i] the i-th parent's value.
struct Node;
using NodePtr = std::unique_ptr<Node>;

struct Node {
  enum class Op {
    kConst, kX, kNoise, kParent,
    kAdd, kSub, kMul, kDiv,
    kNeg, kExp, kLog,
  };
  Op op;
  double value = 0.0;   // kConst
  int parent_idx = 0;   // kParent
  NodePtr lhs, rhs;

  double eval(double x, std::span<const double> parents, double noise) const {
    switch (op) {
      case Op::kConst: return value;
      case Op::kX: return x;
      case Op::kNoise: return noise;
      case Op::kParent: {
        if (parent_idx < 0 || parent_idx >= static_cast<int>(parents.size())) {
          throw DataError("expression references pa[" +
                          std::to_string(parent_idx) +
                          "] but the node has " +
                          std::to_string(parents.size()) + " parents");
        }
        return parents[static_cast<std::size_t>(parent_idx)];
      }
      case Op::kAdd: return lhs->eval(x, parents, noise) + rhs->eval(x, parents, noise);
      case Op::kSub: return lhs->eval(x, parents, noise) - rhs->eval(x, parents, noise);
      case Op::kMul: return lhs->eval(x, parents, noise) * rhs->eval(x, parents, noise);
      case Op::kDiv: return lhs->eval(x, parents, noise) / rhs->eval(x, parents, noise);
      case Op::kNeg: return -lhs->eval(x, parents, noise);
      case Op::kExp: return std::exp(lhs->eval(x, parents, noise));
      case Op::kLog: return std::log(lhs->eval(x, parents, noise));
    }
    return 0.0;
  }
};

class Parser {
 public:
  explicit Parser(std::string text) : text_(std::move(text)) {}

  NodePtr parse() {
    NodePtr root = parse_expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("expression error at position " + std::to_string(pos_) +
                    " in '" + text_ + "': " + what);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool consume(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  static NodePtr make(Node::Op op, NodePtr lhs = nullptr, NodePtr rhs = nullptr) {
    auto n = std::make_unique<Node>();
    n->op = op;
    n->lhs = std::move(lhs);
    n->rhs = std::move(rhs);
    return n;
  }

  NodePtr parse_expr() {
    NodePtr lhs = parse_term();
    for (;;) {
      if (consume('+')) {
        lhs = make(Node::Op::kAdd, std::move(lhs), parse_term());
      } else if (consume('-')) {
        lhs = make(Node::Op::kSub, std::move(lhs), parse_term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_term() {
    NodePtr lhs = parse_factor();
    for (;;) {
      if (consume('*')) {
        lhs = make(Node::Op::kMul, std::move(lhs), parse_factor());
      } else if (consume('/')) {
        lhs = make(Node::Op::kDiv, std::move(lhs), parse_factor());
      } else {
        return lhs;
      }
    }
  }

  std::string parse_ident() {
    skip_ws();
    std::string out;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      out.push_back(text_[pos_++]);
    }
    return out;
  }

  NodePtr parse_factor() {
    skip_ws();
    if (pos_ >= text_.size()) fail("expected a factor");
    const char c = text_[pos_];

    if (c == '(') {
      ++pos_;
      NodePtr inner = parse_expr();
      if (!consume(')')) fail("expected ')'");
      return inner;
    }
    if (c == '-') {
      ++pos_;
      return make(Node::Op::kNeg, parse_factor());
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = text_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("bad number");
      pos_ += static_cast<std::size_t>(end - begin);
      auto n = make(Node::Op::kConst);
      n->value = v;
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::string ident = parse_ident();
      if (ident == "x") return make(Node::Op::kX);
      if (ident == "noise") return make(Node::Op::kNoise);
      if (ident == "pa") {
        if (!consume('[')) fail("expected '[' after pa");
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        if (pos_ == start) fail("expected a parent index");
        const int idx = std::stoi(text_.substr(start, pos_ - start));
        if (!consume(']')) fail("expected ']'");
        auto n = make(Node::Op::kParent);
        n->parent_idx = idx;
        return n;
      }
      Node::Op op;
      if (ident == "exp") {
        op = Node::Op::kExp;
      } else if (ident == "log") {
        op = Node::Op::kLog;
      } else if (ident == "neg") {
        op = Node::Op::kNeg;
      } else {
        fail("unknown identifier '" + ident + "'");
      }
      if (!consume('(')) fail("expected '(' after function name");
      NodePtr inner = parse_expr();
      if (!consume(')')) fail("expected ')'");
      return make(op, std::move(inner));
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  std::string text_;
  std::size_t pos_ = 0;
};

// Shared, immutable compiled expression (copyable into std::function).
inline std::shared_ptr<const Node> compile(const std::string& text) {
  return std::shared_ptr<const Node>(Parser(text).parse().release());
}

}  // namespace expr

// FCM specification document:
//   { "nodes": [ { "name": "x", "parents": [],
//                  "structural": "noise", "inverse": "x" },
//                { "name": "y", "parents": ["x"],
//                  "structural": "pa[0] + noise", "inverse": "x - pa[0]" } ],
//     "sink": "y" }
// Root nodes may omit the expressions (identity X := noise). "sink" may be
// omitted when exactly one node has no children.
inline InvertibleFcm load_fcm(const std::string& path) try {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open FCM spec '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("FCM spec '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.contains("nodes") || !j.at("nodes").is_array() || j.at("nodes").empty()) {
    throw DataError("FCM spec needs a nonempty 'nodes' array");
  }

  std::map<std::string, int> index;
  std::vector<nlohmann::json> raw;
  for (const auto& node : j.at("nodes")) {
    const std::string name = node.at("name").get<std::string>();
    if (index.count(name)) throw DataError("duplicate node name '" + name + "'");
    index[name] = static_cast<int>(raw.size());
    raw.push_back(node);
  }

  std::vector<FcmNode> nodes;
  std::vector<bool> has_child(raw.size(), false);
  for (const auto& node : raw) {
    FcmNode out;
    out.name = node.at("name").get<std::string>();
    for (const auto& p : node.value("parents", nlohmann::json::array())) {
      const std::string pname = p.get<std::string>();
      const auto it = index.find(pname);
      if (it == index.end()) {
        throw DataError("node '" + out.name + "' references unknown parent '" +
                        pname + "'");
      }
      out.parents.push_back(it->second);
      has_child[static_cast<std::size_t>(it->second)] = true;
    }
    if (node.contains("structural") || node.contains("inverse")) {
      if (!node.contains("structural") || !node.contains("inverse")) {
        throw DataError("node '" + out.name +
                        "' must define both 'structural' and 'inverse'");
      }
      auto structural = expr::compile(node.at("structural").get<std::string>());
      auto inverse = expr::compile(node.at("inverse").get<std::string>());
      out.structural_fn = [structural](std::span<const double> pa, double noise) {
        return structural->eval(0.0, pa, noise);
      };
      out.noise_inverse = [inverse](double x, std::span<const double> pa) {
        return inverse->eval(x, pa, 0.0);
      };
    } else {
      if (!out.parents.empty()) {
        throw DataError("non-root node '" + out.name +
                        "' must define 'structural' and 'inverse'");
      }
      const FcmNode root = root_node(out.name);
      out.structural_fn = root.structural_fn;
      out.noise_inverse = root.noise_inverse;
    }
    nodes.push_back(std::move(out));
  }

  int sink = -1;
  if (j.contains("sink")) {
    const std::string sink_name = j.at("sink").get<std::string>();
    const auto it = index.find(sink_name);
    if (it == index.end()) throw DataError("unknown sink node '" + sink_name + "'");
    sink = it->second;
  } else {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!has_child[i]) {
        if (sink >= 0) throw DataError("multiple childless nodes; set 'sink'");
        sink = static_cast<int>(i);
      }
    }
    if (sink < 0) throw DataError("no childless node found for the sink");
  }
  return InvertibleFcm(std::move(nodes), sink);
} catch (const nlohmann::json::exception& e) {
  throw DataError("malformed FCM spec '" + path + "': " + e.what());
}

inline std::vector<std::string> fcm_node_names(const InvertibleFcm& fcm) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(fcm.size()));
  for (int j = 0; j < fcm.size(); ++j) names.push_back(fcm.node(j).name);
  return names;
}

// Observations document: { "x": 1.0, "y": 3.0 } with one entry per node.
inline Vec load_observations(const InvertibleFcm& fcm, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open observations file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("observations file '" + path + "' is not valid JSON: " + e.what());
  }
  Vec values(static_cast<std::size_t>(fcm.size()), 0.0);
  for (int i = 0; i < fcm.size(); ++i) {
    const std::string& name = fcm.node(i).name;
    if (!j.contains(name)) {
      throw DataError("observations file '" + path + "' is missing node '" +
                      name + "'");
    }
    if (!j.at(name).is_number()) {
      throw DataError("observation for node '" + name + "' must be a number");
    }
    values[static_cast<std::size_t>(i)] = j.at(name).get<double>();
  }
  return values;
}

}  // namespace deltattr

#endif  // DELTATTR_FCM_IO_HPP
