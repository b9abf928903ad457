// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefix_forest/forest_io.h"

#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include "json.hpp"
#include "prefix_forest/errors.h"

namespace prefix_forest {

using Json = nlohmann::ordered_json;

namespace {

const Json& require_field(const Json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw InputError(where + ": missing field '" + key + "'");
  return *it;
}

TokenId to_token(const Json& v, const std::string& where) {
  if (!v.is_number_integer()) throw InputError(where + ": token ids must be integers");
  const auto t = v.get<std::int64_t>();
  if (t < 0) throw InputError(where + ": negative token id " + std::to_string(t));
  return t;
}

std::vector<TokenId> to_tokens(const Json& v, const std::string& where) {
  if (!v.is_array()) throw InputError(where + ": expected an array of token ids");
  std::vector<TokenId> out;
  out.reserve(v.size());
  for (const Json& t : v) out.push_back(to_token(t, where));
  return out;
}

Trajectory parse_trajectory(const Json& obj, const std::string& where) {
  if (!obj.is_object()) throw InputError(where + ": expected a JSON object");
  Trajectory t;
  const Json& id = require_field(obj, "id", where);
  if (!id.is_string()) throw InputError(where + ": 'id' must be a string");
  t.id = id.get<std::string>();
  t.tokens = to_tokens(require_field(obj, "tokens", where), where);
  if (t.tokens.empty()) throw InputError(where + ": 'tokens' is empty");
  if (auto it = obj.find("weight"); it != obj.end()) {
    if (!it->is_number()) throw InputError(where + ": 'weight' must be a number");
    t.weight = it->get<double>();
    if (!std::isfinite(t.weight) || t.weight < 0) throw InputError(where + ": 'weight' must be finite and >= 0");
  }
  if (auto it = obj.find("supervised_from"); it != obj.end()) {
    if (!it->is_number_integer()) throw InputError(where + ": 'supervised_from' must be an integer");
    t.supervised_from = it->get<Tokens>();
    if (t.supervised_from < 0 || t.supervised_from >= static_cast<Tokens>(t.tokens.size())) {
      throw InputError(where + ": 'supervised_from' out of range");
    }
  }
  return t;
}

Json parse_json(std::string_view text, const std::string& where) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw InputError(where + ": " + e.what());
  }
}

TreeSpec parse_tree_node(const Json& obj, const std::string& where) {
  if (!obj.is_object()) throw InputError(where + ": expected a JSON object");
  TreeSpec spec;
  spec.segment = to_tokens(require_field(obj, "segment", where), where + ".segment");
  if (auto it = obj.find("leaf_ids"); it != obj.end()) {
    if (!it->is_array()) throw InputError(where + ": 'leaf_ids' must be an array");
    for (const Json& id : *it) {
      if (!id.is_string()) throw InputError(where + ": leaf ids must be strings");
      spec.leaf_ids.push_back(id.get<std::string>());
    }
  }
  if (auto it = obj.find("leaf_weights"); it != obj.end()) {
    if (!it->is_array()) throw InputError(where + ": 'leaf_weights' must be an array");
    for (const Json& w : *it) {
      if (!w.is_number()) throw InputError(where + ": leaf weights must be numbers");
      spec.leaf_weights.push_back(w.get<double>());
    }
  }
  if (auto it = obj.find("leaf_supervised_from"); it != obj.end()) {
    if (!it->is_array()) throw InputError(where + ": 'leaf_supervised_from' must be an array");
    for (const Json& s : *it) {
      if (!s.is_number_integer()) throw InputError(where + ": 'leaf_supervised_from' entries must be integers");
      spec.leaf_supervised_from.push_back(s.get<Tokens>());
    }
  }
  if (auto it = obj.find("children"); it != obj.end()) {
    if (!it->is_array()) throw InputError(where + ": 'children' must be an array");
    for (size_t i = 0; i < it->size(); ++i) {
      spec.children.push_back(parse_tree_node((*it)[i], where + ".children[" + std::to_string(i) + "]"));
    }
  }
  return spec;
}

Json tree_node_json(const TrajectoryTree& tree, NodeId u) {
  const TreeNode& node = tree.node(u);
  Json out;
  out["segment"] = node.segment;
  Json ids = Json::array();
  Json weights = Json::array();
  Json supervised = Json::array();
  bool plain = true;
  for (LeafIndex l : node.terminals) {
    const Leaf& leaf = tree.leaf(l);
    ids.push_back(leaf.id);
    weights.push_back(leaf.weight);
    supervised.push_back(leaf.supervised_from);
    plain = plain && leaf.weight == 1.0 && leaf.supervised_from == 0;
  }
  out["leaf_ids"] = ids;
  if (!plain) {
    out["leaf_weights"] = weights;
    out["leaf_supervised_from"] = supervised;
  }
  Json children = Json::array();
  for (NodeId c : node.children) children.push_back(tree_node_json(tree, c));
  out["children"] = children;
  return out;
}

const char* cost_model_name(CostModel m) { return m == CostModel::kSinglePath ? "single_path" : "shared_subtree"; }

}  // namespace

std::vector<Trajectory> parse_trajectories_jsonl(std::istream& in, std::string_view source) {
  std::vector<Trajectory> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    out.push_back(parse_trajectory(parse_json(line, where), where));
  }
  if (out.empty()) throw InputError(std::string(source) + ": no trajectories");
  return out;
}

std::vector<Trajectory> read_trajectories_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return parse_trajectories_jsonl(in, path.string());
}

TreeSpec parse_tree_json(std::string_view text) { return parse_tree_node(parse_json(text, "tree"), "tree"); }

std::string tree_to_json(const TrajectoryTree& tree) { return tree_node_json(tree, tree.root()).dump(2) + "\n"; }

TrajectoryTree load_tree(const std::filesystem::path& path, InputKind kind) {
  if (kind == InputKind::kTrajectories) {
    const auto trajectories = read_trajectories_jsonl(path);
    return build_forest(trajectories);
  }
  return TrajectoryTree::from_spec(parse_tree_json(read_text_file(path)));
}

std::string plan_to_json(const TrajectoryTree& tree, const PackPlan& plan) {
  Json out;
  out["method"] = plan.method;
  out["cost_model"] = cost_model_name(plan.cost_model);
  out["capacity"] = plan.capacity;
  out["total_cost"] = plan.total_cost;
  out["savings"] = plan.savings;
  Json traversals = Json::array();
  for (const Traversal& t : plan.traversals) {
    Json jt;
    Json leaves = Json::array();
    for (LeafIndex l : t.leaves) leaves.push_back(tree.leaf(l).id);
    jt["leaves"] = leaves;
    jt["nodes"] = t.nodes;
    jt["cost"] = t.cost;
    if (t.anchor) jt["anchor"] = *t.anchor;
    traversals.push_back(jt);
  }
  out["traversals"] = traversals;
  return out.dump(2) + "\n";
}

PackPlan parse_plan_json(const TrajectoryTree& tree, std::string_view text) {
  const Json obj = parse_json(text, "plan");
  if (!obj.is_object()) throw PlanMismatch("plan: expected a JSON object");
  PackPlan plan;
  try {
    plan.method = obj.value("method", std::string("unknown"));
    const std::string model = obj.value("cost_model", std::string("shared_subtree"));
    if (model == "single_path") {
      plan.cost_model = CostModel::kSinglePath;
    } else if (model != "shared_subtree") {
      throw PlanMismatch("plan: unknown cost model '" + model + "'");
    }
    plan.capacity = obj.value("capacity", Tokens{0});
    plan.total_cost = obj.at("total_cost").get<Tokens>();
    plan.savings = obj.at("savings").get<Tokens>();
    for (const Json& jt : obj.at("traversals")) {
      Traversal t;
      for (const Json& id : jt.at("leaves")) {
        const auto found = tree.find_leaf(id.get<std::string>());
        if (!found) throw PlanMismatch("plan references unknown leaf '" + id.get<std::string>() + "'");
        t.leaves.push_back(*found);
      }
      for (const Json& v : jt.at("nodes")) {
        const auto u = v.get<std::int64_t>();
        if (u < 0 || static_cast<size_t>(u) >= tree.node_count()) {
          throw PlanMismatch("plan references node " + std::to_string(u) + " outside the tree");
        }
        t.nodes.push_back(static_cast<NodeId>(u));
      }
      t.cost = jt.at("cost").get<Tokens>();
      if (auto it = jt.find("anchor"); it != jt.end()) {
        const auto a = it->get<std::int64_t>();
        if (a < 0 || static_cast<size_t>(a) >= tree.node_count()) {
          throw PlanMismatch("plan anchor " + std::to_string(a) + " outside the tree");
        }
        t.anchor = static_cast<NodeId>(a);
      }
      plan.traversals.push_back(std::move(t));
    }
  } catch (const Json::exception& e) {
    throw PlanMismatch(std::string("plan: ") + e.what());
  }
  return plan;
}

std::string batch_to_json(const TrajectoryTree& tree, const PackedBatch& batch) {
  Json out;
  out["num_tokens"] = batch.size();
  out["tokens"] = batch.tokens;
  out["position_ids"] = batch.position_ids;
  out["tree_scale"] = batch.tree_scale;
  Json supervised = Json::array();
  for (auto m : batch.supervised_mask) supervised.push_back(m != 0);
  out["supervised_mask"] = supervised;
  Json labels = Json::array();
  for (const auto& l : batch.labels) labels.push_back(l ? Json(*l) : Json(nullptr));
  out["labels"] = labels;
  Json spans = Json::array();
  for (size_t s = 0; s < batch.spans.size(); ++s) {
    const BatchSpan& span = batch.spans[s];
    Json js;
    js["node"] = span.node;
    js["start"] = span.start;
    js["end"] = span.end;
    js["parent"] = span.parent;
    Json ancestors = Json::array();
    for (int a : batch.ancestor_spans(static_cast<int>(s))) {
      if (a != static_cast<int>(s)) {
        ancestors.push_back(Json::array({batch.spans[static_cast<size_t>(a)].start,
                                         batch.spans[static_cast<size_t>(a)].end}));
      }
    }
    js["ancestors"] = ancestors;
    spans.push_back(js);
  }
  out["spans"] = spans;
  Json leaves = Json::array();
  for (size_t i = 0; i < batch.leaves.size(); ++i) {
    Json jl;
    jl["id"] = tree.leaf(batch.leaves[i]).id;
    jl["weight"] = batch.leaf_weights[i];
    jl["span"] = batch.leaf_span[i];
    leaves.push_back(jl);
  }
  out["leaves"] = leaves;
  return out.dump(2) + "\n";
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw InputError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw InputError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

}  // namespace prefix_forest
