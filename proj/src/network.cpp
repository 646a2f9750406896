#include "backsim/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

#include "json.hpp"

namespace backsim {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Network

Network::Network(std::vector<Variable> variables) : variables_(std::move(variables)) {
  children_.assign(variables_.size(), {});
  for (NodeIndex i = 0; i < variables_.size(); ++i) {
    for (NodeIndex p : variables_[i].parents) {
      // Dangling references are left for validate_network to report.
      if (p < variables_.size() && p != i &&
          std::find(children_[p].begin(), children_[p].end(), i) == children_[p].end()) {
        children_[p].push_back(i);
      }
    }
  }
}

std::optional<NodeIndex> Network::find(std::string_view name) const {
  for (NodeIndex i = 0; i < variables_.size(); ++i) {
    if (variables_[i].name == name) return i;
  }
  return std::nullopt;
}

NodeIndex Network::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw std::out_of_range("unknown node '" + std::string(name) + "'");
}

std::vector<NodeIndex> Network::topological_order() const {
  std::vector<std::size_t> pending(size(), 0);
  for (NodeIndex i = 0; i < size(); ++i) pending[i] = variables_[i].parents.size();
  std::priority_queue<NodeIndex, std::vector<NodeIndex>, std::greater<>> ready;
  for (NodeIndex i = 0; i < size(); ++i) {
    if (pending[i] == 0) ready.push(i);
  }
  std::vector<NodeIndex> order;
  order.reserve(size());
  while (!ready.empty()) {
    NodeIndex n = ready.top();
    ready.pop();
    order.push_back(n);
    for (NodeIndex c : children_[n]) {
      if (--pending[c] == 0) ready.push(c);
    }
  }
  if (order.size() != size()) throw std::logic_error("topological_order: network has a cycle");
  return order;
}

std::uint64_t Network::state_space_size(std::span<const NodeIndex> nodes) const {
  std::uint64_t total = 1;
  for (NodeIndex i : nodes) {
    const std::uint64_t k = variables_.at(i).states.size();
    if (k != 0 && total > std::numeric_limits<std::uint64_t>::max() / k) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    total *= k;
  }
  return total;
}

std::uint64_t Network::joint_state_space_size() const {
  std::vector<NodeIndex> all(size());
  for (NodeIndex i = 0; i < size(); ++i) all[i] = i;
  return state_space_size(all);
}

// ---------------------------------------------------------------------------
// Instantiation

StateIndex Instantiation::at(NodeIndex i) const {
  if (values_.at(i) == kUnset) {
    throw std::invalid_argument("node " + std::to_string(i) + " is not instantiated");
  }
  return static_cast<StateIndex>(values_[i]);
}

bool Instantiation::is_full() const {
  return std::none_of(values_.begin(), values_.end(), [](std::int64_t v) { return v == kUnset; });
}

Instantiation Instantiation::from_evidence(std::size_t node_count, const Evidence& ev) {
  Instantiation x(node_count);
  for (const auto& [node, state] : ev.assignments) x.set(node, state);
  return x;
}

Instantiation Instantiation::full(std::span<const StateIndex> states) {
  Instantiation x(states.size());
  for (NodeIndex i = 0; i < states.size(); ++i) x.set(i, states[i]);
  return x;
}

// ---------------------------------------------------------------------------
// Validation

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::EmptyName: return "empty-name";
    case ViolationKind::DuplicateName: return "duplicate-name";
    case ViolationKind::TooFewStates: return "too-few-states";
    case ViolationKind::DuplicateState: return "duplicate-state";
    case ViolationKind::UnknownParent: return "unknown-parent";
    case ViolationKind::UnknownState: return "unknown-state";
    case ViolationKind::SelfParent: return "self-parent";
    case ViolationKind::DuplicateParent: return "duplicate-parent";
    case ViolationKind::RowCount: return "row-count";
    case ViolationKind::RowLength: return "row-length";
    case ViolationKind::BadProbability: return "bad-probability";
    case ViolationKind::RowSum: return "row-sum";
    case ViolationKind::Cycle: return "cycle";
  }
  return "unknown";
}

namespace {

std::string node_label(const Network& net, NodeIndex i) {
  const auto& name = net.variable(i).name;
  return name.empty() ? "#" + std::to_string(i) : "'" + name + "'";
}

void find_cycles(const Network& net, std::vector<NetworkViolation>& out) {
  enum class Mark { White, Grey, Black };
  std::vector<Mark> mark(net.size(), Mark::White);
  std::vector<NodeIndex> stack;

  // Iterative DFS along parent -> child edges; a grey target closes a cycle.
  for (NodeIndex root = 0; root < net.size(); ++root) {
    if (mark[root] != Mark::White) continue;
    std::vector<std::pair<NodeIndex, std::size_t>> frames{{root, 0}};
    mark[root] = Mark::Grey;
    stack.push_back(root);
    while (!frames.empty()) {
      auto& [node, next] = frames.back();
      const auto& kids = net.children()[node];
      if (next == kids.size()) {
        mark[node] = Mark::Black;
        stack.pop_back();
        frames.pop_back();
        continue;
      }
      NodeIndex child = kids[next++];
      if (mark[child] == Mark::White) {
        mark[child] = Mark::Grey;
        stack.push_back(child);
        frames.emplace_back(child, 0);
      } else if (mark[child] == Mark::Grey) {
        auto from = std::find(stack.begin(), stack.end(), child);
        std::vector<NodeIndex> cycle(from, stack.end());
        cycle.push_back(child);
        std::string msg = "cycle: ";
        for (std::size_t k = 0; k < cycle.size(); ++k) {
          if (k) msg += " -> ";
          msg += net.variable(cycle[k]).name;
        }
        out.push_back({ViolationKind::Cycle, child, std::move(msg), std::move(cycle)});
      }
    }
  }
}

}  // namespace

std::vector<NetworkViolation> validate_network(const Network& net) {
  std::vector<NetworkViolation> out;
  auto report = [&](ViolationKind kind, NodeIndex node, std::string msg) {
    out.push_back({kind, node, node_label(net, node) + ": " + std::move(msg), {}});
  };

  std::set<std::string_view> seen_names;
  for (NodeIndex i = 0; i < net.size(); ++i) {
    const Variable& v = net.variable(i);
    bool parents_resolve = true;
    if (v.name.empty()) report(ViolationKind::EmptyName, i, "empty node name");
    if (!v.name.empty() && !seen_names.insert(v.name).second) {
      report(ViolationKind::DuplicateName, i, "duplicate node name");
    }
    if (v.states.size() < 2) report(ViolationKind::TooFewStates, i, "needs at least two states");
    std::set<std::string_view> seen_states;
    for (const auto& s : v.states) {
      if (!seen_states.insert(s).second) report(ViolationKind::DuplicateState, i, "duplicate state '" + s + "'");
    }

    std::set<NodeIndex> seen_parents;
    std::size_t expected_rows = 1;
    for (NodeIndex p : v.parents) {
      if (p >= net.size()) {
        report(ViolationKind::UnknownParent, i, "parent index " + std::to_string(p) + " does not resolve");
        parents_resolve = false;
        continue;
      }
      if (p == i) report(ViolationKind::SelfParent, i, "lists itself as a parent");
      if (!seen_parents.insert(p).second) {
        report(ViolationKind::DuplicateParent, i, "parent " + node_label(net, p) + " listed twice");
      }
      expected_rows *= net.variable(p).states.size();
    }

    if (parents_resolve && v.cpt.size() != expected_rows) {
      report(ViolationKind::RowCount, i,
             "CPT has " + std::to_string(v.cpt.size()) + " rows, expected " + std::to_string(expected_rows));
    }
    for (std::size_t r = 0; r < v.cpt.size(); ++r) {
      const auto& row = v.cpt[r];
      const std::string where = "CPT row " + std::to_string(r);
      if (row.size() != v.states.size()) {
        report(ViolationKind::RowLength, i,
               where + " has " + std::to_string(row.size()) + " entries, expected " + std::to_string(v.states.size()));
        continue;
      }
      double sum = 0.0;
      bool finite = true;
      for (double p : row) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
          report(ViolationKind::BadProbability, i, where + " has an entry outside [0, 1]");
          finite = false;
          break;
        }
        sum += p;
      }
      if (finite && std::abs(sum - 1.0) > kRowSumTolerance) {
        std::ostringstream msg;
        msg.precision(17);
        msg << where << ": row sum != 1 (got " << sum << ")";
        report(ViolationKind::RowSum, i, msg.str());
      }
    }
  }
  find_cycles(net, out);
  return out;
}

// ---------------------------------------------------------------------------
// Probability lookups

std::size_t cpt_row_index(const Network& net, NodeIndex node, std::span<const StateIndex> parent_states) {
  const Variable& v = net.variable(node);
  std::size_t row = 0;
  for (std::size_t k = 0; k < v.parents.size(); ++k) {
    row = row * net.variable(v.parents[k]).states.size() + parent_states[k];
  }
  return row;
}

std::span<const double> cpt_row(const Network& net, NodeIndex node, const Instantiation& parent_values) {
  const Variable& v = net.variable(node);
  std::size_t row = 0;
  for (NodeIndex p : v.parents) {
    if (!parent_values.has(p)) {
      throw std::invalid_argument("cpt_row: parent '" + net.variable(p).name + "' of '" + v.name + "' is unassigned");
    }
    row = row * net.variable(p).states.size() + parent_values[p];
  }
  return v.cpt[row];
}

double joint_probability(const Network& net, const Instantiation& x) {
  if (x.size() != net.size() || !x.is_full()) {
    throw std::invalid_argument("joint_probability: instantiation is not full");
  }
  double p = 1.0;
  for (NodeIndex i = 0; i < net.size(); ++i) p *= cpt_row(net, i, x)[x[i]];
  return p;
}

// ---------------------------------------------------------------------------
// Text formats

NetworkError::NetworkError(std::vector<NetworkViolation> violations)
    : std::runtime_error([&] {
        std::string msg = "invalid network";
        for (const auto& v : violations) msg += "\n  " + v.message;
        return msg;
      }()),
      violations_(std::move(violations)) {}

namespace {

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end(), nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), e.byte);
  }
}

void require_keys(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view what) {
  if (!obj.is_object()) throw ParseError(std::string(what) + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ParseError(std::string(what) + ": unknown key '" + key + "'");
    }
  }
  for (auto key : allowed) {
    if (!obj.contains(key)) throw ParseError(std::string(what) + ": missing key '" + std::string(key) + "'");
  }
}

std::vector<std::string> string_list(const json& j, const std::string& what) {
  if (!j.is_array()) throw ParseError(what + ": expected a list of strings");
  std::vector<std::string> out;
  for (const auto& e : j) {
    if (!e.is_string()) throw ParseError(what + ": expected a list of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

std::vector<double> probability_list(const json& j, const std::string& what) {
  if (!j.is_array()) throw ParseError(what + ": expected a list of numbers");
  std::vector<double> out;
  for (const auto& e : j) {
    if (!e.is_number()) throw ParseError(what + ": expected a list of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::optional<StateIndex> state_index(const Variable& v, std::string_view label) {
  auto it = std::find(v.states.begin(), v.states.end(), label);
  if (it == v.states.end()) return std::nullopt;
  return static_cast<StateIndex>(it - v.states.begin());
}

}  // namespace

Network parse_network(std::string_view text) {
  const json doc = parse_json(text);
  if (!doc.is_object()) throw ParseError("network: top level must be an object");
  require_keys(doc, {"nodes"}, "network");
  const json& nodes = doc.at("nodes");
  if (!nodes.is_array()) throw ParseError("network: 'nodes' must be a list");

  std::vector<Variable> vars(nodes.size());
  std::vector<std::vector<std::string>> parent_names(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const json& n = nodes[i];
    const std::string where = "node " + std::to_string(i);
    require_keys(n, {"name", "states", "parents", "cpt"}, where);
    if (!n.at("name").is_string()) throw ParseError(where + ": 'name' must be a string");
    vars[i].name = n.at("name").get<std::string>();
    vars[i].states = string_list(n.at("states"), where + " states");
    parent_names[i] = string_list(n.at("parents"), where + " parents");
    if (!n.at("cpt").is_array()) throw ParseError(where + ": 'cpt' must be a list");
  }

  // Names resolve only once every node has been read; parents may be listed
  // after their children.
  std::vector<NetworkViolation> unresolved;
  std::map<std::string, NodeIndex, std::less<>> by_name;
  for (NodeIndex i = 0; i < vars.size(); ++i) by_name.emplace(vars[i].name, i);
  for (NodeIndex i = 0; i < vars.size(); ++i) {
    for (const auto& pname : parent_names[i]) {
      auto it = by_name.find(pname);
      if (it == by_name.end()) {
        unresolved.push_back({ViolationKind::UnknownParent, i,
                              "'" + vars[i].name + "': unknown parent '" + pname + "'", {}});
      } else {
        vars[i].parents.push_back(it->second);
      }
    }
  }
  if (!unresolved.empty()) throw NetworkError(std::move(unresolved));

  std::vector<NetworkViolation> row_problems;
  for (NodeIndex i = 0; i < vars.size(); ++i) {
    const json& rows = nodes[i].at("cpt");
    const std::string where = "'" + vars[i].name + "'";
    const bool keyed = !rows.empty() && rows.front().is_object();
    if (!keyed) {
      for (std::size_t r = 0; r < rows.size(); ++r) {
        vars[i].cpt.push_back(probability_list(rows[r], where + " cpt row " + std::to_string(r)));
      }
      continue;
    }

    // Keyed rows: {"given": [parent state labels...], "probs": [...]} in any order.
    std::size_t expected = 1;
    for (NodeIndex p : vars[i].parents) expected *= vars[p].states.size();
    std::vector<std::optional<std::vector<double>>> slots(expected);
    for (const json& row : rows) {
      require_keys(row, {"given", "probs"}, where + " cpt row");
      const auto given = string_list(row.at("given"), where + " cpt row 'given'");
      if (given.size() != vars[i].parents.size()) {
        row_problems.push_back({ViolationKind::RowLength, i, where + ": 'given' must name one state per parent", {}});
        continue;
      }
      std::size_t code = 0;
      bool ok = true;
      for (std::size_t k = 0; k < given.size(); ++k) {
        const Variable& parent = vars[vars[i].parents[k]];
        auto s = state_index(parent, given[k]);
        if (!s) {
          row_problems.push_back({ViolationKind::UnknownState, i,
                                  where + ": parent '" + parent.name + "' has no state '" + given[k] + "'", {}});
          ok = false;
          break;
        }
        code = code * parent.states.size() + *s;
      }
      if (!ok) continue;
      if (slots[code]) {
        row_problems.push_back({ViolationKind::RowCount, i, where + ": parent configuration given twice", {}});
        continue;
      }
      slots[code] = probability_list(row.at("probs"), where + " cpt row 'probs'");
    }
    for (std::size_t code = 0; code < expected; ++code) {
      if (!slots[code]) {
        row_problems.push_back({ViolationKind::RowCount, i,
                                where + ": no row for parent configuration " + std::to_string(code), {}});
      } else {
        vars[i].cpt.push_back(std::move(*slots[code]));
      }
    }
  }
  if (!row_problems.empty()) throw NetworkError(std::move(row_problems));

  Network net(std::move(vars));
  if (auto violations = validate_network(net); !violations.empty()) throw NetworkError(std::move(violations));
  return net;
}

std::string serialize_network(const Network& net) {
  ordered_json nodes = ordered_json::array();
  for (const Variable& v : net.variables()) {
    ordered_json n;
    n["name"] = v.name;
    n["states"] = v.states;
    ordered_json parents = ordered_json::array();
    for (NodeIndex p : v.parents) parents.push_back(net.variable(p).name);
    n["parents"] = parents;
    n["cpt"] = v.cpt;
    nodes.push_back(std::move(n));
  }
  ordered_json doc;
  doc["nodes"] = std::move(nodes);
  return doc.dump(2) + "\n";
}

void check_evidence(const Network& net, const Evidence& ev) {
  for (const auto& [node, state] : ev.assignments) {
    if (node >= net.size()) throw std::invalid_argument("evidence names node index " + std::to_string(node));
    if (state >= net.variable(node).states.size()) {
      throw std::invalid_argument("evidence state " + std::to_string(state) + " is invalid for '" +
                                  net.variable(node).name + "'");
    }
  }
}

Evidence parse_evidence(const Network& net, std::string_view text) {
  const json doc = parse_json(text);
  if (!doc.is_object()) throw ParseError("evidence: top level must be an object");
  Evidence ev;
  for (const auto& [name, label] : doc.items()) {
    auto node = net.find(name);
    if (!node) throw ParseError("evidence: unknown node '" + name + "'");
    if (!label.is_string()) throw ParseError("evidence: state of '" + name + "' must be a string");
    auto s = state_index(net.variable(*node), label.get<std::string>());
    if (!s) throw ParseError("evidence: node '" + name + "' has no state '" + label.get<std::string>() + "'");
    ev.assignments[*node] = *s;
  }
  return ev;
}

std::string serialize_evidence(const Network& net, const Evidence& ev) {
  ordered_json doc = ordered_json::object();
  for (const auto& [node, state] : ev.assignments) {
    const Variable& v = net.variable(node);
    doc[v.name] = v.states.at(state);
  }
  return doc.dump(2) + "\n";
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace backsim
