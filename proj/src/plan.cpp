#include "backsim/plan.hpp"

#include <algorithm>
#include <functional>
#include <queue>

#include "json.hpp"

namespace backsim {

std::string_view to_string(StepMode mode) { return mode == StepMode::Backward ? "backward" : "forward"; }

std::string_view to_string(PlanRule rule) {
  switch (rule) {
    case PlanRule::UnknownNode: return "unknown-node";
    case PlanRule::DuplicateNode: return "duplicate-node";
    case PlanRule::BackwardUninstantiated: return "backward-uninstantiated";
    case PlanRule::ForwardParentsMissing: return "forward-parents-missing";
    case PlanRule::ForwardInstantiated: return "forward-instantiated";
    case PlanRule::EvidenceForward: return "evidence-forward";
    case PlanRule::NodeNotCovered: return "node-not-covered";
  }
  return "unknown";
}

namespace {

std::vector<bool> membership(const SamplingPlan& plan, std::size_t n, std::optional<StepMode> mode) {
  std::vector<bool> out(n, false);
  for (const auto& s : plan.steps) {
    if (s.node < n && (!mode || s.mode == *mode)) out[s.node] = true;
  }
  return out;
}

bool can_backward(const Network& net, const std::vector<bool>& instantiated, NodeIndex node) {
  // An uninstantiated leaf with parents can be backward sampled through a
  // dummy child observed with uniform likelihood.
  return instantiated[node] || (net.is_leaf(node) && !net.is_root(node));
}

bool parents_instantiated(const Network& net, const std::vector<bool>& instantiated, NodeIndex node) {
  const auto& parents = net.variable(node).parents;
  return std::all_of(parents.begin(), parents.end(), [&](NodeIndex p) { return instantiated[p]; });
}

std::vector<bool> evidence_flags(const Network& net, const Evidence& ev) {
  std::vector<bool> out(net.size(), false);
  for (const auto& [node, _] : ev.assignments) {
    if (node < net.size()) out[node] = true;
  }
  return out;
}

bool fully_covered(const Network& net, const std::vector<bool>& used, const std::vector<bool>& backward) {
  std::vector<bool> covered = used;
  for (NodeIndex i = 0; i < net.size(); ++i) {
    if (!backward[i]) continue;
    for (NodeIndex p : net.variable(i).parents) covered[p] = true;
  }
  return std::all_of(covered.begin(), covered.end(), [](bool b) { return b; });
}

}  // namespace

std::vector<bool> SamplingPlan::sampled_set(std::size_t n) const { return membership(*this, n, std::nullopt); }
std::vector<bool> SamplingPlan::backward_set(std::size_t n) const { return membership(*this, n, StepMode::Backward); }
std::vector<bool> SamplingPlan::forward_set(std::size_t n) const { return membership(*this, n, StepMode::Forward); }

std::vector<PlanViolation> validate_plan(const Network& net, const Evidence& ev, const SamplingPlan& plan) {
  std::vector<PlanViolation> out;
  const std::size_t n = net.size();
  std::vector<bool> instantiated = evidence_flags(net, ev);
  const std::vector<bool> is_evidence = instantiated;
  std::vector<bool> used(n, false);
  std::vector<bool> backward(n, false);

  auto name = [&](NodeIndex i) { return "'" + net.variable(i).name + "'"; };
  for (std::size_t s = 0; s < plan.steps.size(); ++s) {
    const auto [node, mode] = plan.steps[s];
    const std::string where = "step " + std::to_string(s) + ": ";
    if (node >= n) {
      out.push_back({PlanRule::UnknownNode, s, node, where + "node index " + std::to_string(node) + " is out of range"});
      continue;
    }
    if (used[node]) {
      out.push_back({PlanRule::DuplicateNode, s, node, where + name(node) + " appears more than once"});
      continue;
    }
    used[node] = true;

    if (mode == StepMode::Backward) {
      if (!can_backward(net, instantiated, node)) {
        out.push_back({PlanRule::BackwardUninstantiated, s, node,
                       where + name(node) + " is backward sampled before it is instantiated"});
      }
      backward[node] = true;
      instantiated[node] = true;
      for (NodeIndex p : net.variable(node).parents) instantiated[p] = true;
      continue;
    }

    if (is_evidence[node]) {
      out.push_back({PlanRule::EvidenceForward, s, node, where + "evidence node " + name(node) + " is forward sampled"});
    } else if (instantiated[node]) {
      out.push_back({PlanRule::ForwardInstantiated, s, node,
                     where + name(node) + " is forward sampled but already instantiated"});
    }
    for (NodeIndex p : net.variable(node).parents) {
      if (!instantiated[p]) {
        out.push_back({PlanRule::ForwardParentsMissing, s, node,
                       where + name(node) + " is forward sampled before its parent " + name(p)});
      }
    }
    instantiated[node] = true;
  }

  std::vector<bool> covered = used;
  for (NodeIndex i = 0; i < n; ++i) {
    if (!backward[i]) continue;
    for (NodeIndex p : net.variable(i).parents) covered[p] = true;
  }
  for (NodeIndex i = 0; i < n; ++i) {
    if (!covered[i]) {
      out.push_back({PlanRule::NodeNotCovered, std::nullopt, i,
                     name(i) + " is neither sampled nor a parent of a backward-sampled node"});
    }
  }
  return out;
}

SamplingPlan default_plan(const Network& net, const Evidence& ev) {
  const std::size_t n = net.size();
  std::vector<bool> in_backward(n, false);

  // Evidence plus ancestors that have parents of their own.
  std::vector<NodeIndex> frontier;
  for (const auto& [node, _] : ev.assignments) {
    in_backward[node] = true;
    frontier.push_back(node);
  }
  std::vector<bool> seen = in_backward;
  while (!frontier.empty()) {
    NodeIndex node = frontier.back();
    frontier.pop_back();
    for (NodeIndex p : net.variable(node).parents) {
      if (seen[p]) continue;
      seen[p] = true;
      frontier.push_back(p);
      if (!net.is_root(p)) in_backward[p] = true;
    }
  }

  // Descendants first: a node is ready once all its children inside the
  // backward set have been scheduled.
  SamplingPlan plan;
  std::vector<std::size_t> pending(n, 0);
  std::priority_queue<NodeIndex, std::vector<NodeIndex>, std::greater<>> ready;
  for (NodeIndex i = 0; i < n; ++i) {
    if (!in_backward[i]) continue;
    for (NodeIndex c : net.children()[i]) pending[i] += in_backward[c] ? 1 : 0;
    if (pending[i] == 0) ready.push(i);
  }
  std::vector<bool> covered(n, false);
  while (!ready.empty()) {
    NodeIndex node = ready.top();
    ready.pop();
    plan.steps.push_back({node, StepMode::Backward});
    covered[node] = true;
    for (NodeIndex p : net.variable(node).parents) {
      covered[p] = true;
      if (in_backward[p] && --pending[p] == 0) ready.push(p);
    }
  }

  for (NodeIndex node : net.topological_order()) {
    if (!covered[node]) plan.steps.push_back({node, StepMode::Forward});
  }
  return plan;
}

SamplingPlan forward_plan(const Network& net, const Evidence& ev) {
  SamplingPlan plan;
  for (NodeIndex node : net.topological_order()) {
    plan.steps.push_back({node, ev.contains(node) ? StepMode::Backward : StepMode::Forward});
  }
  return plan;
}

namespace {

class PlanSearch {
 public:
  PlanSearch(const Network& net, const Evidence& ev, std::size_t limit, PlanEnumeration& out)
      : net_(net), limit_(limit), out_(out), is_evidence_(evidence_flags(net, ev)) {}

  void run() {
    State root{is_evidence_, std::vector<bool>(net_.size(), false), std::vector<bool>(net_.size(), false), {}};
    visit(root);
  }

 private:
  struct State {
    std::vector<bool> instantiated;
    std::vector<bool> used;
    std::vector<bool> backward;
    SamplingPlan plan;
  };

  // Returns false once the limit has been hit.
  bool emit(const SamplingPlan& plan) {
    if (std::find(out_.plans.begin(), out_.plans.end(), plan) != out_.plans.end()) return true;
    if (out_.plans.size() == limit_) {
      out_.truncated = true;
      return false;
    }
    out_.plans.push_back(plan);
    return true;
  }

  bool visit(const State& state) {
    if (!state.plan.steps.empty() && fully_covered(net_, state.used, state.backward)) {
      if (!emit(state.plan)) return false;
    }
    for (StepMode mode : {StepMode::Backward, StepMode::Forward}) {
      for (NodeIndex node = 0; node < net_.size(); ++node) {
        if (state.used[node]) continue;
        if (mode == StepMode::Backward && !can_backward(net_, state.instantiated, node)) continue;
        if (mode == StepMode::Forward &&
            (is_evidence_[node] || state.instantiated[node] || !parents_instantiated(net_, state.instantiated, node))) {
          continue;
        }
        State next = state;
        next.used[node] = true;
        next.instantiated[node] = true;
        if (mode == StepMode::Backward) {
          next.backward[node] = true;
          for (NodeIndex p : net_.variable(node).parents) next.instantiated[p] = true;
        }
        next.plan.steps.push_back({node, mode});
        if (!visit(next)) return false;
      }
    }
    return true;
  }

  const Network& net_;
  std::size_t limit_;
  PlanEnumeration& out_;
  std::vector<bool> is_evidence_;
};

}  // namespace

PlanEnumeration enumerate_plans(const Network& net, const Evidence& ev, std::size_t limit) {
  PlanEnumeration out;
  if (limit == 0) {
    out.truncated = true;
    return out;
  }
  out.plans.push_back(default_plan(net, ev));
  PlanSearch(net, ev, limit, out).run();
  return out;
}

// ---------------------------------------------------------------------------
// Plan files

SamplingPlan parse_plan(const Network& net, std::string_view text) {
  using json = nlohmann::json;
  json doc;
  try {
    doc = json::parse(text.begin(), text.end(), nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), e.byte);
  }
  if (!doc.is_array()) throw ParseError("plan: top level must be a list of steps");
  SamplingPlan plan;
  for (std::size_t s = 0; s < doc.size(); ++s) {
    const json& step = doc[s];
    const std::string where = "plan step " + std::to_string(s);
    if (!step.is_object()) throw ParseError(where + ": expected an object");
    for (const auto& [key, _] : step.items()) {
      if (key != "node" && key != "mode") throw ParseError(where + ": unknown key '" + key + "'");
    }
    if (!step.contains("node") || !step.at("node").is_string()) throw ParseError(where + ": 'node' must be a string");
    if (!step.contains("mode") || !step.at("mode").is_string()) throw ParseError(where + ": 'mode' must be a string");
    const auto name = step.at("node").get<std::string>();
    const auto mode = step.at("mode").get<std::string>();
    auto node = net.find(name);
    if (!node) throw ParseError(where + ": unknown node '" + name + "'");
    if (mode != "backward" && mode != "forward") {
      throw ParseError(where + ": mode must be \"backward\" or \"forward\", got \"" + mode + "\"");
    }
    plan.steps.push_back({*node, mode == "backward" ? StepMode::Backward : StepMode::Forward});
  }
  return plan;
}

std::string serialize_plan(const Network& net, const SamplingPlan& plan) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& s : plan.steps) {
    nlohmann::ordered_json step;
    step["node"] = net.variable(s.node).name;
    step["mode"] = std::string(to_string(s.mode));
    doc.push_back(std::move(step));
  }
  return doc.dump(2) + "\n";
}

std::string describe_plan(const Network& net, const SamplingPlan& plan) {
  std::string out;
  for (const auto& s : plan.steps) {
    if (!out.empty()) out += ' ';
    out += s.node < net.size() ? net.variable(s.node).name : "#" + std::to_string(s.node);
    out += s.mode == StepMode::Backward ? ":B" : ":F";
  }
  return out;
}

}  // namespace backsim
