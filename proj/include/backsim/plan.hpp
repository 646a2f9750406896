#pragma once

// Sampling plans: an ordered list of nodes, each sampled either backward
// (its value is known; draw its uninstantiated parents from the normalized
// likelihood) or forward (draw the node from its CPT row).

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "backsim/network.hpp"

namespace backsim {

enum class StepMode { Backward, Forward };

std::string_view to_string(StepMode mode);

struct PlanStep {
  NodeIndex node;
  StepMode mode;

  bool operator==(const PlanStep&) const = default;
};

struct SamplingPlan {
  std::vector<PlanStep> steps;

  /// Nodes appearing in the plan, per-node flags indexed by NodeIndex.
  std::vector<bool> sampled_set(std::size_t node_count) const;
  std::vector<bool> backward_set(std::size_t node_count) const;
  std::vector<bool> forward_set(std::size_t node_count) const;

  bool operator==(const SamplingPlan&) const = default;
};

enum class PlanRule {
  UnknownNode,
  DuplicateNode,
  /// Backward step on a node that is neither instantiated nor a leaf with parents.
  BackwardUninstantiated,
  /// Forward step whose parents are not all instantiated.
  ForwardParentsMissing,
  /// Forward step on a node whose value is already fixed.
  ForwardInstantiated,
  EvidenceForward,
  /// Node neither sampled nor a parent of a backward-sampled node.
  NodeNotCovered,
};

std::string_view to_string(PlanRule rule);

struct PlanViolation {
  PlanRule rule;
  /// Offending step, absent for coverage violations found after the last step.
  std::optional<std::size_t> step;
  NodeIndex node;
  std::string message;
};

/// Replays the instantiation bookkeeping step by step and reports every
/// violated ordering requirement. Empty means valid.
std::vector<PlanViolation> validate_plan(const Network& net, const Evidence& ev, const SamplingPlan& plan);

/// Evidence nodes plus their non-root ancestors, all Backward, descendants
/// first (ties by ascending index); then every node not yet covered, Forward,
/// in topological order (ties by ascending index). Roots above the evidence are
/// instantiated by their children's backward steps and are not scheduled.
SamplingPlan default_plan(const Network& net, const Evidence& ev);

/// Likelihood weighting expressed as a plan: every node in topological order,
/// evidence nodes Backward (their parents are already instantiated, so the
/// step draws nothing), all others Forward.
SamplingPlan forward_plan(const Network& net, const Evidence& ev);

struct PlanEnumeration {
  std::vector<SamplingPlan> plans;
  bool truncated = false;
};

/// Distinct valid plans, at most `limit` of them. default_plan() comes first;
/// the rest follow a depth-first walk over step choices (Backward choices
/// before Forward, each by ascending node index), emitting every valid prefix.
PlanEnumeration enumerate_plans(const Network& net, const Evidence& ev, std::size_t limit);

/// Plan file: list of {"node": name, "mode": "backward" | "forward"}.
SamplingPlan parse_plan(const Network& net, std::string_view text);
std::string serialize_plan(const Network& net, const SamplingPlan& plan);

/// Compact form such as "D:B B:B E:F" for logs and test messages.
std::string describe_plan(const Network& net, const SamplingPlan& plan);

}  // namespace backsim
