#pragma once

// Discrete Bayesian network data model: variables, conditional probability
// tables, evidence and (partial) instantiations, plus the text formats used
// to load them.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace backsim {

using NodeIndex = std::size_t;
using StateIndex = std::size_t;

/// Maximum deviation of a CPT row sum from 1 accepted on input.
inline constexpr double kRowSumTolerance = 1e-9;

/// One discrete variable. `cpt` holds one row per parent configuration; the
/// row index is the mixed-radix code of the parent states with the first
/// listed parent most significant.
struct Variable {
  std::string name;
  std::vector<std::string> states;
  std::vector<NodeIndex> parents;
  std::vector<std::vector<double>> cpt;

  bool operator==(const Variable&) const = default;
};

/// A network is a plain value; it may be structurally invalid until checked
/// with validate_network(). parse_network() only ever returns valid networks.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Variable> variables);

  std::size_t size() const { return variables_.size(); }
  const Variable& variable(NodeIndex i) const { return variables_.at(i); }
  const std::vector<Variable>& variables() const { return variables_; }

  std::optional<NodeIndex> find(std::string_view name) const;
  /// Throws std::out_of_range for an unknown name.
  NodeIndex index_of(std::string_view name) const;

  /// Children lists derived from the parent lists.
  const std::vector<std::vector<NodeIndex>>& children() const { return children_; }
  bool is_root(NodeIndex i) const { return variables_[i].parents.empty(); }
  bool is_leaf(NodeIndex i) const { return children_[i].empty(); }

  /// Nodes ordered parents-first, ties broken by ascending index.
  /// Requires an acyclic network.
  std::vector<NodeIndex> topological_order() const;

  /// Product of state-space sizes of the given nodes (saturates at UINT64_MAX).
  std::uint64_t state_space_size(std::span<const NodeIndex> nodes) const;
  std::uint64_t joint_state_space_size() const;

  bool operator==(const Network& other) const { return variables_ == other.variables_; }

 private:
  std::vector<Variable> variables_;
  std::vector<std::vector<NodeIndex>> children_;
};

/// Observed node -> state index. Ordered so iteration is deterministic.
struct Evidence {
  std::map<NodeIndex, StateIndex> assignments;

  bool empty() const { return assignments.empty(); }
  bool contains(NodeIndex i) const { return assignments.contains(i); }
  bool operator==(const Evidence&) const = default;
};

/// Per-node optional state assignment.
class Instantiation {
 public:
  Instantiation() = default;
  explicit Instantiation(std::size_t node_count) : values_(node_count, kUnset) {}

  std::size_t size() const { return values_.size(); }
  bool has(NodeIndex i) const { return values_[i] != kUnset; }
  StateIndex at(NodeIndex i) const;
  StateIndex operator[](NodeIndex i) const { return static_cast<StateIndex>(values_[i]); }
  void set(NodeIndex i, StateIndex s) { values_[i] = static_cast<std::int64_t>(s); }
  void clear(NodeIndex i) { values_[i] = kUnset; }
  bool is_full() const;

  static Instantiation from_evidence(std::size_t node_count, const Evidence& ev);
  static Instantiation full(std::span<const StateIndex> states);

  bool operator==(const Instantiation&) const = default;

 private:
  static constexpr std::int64_t kUnset = -1;
  std::vector<std::int64_t> values_;
};

enum class ViolationKind {
  EmptyName,
  DuplicateName,
  TooFewStates,
  DuplicateState,
  UnknownParent,
  UnknownState,
  SelfParent,
  DuplicateParent,
  RowCount,
  RowLength,
  BadProbability,
  RowSum,
  Cycle,
};

struct NetworkViolation {
  ViolationKind kind;
  std::optional<NodeIndex> node;
  std::string message;
  /// Offending node sequence for Cycle violations (first node repeated last).
  std::vector<NodeIndex> cycle;
};

std::string_view to_string(ViolationKind kind);

/// Reports every violated structural and numeric invariant; empty means valid.
std::vector<NetworkViolation> validate_network(const Network& net);

/// Row of `node`'s CPT selected by the parent states in `parent_values`.
/// Throws std::invalid_argument if a parent is unassigned.
std::span<const double> cpt_row(const Network& net, NodeIndex node, const Instantiation& parent_values);

/// Mixed-radix row index for the given parent states, first parent most
/// significant. `parent_states[k]` is the state of `variable.parents[k]`.
std::size_t cpt_row_index(const Network& net, NodeIndex node, std::span<const StateIndex> parent_states);

/// Product of node conditionals for a full instantiation.
/// Throws std::invalid_argument if `x` is incomplete.
double joint_probability(const Network& net, const Instantiation& x);

// ---------------------------------------------------------------------------
// Text formats

/// Malformed input text. `offset` is the byte offset reported by the reader
/// when the failure is syntactic.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::optional<std::size_t> offset = std::nullopt)
      : std::runtime_error(what), offset_(offset) {}
  std::optional<std::size_t> offset() const { return offset_; }

 private:
  std::optional<std::size_t> offset_;
};

/// Well-formed text describing an invalid network.
class NetworkError : public std::runtime_error {
 public:
  explicit NetworkError(std::vector<NetworkViolation> violations);
  const std::vector<NetworkViolation>& violations() const { return violations_; }

 private:
  std::vector<NetworkViolation> violations_;
};

/// Parses the network file format. `//` and `/* */` comments are permitted.
/// Throws ParseError or NetworkError; never returns an invalid network.
Network parse_network(std::string_view text);

/// Serializes in the positional-row form; parse_network(serialize_network(n)) == n.
std::string serialize_network(const Network& net);

/// Evidence file: object mapping node name -> state label.
Evidence parse_evidence(const Network& net, std::string_view text);
std::string serialize_evidence(const Network& net, const Evidence& ev);

/// Throws std::invalid_argument naming the first bad entry.
void check_evidence(const Network& net, const Evidence& ev);

std::string read_text_file(const std::string& path);

}  // namespace backsim
