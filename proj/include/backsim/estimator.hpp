#pragma once

// Belief estimates from weighted trials, the L1 error against exact
// posteriors, and the multi-run convergence experiment.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "backsim/exact.hpp"
#include "backsim/network.hpp"
#include "backsim/plan.hpp"
#include "backsim/simulator.hpp"

namespace backsim {

/// Weighted state counts. cells[i][s] = sum of Z over trials with x_i = s.
class BeliefAccumulator {
 public:
  BeliefAccumulator() = default;
  explicit BeliefAccumulator(const Network& net);

  /// Aborted trials only advance the trial count.
  void add(const TrialResult& trial);
  /// Adds another accumulator's sums; equivalent to having added its trials.
  void merge(const BeliefAccumulator& other);

  const std::vector<std::vector<double>>& cells() const { return cells_; }
  double total_weight() const { return total_weight_; }
  /// Sum of squared weights, for the standard error of the evidence estimate.
  double total_weight_sq() const { return total_weight_sq_; }
  std::uint64_t trials() const { return trials_; }
  std::uint64_t aborted() const { return aborted_; }

  /// (sum Z) / trials, which estimates P(evidence). 0 with no trials.
  double evidence_estimate() const;
  /// Standard error of evidence_estimate() from the sample variance of Z.
  double evidence_standard_error() const;

 private:
  std::vector<std::vector<double>> cells_;
  double total_weight_ = 0.0;
  double total_weight_sq_ = 0.0;
  std::uint64_t trials_ = 0;
  std::uint64_t aborted_ = 0;
};

using Beliefs = std::vector<std::vector<double>>;

/// Cells divided by total weight; std::nullopt ("no signal") when the total
/// weight is zero.
std::optional<Beliefs> beliefs(const BeliefAccumulator& acc);

enum class ErrorScope { StateNodes, AllNodes };

/// Nodes whose beliefs enter the error: non-evidence nodes, or every node.
std::vector<NodeIndex> error_scope_nodes(const Network& net, const Evidence& ev, ErrorScope scope);

/// Sum over scope nodes and their states of |belief - reference|.
double error_l1(const Beliefs& estimate, const PosteriorSummary& reference, const std::vector<NodeIndex>& scope);

/// Error used when a run has no signal yet: every belief taken as zero, so
/// the error equals the reference mass in scope (one per node).
double no_signal_error(const PosteriorSummary& reference, const std::vector<NodeIndex>& scope);

struct Method {
  std::string name;
  SamplingPlan plan;
};

struct ExperimentConfig {
  Network network;
  Evidence evidence;
  std::vector<Method> methods;
  std::size_t runs = 1;
  std::vector<std::uint64_t> checkpoints;
  std::uint64_t base_seed = 0;
  ErrorScope scope = ErrorScope::StateNodes;
  std::uint64_t max_joint_states = kDefaultMaxJointStates;
  /// Worker threads; results do not depend on it.
  std::size_t jobs = 1;
};

/// Throws std::invalid_argument describing the first problem.
void check_config(const ExperimentConfig& cfg);

struct CheckpointStats {
  std::uint64_t trials = 0;
  std::size_t runs = 0;
  double mean_error = 0.0;
  /// Population standard deviation of the per-run errors.
  double stddev_error = 0.0;
  /// Mean over runs of (sum Z) / trials.
  double mean_evidence_estimate = 0.0;
  /// Runs whose accumulator had zero total weight at this checkpoint.
  std::size_t no_signal_runs = 0;
};

struct MethodReport {
  std::string name;
  std::vector<CheckpointStats> checkpoints;
  /// per_run_errors[run][checkpoint].
  std::vector<std::vector<double>> per_run_errors;
};

struct ErrorReport {
  std::vector<MethodReport> methods;
  PosteriorSummary reference;
};

class ImpossibleEvidence : public std::runtime_error {
 public:
  ImpossibleEvidence() : std::runtime_error("evidence has probability zero") {}
};

/// Runs every method `runs` times; run k of method m uses a RandomStream
/// seeded with derive_run_seed(base_seed, m, k). Beliefs are snapshotted at
/// each checkpoint while the run continues on the same stream. Throws
/// GuardExceeded, ImpossibleEvidence, or std::invalid_argument for a bad config
/// or an invalid plan.
ErrorReport run_experiment(const ExperimentConfig& cfg);

/// CSV: header `method,trials,runs,mean_error,stddev_error`, one row per
/// (method, checkpoint) in configuration order.
std::string error_report_csv(const ErrorReport& report);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);

}  // namespace backsim
