#pragma once

// One trial of backward simulation: execute a sampling plan, drawing parents
// backward from normalized likelihoods and children forward from their CPT
// rows, then score the trial with its importance weight
//
//   Z = prod_{i not sampled} P(x_i | x_pa(i)) * prod_{j backward} Norm(j).

#include <cstdint>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "backsim/network.hpp"
#include "backsim/plan.hpp"
#include "backsim/random.hpp"

namespace backsim {

/// Identifies one normalization constant: the node, its fixed state, which
/// parents were instantiated (bit k = parent k), and their states as a
/// mixed-radix code over the instantiated parents only.
struct NormKey {
  NodeIndex node;
  StateIndex state;
  std::uint64_t split;
  std::uint64_t instantiated_code;

  bool operator==(const NormKey&) const = default;
};

struct NormKeyHash {
  std::size_t operator()(const NormKey& k) const noexcept;
};

/// Norm(i) together with the likelihood terms it sums, one per configuration
/// of the uninstantiated parents (mixed radix, first such parent most
/// significant). Backward draws sample directly from `likelihoods`.
struct NormEntry {
  double norm = 0.0;
  std::vector<double> likelihoods;
  /// Indices into the node's parent list of the uninstantiated parents.
  std::vector<std::size_t> free_parents;
};

/// Thread-safe memo of normalization constants. Entries are never evicted,
/// so returned references stay valid for the cache's lifetime.
class NormCache {
 public:
  NormCache() = default;
  NormCache(const NormCache&) = delete;
  NormCache& operator=(const NormCache&) = delete;

  /// Looks the entry up, computing and publishing it on a miss.
  const NormEntry& get(const Network& net, NodeIndex node, const Instantiation& x);
  std::size_t size() const;

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<NormKey, NormEntry, NormKeyHash> entries_;
};

/// Key for `node` under the current instantiation (node must be instantiated).
NormKey make_norm_key(const Network& net, NodeIndex node, const Instantiation& x);

/// Uncached computation of the entry for `node` given `x`.
NormEntry compute_norm_entry(const Network& net, NodeIndex node, const Instantiation& x);

/// Sum over all configurations y of the uninstantiated parents of
/// P(x_node | y, instantiated parents). Equals the plain likelihood when all
/// parents are instantiated.
double norm_constant(const Network& net, NodeIndex node, const Instantiation& x, NormCache& cache);

/// Index drawn from unnormalized `weights` (summing to `total`) using the
/// variate `u`. Zero-weight entries are never returned.
std::size_t sample_index(double u, std::span<const double> weights, double total);

struct BackwardDraw {
  double norm = 0.0;
  /// Probability of the drawn parent configuration; 1 when nothing was drawn.
  double probability = 1.0;
  /// Mixed-radix code of the drawn configuration of the uninstantiated parents.
  std::uint64_t outcome = 0;
  bool drew = false;
  bool aborted = false;
};

/// Instantiates the uninstantiated parents of `node` (which must itself be
/// instantiated). Consumes one variate iff there is something to draw. A zero
/// normalization constant aborts without touching `x`.
BackwardDraw backward_step(UniformSource& rng, const Network& net, NodeIndex node, Instantiation& x,
                           NormCache& cache);

struct ForwardDraw {
  StateIndex state = 0;
  double probability = 0.0;
};

/// Draws `node` from its CPT row; all parents must be instantiated.
ForwardDraw forward_step(UniformSource& rng, const Network& net, NodeIndex node, Instantiation& x);

enum class DrawKind {
  /// Forward step: outcome is the node's state.
  Forward,
  /// Backward step: outcome is the code of the uninstantiated-parent configuration.
  Backward,
  /// Uniform draw of an uninstantiated leaf before it is backward sampled.
  LeafUniform,
};

struct SampleRecord {
  std::size_t step;
  NodeIndex node;
  DrawKind kind;
  std::uint64_t outcome;
  double probability;
  /// Norm(node) for Backward records, 0 otherwise.
  double norm;
};

struct TrialResult {
  Instantiation instantiation;
  double weight = 0.0;
  std::vector<SampleRecord> log;
  bool aborted = false;
};

/// Executes `plan` once. The plan must be valid for (net, ev); violations of
/// its step preconditions throw std::logic_error. Consumes exactly one variate
/// per forward step, per backward step with uninstantiated parents, and per
/// uninstantiated leaf that is backward sampled, in plan order.
TrialResult run_trial(UniformSource& rng, const Network& net, const Evidence& ev, const SamplingPlan& plan,
                      NormCache& cache);

struct WeightCheck {
  /// Weight recomputed from the factorized formula with freshly enumerated
  /// normalization constants.
  double from_factors = 0.0;
  /// Joint probability divided by the product of logged sampling probabilities.
  double from_ratio = 0.0;
  bool ok = false;
  std::string message;
};

/// Recomputes a completed trial's weight two independent ways and checks both
/// against `result.weight` to `rel_tol`. Throws std::invalid_argument for an
/// aborted trial.
WeightCheck verify_weight(const Network& net, const Evidence& ev, const SamplingPlan& plan,
                          const TrialResult& result, double rel_tol = 1e-12);

}  // namespace backsim
