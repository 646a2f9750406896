#pragma once

// Exact posteriors by exhaustive enumeration. This is the ground truth the
// samplers are measured against, so it is deliberately the simplest correct
// algorithm rather than a fast one.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "backsim/network.hpp"

namespace backsim {

/// Default cap on the number of evidence completions enumerated.
inline constexpr std::uint64_t kDefaultMaxJointStates = std::uint64_t{1} << 24;

struct PosteriorSummary {
  /// marginals[i][s] = P(X_i = s | evidence). Empty when the evidence is impossible.
  std::vector<std::vector<double>> marginals;
  double evidence_probability = 0.0;

  bool impossible() const { return evidence_probability == 0.0; }
};

class GuardExceeded : public std::runtime_error {
 public:
  GuardExceeded(std::uint64_t states, std::uint64_t limit);
  std::uint64_t states() const { return states_; }
  std::uint64_t limit() const { return limit_; }

 private:
  std::uint64_t states_;
  std::uint64_t limit_;
};

/// Sums the joint over every completion of `ev`, visiting non-evidence nodes
/// in mixed-radix order. Throws GuardExceeded when the number of completions
/// exceeds `max_joint_states`; impossible evidence is returned, not thrown.
PosteriorSummary exact_posteriors(const Network& net, const Evidence& ev,
                                  std::uint64_t max_joint_states = kDefaultMaxJointStates);

}  // namespace backsim
