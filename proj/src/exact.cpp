#include "backsim/exact.hpp"

#include <string>

namespace backsim {

GuardExceeded::GuardExceeded(std::uint64_t states, std::uint64_t limit)
    : std::runtime_error("exact inference needs " + std::to_string(states) + " joint states, limit is " +
                         std::to_string(limit)),
      states_(states),
      limit_(limit) {}

PosteriorSummary exact_posteriors(const Network& net, const Evidence& ev, std::uint64_t max_joint_states) {
  check_evidence(net, ev);

  std::vector<NodeIndex> free;
  for (NodeIndex i = 0; i < net.size(); ++i) {
    if (!ev.contains(i)) free.push_back(i);
  }
  const std::uint64_t completions = net.state_space_size(free);
  if (completions > max_joint_states) throw GuardExceeded(completions, max_joint_states);

  std::vector<std::vector<double>> mass(net.size());
  for (NodeIndex i = 0; i < net.size(); ++i) mass[i].assign(net.variable(i).states.size(), 0.0);

  Instantiation x = Instantiation::from_evidence(net.size(), ev);
  for (NodeIndex i : free) x.set(i, 0);

  // Odometer over the free nodes, last free node fastest.
  double total = 0.0;
  for (std::uint64_t n = 0; n < completions; ++n) {
    const double p = joint_probability(net, x);
    total += p;
    for (NodeIndex i = 0; i < net.size(); ++i) mass[i][x[i]] += p;

    for (std::size_t k = free.size(); k-- > 0;) {
      const NodeIndex i = free[k];
      if (x[i] + 1 < net.variable(i).states.size()) {
        x.set(i, x[i] + 1);
        break;
      }
      x.set(i, 0);
    }
  }

  PosteriorSummary out;
  out.evidence_probability = total;
  if (total == 0.0) return out;
  for (auto& row : mass) {
    for (double& p : row) p /= total;
  }
  out.marginals = std::move(mass);
  return out;
}

}  // namespace backsim
