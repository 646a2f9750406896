#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "backsim/network.hpp"
#include "backsim/plan.hpp"
#include "backsim/random.hpp"
#include "backsim/simulator.hpp"

namespace backsim::testing {

inline std::string data_path(const std::string& name) { return std::string(BACKSIM_DATA_DIR) + "/" + name; }
inline std::string golden_path(const std::string& name) { return std::string(BACKSIM_GOLDEN_DIR) + "/" + name; }

inline Network load_network(const std::string& name) { return parse_network(read_text_file(data_path(name))); }

inline Evidence load_evidence(const Network& net, const std::string& name) {
  return parse_evidence(net, read_text_file(data_path(name)));
}

inline Evidence evidence_of(const Network& net, std::initializer_list<std::pair<const char*, const char*>> items) {
  Evidence ev;
  for (auto [node, state] : items) {
    const NodeIndex i = net.index_of(node);
    const auto& states = net.variable(i).states;
    ev.assignments[i] = static_cast<StateIndex>(std::find(states.begin(), states.end(), state) - states.begin());
  }
  return ev;
}

inline SamplingPlan plan_of(const Network& net, std::initializer_list<std::pair<const char*, char>> steps) {
  SamplingPlan plan;
  for (auto [node, mode] : steps) {
    plan.steps.push_back({net.index_of(node), mode == 'B' ? StepMode::Backward : StepMode::Forward});
  }
  return plan;
}

/// S -> T with P(s1) = delta, P(t1|s1) = 1 - epsilon, P(t1|s2) = epsilon.
inline Network two_node(double delta, double epsilon) {
  return Network({
      {"S", {"s1", "s2"}, {}, {{delta, 1.0 - delta}}},
      {"T", {"t1", "t2"}, {0}, {{1.0 - epsilon, epsilon}, {epsilon, 1.0 - epsilon}}},
  });
}

/// Replays a fixed list of uniforms; running out is a test bug.
class ScriptedStream final : public UniformSource {
 public:
  explicit ScriptedStream(std::vector<double> values) : values_(std::move(values)) {}
  double next_uniform() override {
    if (next_ == values_.size()) throw std::logic_error("ScriptedStream exhausted");
    return values_[next_++];
  }
  std::size_t consumed() const { return next_; }

 private:
  std::vector<double> values_;
  std::size_t next_ = 0;
};

/// Records every variate drawn from an inner source.
class RecordingStream final : public UniformSource {
 public:
  explicit RecordingStream(UniformSource& inner) : inner_(inner) {}
  double next_uniform() override { return draws.emplace_back(inner_.next_uniform()); }
  std::vector<double> draws;

 private:
  UniformSource& inner_;
};

struct RandomNetworkSpec {
  std::size_t min_nodes = 2;
  std::size_t max_nodes = 8;
  std::size_t min_states = 2;
  std::size_t max_states = 3;
  std::size_t max_parents = 3;
  double edge_probability = 0.5;
  /// Chance that a CPT entry is forced to zero (rows always keep one positive entry).
  double zero_probability = 0.0;
};

/// Random DAG with random CPTs. Node order is shuffled so parents may appear
/// after their children in the variable list.
inline Network random_network(std::mt19937_64& rng, const RandomNetworkSpec& spec = {}) {
  std::uniform_int_distribution<std::size_t> node_count(spec.min_nodes, spec.max_nodes);
  std::uniform_int_distribution<std::size_t> state_count(spec.min_states, spec.max_states);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = node_count(rng);

  std::vector<NodeIndex> position(n);
  for (std::size_t i = 0; i < n; ++i) position[i] = i;
  std::shuffle(position.begin(), position.end(), rng);

  std::vector<Variable> vars(n);
  for (std::size_t t = 0; t < n; ++t) {
    Variable& v = vars[position[t]];
    v.name = "N" + std::to_string(t);
    for (std::size_t s = 0, k = state_count(rng); s < k; ++s) v.states.push_back("s" + std::to_string(s));
    for (std::size_t u = 0; u < t && v.parents.size() < spec.max_parents; ++u) {
      if (unit(rng) < spec.edge_probability) v.parents.push_back(position[u]);
    }
  }
  for (auto& v : vars) {
    std::size_t rows = 1;
    for (NodeIndex p : v.parents) rows *= vars[p].states.size();
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<double> row(v.states.size());
      double sum = 0.0;
      for (double& p : row) {
        p = unit(rng) < spec.zero_probability ? 0.0 : 0.05 + unit(rng);
        sum += p;
      }
      if (sum == 0.0) {
        row[0] = 1.0;
        sum = 1.0;
      }
      for (double& p : row) p /= sum;
      v.cpt.push_back(std::move(row));
    }
  }
  return Network(std::move(vars));
}

/// Up to `max_nodes` observed nodes with random states.
inline Evidence random_evidence(std::mt19937_64& rng, const Network& net, std::size_t max_nodes) {
  Evidence ev;
  std::uniform_int_distribution<std::size_t> count(0, std::min(max_nodes, net.size()));
  std::vector<NodeIndex> nodes(net.size());
  for (NodeIndex i = 0; i < net.size(); ++i) nodes[i] = i;
  std::shuffle(nodes.begin(), nodes.end(), rng);
  for (std::size_t k = 0, c = count(rng); k < c; ++k) {
    std::uniform_int_distribution<StateIndex> state(0, net.variable(nodes[k]).states.size() - 1);
    ev.assignments[nodes[k]] = state(rng);
  }
  return ev;
}

/// Calls `f` with every full instantiation consistent with `ev`.
template <typename F>
void for_each_completion(const Network& net, const Evidence& ev, F&& f) {
  Instantiation x = Instantiation::from_evidence(net.size(), ev);
  std::vector<NodeIndex> free;
  for (NodeIndex i = 0; i < net.size(); ++i) {
    if (!ev.contains(i)) {
      free.push_back(i);
      x.set(i, 0);
    }
  }
  while (true) {
    f(static_cast<const Instantiation&>(x));
    std::size_t k = free.size();
    while (k > 0) {
      const NodeIndex i = free[k - 1];
      if (x[i] + 1 < net.variable(i).states.size()) {
        x.set(i, x[i] + 1);
        break;
      }
      x.set(i, 0);
      --k;
    }
    if (k == 0) return;
  }
}

/// Probability that `plan` produces the full instantiation `x`, obtained by
/// replaying the plan with `x`'s values instead of random draws.
inline double sampling_probability(const Network& net, const Evidence& ev, const SamplingPlan& plan,
                                   const Instantiation& x) {
  Instantiation partial = Instantiation::from_evidence(net.size(), ev);
  double q = 1.0;
  for (const auto& [node, mode] : plan.steps) {
    if (mode == StepMode::Forward) {
      q *= cpt_row(net, node, partial)[x[node]];
      partial.set(node, x[node]);
      continue;
    }
    if (!partial.has(node)) {
      q /= static_cast<double>(net.variable(node).states.size());
      partial.set(node, x[node]);
    }
    const NormEntry entry = compute_norm_entry(net, node, partial);
    if (entry.norm == 0.0) return 0.0;
    if (!entry.free_parents.empty()) {
      std::size_t code = 0;
      for (std::size_t k : entry.free_parents) {
        const NodeIndex p = net.variable(node).parents[k];
        code = code * net.variable(p).states.size() + x[p];
      }
      q *= entry.likelihoods[code] / entry.norm;
    }
    for (NodeIndex p : net.variable(node).parents) partial.set(p, x[p]);
  }
  return q;
}

}  // namespace backsim::testing
