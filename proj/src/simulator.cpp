#include "backsim/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>

namespace backsim {

std::size_t NormKeyHash::operator()(const NormKey& k) const noexcept {
  std::uint64_t h = mix64(k.node);
  h = mix64(h ^ k.state);
  h = mix64(h ^ k.split);
  return static_cast<std::size_t>(mix64(h ^ k.instantiated_code));
}

NormKey make_norm_key(const Network& net, NodeIndex node, const Instantiation& x) {
  const Variable& v = net.variable(node);
  NormKey key{node, x.at(node), 0, 0};
  for (std::size_t k = 0; k < v.parents.size(); ++k) {
    const NodeIndex p = v.parents[k];
    if (!x.has(p)) continue;
    key.split |= std::uint64_t{1} << k;
    key.instantiated_code = key.instantiated_code * net.variable(p).states.size() + x[p];
  }
  return key;
}

NormEntry compute_norm_entry(const Network& net, NodeIndex node, const Instantiation& x) {
  const Variable& v = net.variable(node);
  const StateIndex state = x.at(node);

  NormEntry entry;
  std::vector<StateIndex> parent_states(v.parents.size(), 0);
  std::size_t configurations = 1;
  for (std::size_t k = 0; k < v.parents.size(); ++k) {
    const NodeIndex p = v.parents[k];
    if (x.has(p)) {
      parent_states[k] = x[p];
    } else {
      entry.free_parents.push_back(k);
      configurations *= net.variable(p).states.size();
    }
  }

  entry.likelihoods.reserve(configurations);
  for (std::size_t c = 0; c < configurations; ++c) {
    std::size_t rest = c;
    for (std::size_t f = entry.free_parents.size(); f-- > 0;) {
      const std::size_t k = entry.free_parents[f];
      const std::size_t radix = net.variable(v.parents[k]).states.size();
      parent_states[k] = rest % radix;
      rest /= radix;
    }
    const double likelihood = v.cpt[cpt_row_index(net, node, parent_states)][state];
    entry.likelihoods.push_back(likelihood);
    entry.norm += likelihood;
  }
  return entry;
}

const NormEntry& NormCache::get(const Network& net, NodeIndex node, const Instantiation& x) {
  const NormKey key = make_norm_key(net, node, x);
  {
    std::shared_lock lock(mutex_);
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  }
  NormEntry fresh = compute_norm_entry(net, node, x);
  std::unique_lock lock(mutex_);
  return entries_.try_emplace(key, std::move(fresh)).first->second;
}

std::size_t NormCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

double norm_constant(const Network& net, NodeIndex node, const Instantiation& x, NormCache& cache) {
  return cache.get(net, node, x).norm;
}

std::size_t sample_index(double u, std::span<const double> weights, double total) {
  const double target = u * total;
  double cumulative = 0.0;
  std::size_t last_positive = weights.size();
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    last_positive = k;
    cumulative += weights[k];
    if (target < cumulative) return k;
  }
  // Rounding can leave target just above the final partial sum.
  return last_positive;
}

BackwardDraw backward_step(UniformSource& rng, const Network& net, NodeIndex node, Instantiation& x,
                           NormCache& cache) {
  const NormEntry& entry = cache.get(net, node, x);
  BackwardDraw draw;
  draw.norm = entry.norm;
  if (entry.norm == 0.0) {
    draw.aborted = true;
    return draw;
  }
  if (entry.free_parents.empty()) return draw;

  const std::size_t c = sample_index(rng.next_uniform(), entry.likelihoods, entry.norm);
  draw.drew = true;
  draw.outcome = c;
  draw.probability = entry.likelihoods[c] / entry.norm;

  const Variable& v = net.variable(node);
  std::size_t rest = c;
  for (std::size_t f = entry.free_parents.size(); f-- > 0;) {
    const NodeIndex p = v.parents[entry.free_parents[f]];
    const std::size_t radix = net.variable(p).states.size();
    x.set(p, rest % radix);
    rest /= radix;
  }
  return draw;
}

ForwardDraw forward_step(UniformSource& rng, const Network& net, NodeIndex node, Instantiation& x) {
  const auto row = cpt_row(net, node, x);
  double total = 0.0;
  for (double p : row) total += p;
  const StateIndex s = sample_index(rng.next_uniform(), row, total);
  x.set(node, s);
  return {s, row[s]};
}

TrialResult run_trial(UniformSource& rng, const Network& net, const Evidence& ev, const SamplingPlan& plan,
                      NormCache& cache) {
  const std::size_t n = net.size();
  TrialResult result;
  result.instantiation = Instantiation::from_evidence(n, ev);
  Instantiation& x = result.instantiation;

  // Weight factors are kept per node and multiplied in node order at the end,
  // so plans that differ only in where a factor is accounted for give
  // bit-identical weights.
  std::vector<double> factor(n, 1.0);
  std::vector<bool> sampled(n, false);

  for (std::size_t s = 0; s < plan.steps.size(); ++s) {
    const auto [node, mode] = plan.steps[s];
    sampled[node] = true;

    if (mode == StepMode::Forward) {
      if (x.has(node)) throw std::logic_error("run_trial: forward step on an instantiated node");
      const ForwardDraw draw = forward_step(rng, net, node, x);
      result.log.push_back({s, node, DrawKind::Forward, draw.state, draw.probability, 0.0});
      continue;
    }

    if (!x.has(node)) {
      if (!net.is_leaf(node)) throw std::logic_error("run_trial: backward step on an uninstantiated inner node");
      // Dummy child with uniform likelihood: the leaf's state is drawn
      // uniformly and the dummy's normalization constant is the state count.
      const std::size_t k = net.variable(node).states.size();
      const auto s_leaf = std::min<std::size_t>(k - 1, static_cast<std::size_t>(rng.next_uniform() * k));
      x.set(node, s_leaf);
      factor[node] *= static_cast<double>(k);
      result.log.push_back({s, node, DrawKind::LeafUniform, s_leaf, 1.0 / static_cast<double>(k), 0.0});
    }

    const BackwardDraw draw = backward_step(rng, net, node, x, cache);
    if (draw.aborted) {
      result.weight = 0.0;
      result.aborted = true;
      return result;
    }
    factor[node] *= draw.norm;
    result.log.push_back({s, node, DrawKind::Backward, draw.outcome, draw.probability, draw.norm});
  }

  for (NodeIndex i = 0; i < n; ++i) {
    if (!sampled[i]) factor[i] = cpt_row(net, i, x)[x.at(i)];
  }
  double z = 1.0;
  for (double f : factor) z *= f;
  result.weight = z;
  return result;
}

namespace {

// Norm(node) by scanning every CPT row and keeping those consistent with the
// instantiated parents; independent of compute_norm_entry's enumeration.
double norm_by_row_scan(const Network& net, NodeIndex node, const Instantiation& x,
                        const std::vector<bool>& instantiated) {
  const Variable& v = net.variable(node);
  double norm = 0.0;
  for (std::size_t row = 0; row < v.cpt.size(); ++row) {
    std::size_t rest = row;
    bool consistent = true;
    for (std::size_t k = v.parents.size(); k-- > 0;) {
      const NodeIndex p = v.parents[k];
      const std::size_t radix = net.variable(p).states.size();
      if (instantiated[p] && rest % radix != x[p]) consistent = false;
      rest /= radix;
    }
    if (consistent) norm += v.cpt[row][x[node]];
  }
  return norm;
}

bool close(double a, double b, double rel_tol) {
  if (a == b) return true;
  return std::abs(a - b) <= rel_tol * std::max(std::abs(a), std::abs(b));
}

}  // namespace

WeightCheck verify_weight(const Network& net, const Evidence& ev, const SamplingPlan& plan,
                          const TrialResult& result, double rel_tol) {
  if (result.aborted) throw std::invalid_argument("verify_weight: trial was aborted");
  const Instantiation& x = result.instantiation;
  if (!x.is_full()) throw std::invalid_argument("verify_weight: instantiation is not full");

  const std::size_t n = net.size();
  std::vector<bool> instantiated(n, false);
  for (const auto& [node, _] : ev.assignments) instantiated[node] = true;
  std::vector<bool> sampled(n, false);

  WeightCheck check;
  double z = 1.0;
  for (const auto& [node, mode] : plan.steps) {
    sampled[node] = true;
    if (mode == StepMode::Forward) {
      instantiated[node] = true;
      continue;
    }
    if (!instantiated[node]) {
      z *= static_cast<double>(net.variable(node).states.size());
      instantiated[node] = true;
    }
    z *= norm_by_row_scan(net, node, x, instantiated);
    for (NodeIndex p : net.variable(node).parents) instantiated[p] = true;
  }
  for (NodeIndex i = 0; i < n; ++i) {
    if (!sampled[i]) z *= cpt_row(net, i, x)[x[i]];
  }
  check.from_factors = z;

  double sampling_probability = 1.0;
  for (const auto& rec : result.log) sampling_probability *= rec.probability;
  check.from_ratio = joint_probability(net, x) / sampling_probability;

  check.ok = close(check.from_factors, result.weight, rel_tol) && close(check.from_ratio, result.weight, rel_tol);
  if (!check.ok) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "weight mismatch: recorded " << result.weight << ", factors " << check.from_factors << ", ratio "
        << check.from_ratio;
    check.message = msg.str();
  }
  return check;
}

}  // namespace backsim
