#include "backsim/estimator.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <sstream>
#include <thread>

#include "backsim/random.hpp"

namespace backsim {

BeliefAccumulator::BeliefAccumulator(const Network& net) {
  cells_.resize(net.size());
  for (NodeIndex i = 0; i < net.size(); ++i) cells_[i].assign(net.variable(i).states.size(), 0.0);
}

void BeliefAccumulator::add(const TrialResult& trial) {
  ++trials_;
  if (trial.aborted) {
    ++aborted_;
    return;
  }
  const double z = trial.weight;
  for (NodeIndex i = 0; i < cells_.size(); ++i) cells_[i][trial.instantiation[i]] += z;
  total_weight_ += z;
  total_weight_sq_ += z * z;
}

void BeliefAccumulator::merge(const BeliefAccumulator& other) {
  if (cells_.empty()) cells_ = std::vector<std::vector<double>>(other.cells_.size());
  for (NodeIndex i = 0; i < other.cells_.size(); ++i) {
    if (cells_[i].empty()) cells_[i].assign(other.cells_[i].size(), 0.0);
    for (std::size_t s = 0; s < other.cells_[i].size(); ++s) cells_[i][s] += other.cells_[i][s];
  }
  total_weight_ += other.total_weight_;
  total_weight_sq_ += other.total_weight_sq_;
  trials_ += other.trials_;
  aborted_ += other.aborted_;
}

double BeliefAccumulator::evidence_estimate() const {
  return trials_ == 0 ? 0.0 : total_weight_ / static_cast<double>(trials_);
}

double BeliefAccumulator::evidence_standard_error() const {
  if (trials_ < 2) return 0.0;
  const auto m = static_cast<double>(trials_);
  const double mean = total_weight_ / m;
  const double variance = std::max(0.0, (total_weight_sq_ - m * mean * mean) / (m - 1.0));
  return std::sqrt(variance / m);
}

std::optional<Beliefs> beliefs(const BeliefAccumulator& acc) {
  if (acc.total_weight() <= 0.0) return std::nullopt;
  Beliefs out = acc.cells();
  for (auto& row : out) {
    for (double& p : row) p /= acc.total_weight();
  }
  return out;
}

std::vector<NodeIndex> error_scope_nodes(const Network& net, const Evidence& ev, ErrorScope scope) {
  std::vector<NodeIndex> nodes;
  for (NodeIndex i = 0; i < net.size(); ++i) {
    if (scope == ErrorScope::AllNodes || !ev.contains(i)) nodes.push_back(i);
  }
  return nodes;
}

double error_l1(const Beliefs& estimate, const PosteriorSummary& reference, const std::vector<NodeIndex>& scope) {
  double error = 0.0;
  for (NodeIndex i : scope) {
    const auto& b = estimate.at(i);
    const auto& p = reference.marginals.at(i);
    for (std::size_t s = 0; s < p.size(); ++s) error += std::abs(b.at(s) - p[s]);
  }
  return error;
}

double no_signal_error(const PosteriorSummary& reference, const std::vector<NodeIndex>& scope) {
  double error = 0.0;
  for (NodeIndex i : scope) {
    for (double p : reference.marginals.at(i)) error += p;
  }
  return error;
}

void check_config(const ExperimentConfig& cfg) {
  if (cfg.runs == 0) throw std::invalid_argument("experiment: runs must be at least 1");
  if (cfg.methods.empty()) throw std::invalid_argument("experiment: no methods");
  if (cfg.checkpoints.empty()) throw std::invalid_argument("experiment: no checkpoints");
  if (cfg.checkpoints.front() == 0) throw std::invalid_argument("experiment: checkpoints must be positive");
  for (std::size_t k = 1; k < cfg.checkpoints.size(); ++k) {
    if (cfg.checkpoints[k] <= cfg.checkpoints[k - 1]) {
      throw std::invalid_argument("experiment: checkpoints must be strictly ascending");
    }
  }
  check_evidence(cfg.network, cfg.evidence);
  for (const auto& m : cfg.methods) {
    auto violations = validate_plan(cfg.network, cfg.evidence, m.plan);
    if (!violations.empty()) {
      throw std::invalid_argument("experiment: plan for method '" + m.name + "' is invalid: " +
                                  violations.front().message);
    }
  }
}

namespace {

struct RunOutcome {
  std::vector<double> errors;
  std::vector<double> evidence_estimates;
  std::vector<bool> no_signal;
};

RunOutcome simulate_run(const ExperimentConfig& cfg, const SamplingPlan& plan, std::uint64_t seed,
                        const PosteriorSummary& reference, const std::vector<NodeIndex>& scope, NormCache& cache) {
  RandomStream rng(seed);
  BeliefAccumulator acc(cfg.network);
  RunOutcome out;
  std::uint64_t done = 0;
  for (std::uint64_t checkpoint : cfg.checkpoints) {
    for (; done < checkpoint; ++done) acc.add(run_trial(rng, cfg.network, cfg.evidence, plan, cache));
    const auto b = beliefs(acc);
    out.errors.push_back(b ? error_l1(*b, reference, scope) : no_signal_error(reference, scope));
    out.no_signal.push_back(!b.has_value());
    out.evidence_estimates.push_back(acc.evidence_estimate());
  }
  return out;
}

}  // namespace

ErrorReport run_experiment(const ExperimentConfig& cfg) {
  check_config(cfg);
  ErrorReport report;
  report.reference = exact_posteriors(cfg.network, cfg.evidence, cfg.max_joint_states);
  if (report.reference.impossible()) throw ImpossibleEvidence();
  const auto scope = error_scope_nodes(cfg.network, cfg.evidence, cfg.scope);

  const std::size_t tasks = cfg.methods.size() * cfg.runs;
  std::vector<RunOutcome> outcomes(tasks);
  NormCache cache;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks; t = next++) {
      const std::size_t m = t / cfg.runs;
      const std::size_t k = t % cfg.runs;
      outcomes[t] = simulate_run(cfg, cfg.methods[m].plan, derive_run_seed(cfg.base_seed, m, k), report.reference,
                                 scope, cache);
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(cfg.jobs, 1, tasks);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }

  const auto runs = static_cast<double>(cfg.runs);
  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    MethodReport mr;
    mr.name = cfg.methods[m].name;
    for (std::size_t k = 0; k < cfg.runs; ++k) mr.per_run_errors.push_back(outcomes[m * cfg.runs + k].errors);
    for (std::size_t c = 0; c < cfg.checkpoints.size(); ++c) {
      CheckpointStats st;
      st.trials = cfg.checkpoints[c];
      st.runs = cfg.runs;
      double sum = 0.0;
      double evidence_sum = 0.0;
      for (std::size_t k = 0; k < cfg.runs; ++k) {
        const RunOutcome& o = outcomes[m * cfg.runs + k];
        sum += o.errors[c];
        evidence_sum += o.evidence_estimates[c];
        st.no_signal_runs += o.no_signal[c] ? 1 : 0;
      }
      st.mean_error = sum / runs;
      st.mean_evidence_estimate = evidence_sum / runs;
      double squares = 0.0;
      for (std::size_t k = 0; k < cfg.runs; ++k) {
        const double d = outcomes[m * cfg.runs + k].errors[c] - st.mean_error;
        squares += d * d;
      }
      st.stddev_error = std::sqrt(squares / runs);
      mr.checkpoints.push_back(st);
    }
    report.methods.push_back(std::move(mr));
  }
  return report;
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

std::string error_report_csv(const ErrorReport& report) {
  std::ostringstream out;
  out << "method,trials,runs,mean_error,stddev_error\n";
  for (const auto& m : report.methods) {
    for (const auto& c : m.checkpoints) {
      out << m.name << ',' << c.trials << ',' << c.runs << ',' << format_double(c.mean_error) << ','
          << format_double(c.stddev_error) << '\n';
    }
  }
  return out.str();
}

}  // namespace backsim
