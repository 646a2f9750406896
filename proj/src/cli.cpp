#include "backsim/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "backsim/estimator.hpp"
#include "backsim/exact.hpp"
#include "backsim/network.hpp"
#include "backsim/plan.hpp"
#include "backsim/simulator.hpp"
#include "json.hpp"

namespace backsim::cli {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kVersion = "backsim 1.0.0";

struct Options {
  std::string network;
  std::string evidence;
  std::string plan;
  std::string method = "backward";
  std::string methods = "forward,backward";
  std::uint64_t trials = 1000;
  std::size_t runs = 1;
  std::string checkpoints;
  std::uint64_t seed = 1;
  std::string out;
  std::string error_scope = "state-nodes";
  std::uint64_t max_joint_states = kDefaultMaxJointStates;
  std::size_t jobs = 1;
  bool log = false;
};

/// Thrown for a failed check that should end the command with `code`.
struct Exit {
  int code;
  std::string message;
};

Evidence load_evidence(const Network& net, const Options& opt) {
  if (opt.evidence.empty()) return {};
  return parse_evidence(net, read_text_file(opt.evidence));
}

SamplingPlan plan_for_method(const Network& net, const Evidence& ev, const std::string& method) {
  if (method == "backward") return default_plan(net, ev);
  if (method == "forward") return forward_plan(net, ev);
  throw Exit{kInputError, "unknown method '" + method + "' (expected backward or forward)"};
}

void require_valid_plan(const Network& net, const Evidence& ev, const SamplingPlan& plan) {
  auto violations = validate_plan(net, ev, plan);
  if (violations.empty()) return;
  std::string msg = "invalid plan:";
  for (const auto& v : violations) msg += "\n  [" + std::string(to_string(v.rule)) + "] " + v.message;
  throw Exit{kValidationFailure, msg};
}

ordered_json marginals_json(const Network& net, const std::vector<std::vector<double>>& marginals) {
  ordered_json out = ordered_json::object();
  for (NodeIndex i = 0; i < net.size(); ++i) {
    ordered_json node = ordered_json::object();
    for (StateIndex s = 0; s < marginals[i].size(); ++s) node[net.variable(i).states[s]] = marginals[i][s];
    out[net.variable(i).name] = std::move(node);
  }
  return out;
}

std::vector<std::uint64_t> parse_checkpoints(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const auto value = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(value);
    } catch (const std::exception&) {
      throw Exit{kInputError, "bad checkpoint '" + item + "'"};
    }
  }
  if (out.empty()) throw Exit{kInputError, "--checkpoints is empty"};
  return out;
}

int cmd_validate(const Options& opt, std::ostream& out) {
  Network net;
  try {
    net = parse_network(read_text_file(opt.network));
  } catch (const NetworkError& e) {
    for (const auto& v : e.violations()) out << "[" << to_string(v.kind) << "] " << v.message << "\n";
    return kValidationFailure;
  }
  out << "network: " << net.size() << " nodes, ok\n";
  if (opt.plan.empty()) return kOk;

  const Evidence ev = load_evidence(net, opt);
  const SamplingPlan plan = parse_plan(net, read_text_file(opt.plan));
  const auto violations = validate_plan(net, ev, plan);
  if (violations.empty()) {
    out << "plan: " << describe_plan(net, plan) << ", ok\n";
    return kOk;
  }
  for (const auto& v : violations) out << "[" << to_string(v.rule) << "] " << v.message << "\n";
  return kValidationFailure;
}

int cmd_exact(const Options& opt, std::ostream& out) {
  const Network net = parse_network(read_text_file(opt.network));
  const Evidence ev = load_evidence(net, opt);
  const PosteriorSummary post = exact_posteriors(net, ev, opt.max_joint_states);

  ordered_json doc;
  doc["evidence_probability"] = post.evidence_probability;
  if (post.impossible()) {
    doc["impossible"] = true;
    doc["marginals"] = nullptr;
    out << doc.dump(2) << "\n";
    return kNoSignal;
  }
  doc["marginals"] = marginals_json(net, post.marginals);
  out << doc.dump(2) << "\n";
  return kOk;
}

int cmd_simulate(const Options& opt, std::ostream& out) {
  const Network net = parse_network(read_text_file(opt.network));
  const Evidence ev = load_evidence(net, opt);
  const bool custom = !opt.plan.empty();
  const SamplingPlan plan = custom ? parse_plan(net, read_text_file(opt.plan)) : plan_for_method(net, ev, opt.method);
  require_valid_plan(net, ev, plan);

  RandomStream rng(opt.seed);
  NormCache cache;
  BeliefAccumulator acc(net);
  ordered_json trial_log = ordered_json::array();
  for (std::uint64_t t = 0; t < opt.trials; ++t) {
    const TrialResult r = run_trial(rng, net, ev, plan, cache);
    acc.add(r);
    if (!opt.log) continue;
    ordered_json entry;
    entry["trial"] = t;
    entry["weight"] = r.weight;
    entry["aborted"] = r.aborted;
    ordered_json state = ordered_json::object();
    for (NodeIndex i = 0; i < net.size(); ++i) {
      if (r.instantiation.has(i)) state[net.variable(i).name] = net.variable(i).states[r.instantiation[i]];
    }
    entry["instantiation"] = std::move(state);
    ordered_json draws = ordered_json::array();
    for (const auto& rec : r.log) {
      ordered_json d;
      d["step"] = rec.step;
      d["node"] = net.variable(rec.node).name;
      d["kind"] = rec.kind == DrawKind::Forward ? "forward" : rec.kind == DrawKind::Backward ? "backward" : "leaf-uniform";
      d["probability"] = rec.probability;
      if (rec.kind == DrawKind::Backward) d["norm"] = rec.norm;
      draws.push_back(std::move(d));
    }
    entry["draws"] = std::move(draws);
    trial_log.push_back(std::move(entry));
  }

  ordered_json doc;
  doc["method"] = custom ? "plan" : opt.method;
  doc["plan"] = describe_plan(net, plan);
  doc["trials"] = acc.trials();
  doc["seed"] = opt.seed;
  doc["total_weight"] = acc.total_weight();
  doc["aborted"] = acc.aborted();
  doc["evidence_estimate"] = acc.evidence_estimate();
  const auto b = beliefs(acc);
  doc["no_signal"] = !b.has_value();
  doc["beliefs"] = b ? marginals_json(net, *b) : ordered_json(nullptr);
  if (opt.log) doc["log"] = std::move(trial_log);
  out << doc.dump(2) << "\n";
  return b ? kOk : kNoSignal;
}

int cmd_experiment(const Options& opt, std::ostream& out) {
  ExperimentConfig cfg;
  cfg.network = parse_network(read_text_file(opt.network));
  cfg.evidence = load_evidence(cfg.network, opt);
  std::stringstream names(opt.methods);
  std::string name;
  while (std::getline(names, name, ',')) {
    if (name.empty()) continue;
    cfg.methods.push_back({name, plan_for_method(cfg.network, cfg.evidence, name)});
  }
  if (!opt.plan.empty()) {
    SamplingPlan plan = parse_plan(cfg.network, read_text_file(opt.plan));
    require_valid_plan(cfg.network, cfg.evidence, plan);
    cfg.methods.push_back({"plan", std::move(plan)});
  }
  if (cfg.methods.empty()) throw Exit{kInputError, "no methods selected"};
  cfg.runs = opt.runs;
  cfg.checkpoints = parse_checkpoints(opt.checkpoints);
  cfg.base_seed = opt.seed;
  cfg.scope = opt.error_scope == "all-nodes" ? ErrorScope::AllNodes : ErrorScope::StateNodes;
  cfg.max_joint_states = opt.max_joint_states;
  cfg.jobs = opt.jobs;
  try {
    check_config(cfg);
  } catch (const std::invalid_argument& e) {
    throw Exit{kInputError, e.what()};
  }
  out << error_report_csv(run_experiment(cfg));
  return kOk;
}

void add_common(CLI::App& sub, Options& opt, bool needs_evidence) {
  sub.add_option("--network", opt.network, "Network file")->required()->check(CLI::ExistingFile);
  auto* ev = sub.add_option("--evidence", opt.evidence, "Evidence file")->check(CLI::ExistingFile);
  if (needs_evidence) ev->required();
  sub.add_option("--out", opt.out, "Write output to this file instead of standard output");
}

void add_sampling(CLI::App& sub, Options& opt) {
  sub.add_option("--plan", opt.plan, "Sampling plan file")->check(CLI::ExistingFile);
  sub.add_option("--seed", opt.seed, "Random seed");
  sub.add_option("--max-joint-states", opt.max_joint_states, "Exact-inference state-space limit");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options opt;
  CLI::App app{"Backward simulation and likelihood weighting for discrete Bayesian networks", "backsim"};
  app.require_subcommand(0, 1);
  bool version = false;
  app.add_flag("--version", version, "Print version to standard error");

  auto* validate = app.add_subcommand("validate", "Check a network and optionally a sampling plan");
  add_common(*validate, opt, false);
  validate->add_option("--plan", opt.plan, "Sampling plan file")->check(CLI::ExistingFile);

  auto* exact = app.add_subcommand("exact", "Exact posteriors by enumeration");
  add_common(*exact, opt, false);
  exact->add_option("--max-joint-states", opt.max_joint_states, "Exact-inference state-space limit");

  auto* simulate = app.add_subcommand("simulate", "Run one simulation and print beliefs");
  add_common(*simulate, opt, false);
  add_sampling(*simulate, opt);
  simulate->add_option("--method", opt.method, "backward or forward")->check(CLI::IsMember({"backward", "forward"}));
  simulate->add_option("--trials", opt.trials, "Number of trials");
  simulate->add_flag("--log", opt.log, "Include every trial's draws and weight");

  auto* experiment = app.add_subcommand("experiment", "Error-versus-trials comparison over many runs");
  add_common(*experiment, opt, false);
  add_sampling(*experiment, opt);
  experiment->add_option("--methods", opt.methods, "Comma-separated methods (backward, forward)");
  experiment->add_option("--runs", opt.runs, "Independent runs per method")->check(CLI::PositiveNumber);
  experiment->add_option("--checkpoints", opt.checkpoints, "Comma-separated ascending trial counts")->required();
  experiment->add_option("--error-scope", opt.error_scope, "state-nodes or all-nodes")
      ->check(CLI::IsMember({"state-nodes", "all-nodes"}));
  experiment->add_option("--jobs", opt.jobs, "Worker threads")->check(CLI::PositiveNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
  if (version) {
    err << kVersion << "\n";
    if (app.get_subcommands().empty()) return kOk;
  }
  if (app.get_subcommands().empty()) {
    err << app.help();
    return kInputError;
  }

  std::ostringstream buffer;
  int code = kOk;
  try {
    if (validate->parsed()) code = cmd_validate(opt, buffer);
    if (exact->parsed()) code = cmd_exact(opt, buffer);
    if (simulate->parsed()) code = cmd_simulate(opt, buffer);
    if (experiment->parsed()) code = cmd_experiment(opt, buffer);
  } catch (const Exit& e) {
    err << "error: " << e.message << "\n";
    return e.code;
  } catch (const GuardExceeded& e) {
    err << "error: " << e.what() << "\n";
    return kGuardExceeded;
  } catch (const ImpossibleEvidence& e) {
    err << "error: " << e.what() << "\n";
    return kNoSignal;
  } catch (const NetworkError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  if (opt.out.empty()) {
    out << buffer.str();
  } else {
    std::ofstream file(opt.out, std::ios::binary);
    if (!file || !(file << buffer.str())) {
      err << "error: cannot write '" << opt.out << "'\n";
      return kInputError;
    }
  }
  return code;
}

}  // namespace backsim::cli
