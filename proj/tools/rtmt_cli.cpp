#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "rtmt/rtmt.hpp"

using namespace rtmt;

namespace {

enum ExitCode { kOk = 0, kFail = 1, kUsage = 2, kBudget = 3 };

struct Options {
  std::string instance;
  std::string policy;
  std::string out;
  std::string format = "table";
  std::uint64_t seed = 1;
  std::int64_t samples = 10000;
  int workers = 1;
  double max_strategies = 1e7;
  double max_atoms = kDefaultAtomBudget;
  double max_actions = kDefaultActionBudget;
};

Json budgets_json(const Options& o) {
  return {{"max_strategies", o.max_strategies}, {"max_atoms", o.max_atoms}, {"max_actions", o.max_actions}, {"workers", o.workers}};
}

SearchBudget search_budget(const Options& o) {
  SearchBudget b;
  b.max_strategies = o.max_strategies;
  b.max_atoms_per_eval = o.max_atoms;
  b.workers = o.workers;
  return b;
}

ExactOptions exact_options(const Options& o) {
  ExactOptions e;
  e.atom_budget = o.max_atoms;
  return e;
}

// ---------------------------------------------------------------- output

std::string scalar_text(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

bool flat_array(const Json& v) {
  if (!v.is_array()) return false;
  for (const auto& e : v) {
    if (e.is_object() || e.is_array()) return false;
  }
  return true;
}

void table_rows(const Json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& rows) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) table_rows(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), rows);
  } else if (j.is_array() && !flat_array(j)) {
    for (std::size_t k = 0; k < j.size(); ++k) table_rows(j[k], prefix + "[" + std::to_string(k) + "]", rows);
  } else {
    rows.emplace_back(prefix, scalar_text(j));
  }
}

std::string render_table(const Json& report) {
  std::vector<std::pair<std::string, std::string>> rows;
  table_rows(report, "", rows);
  std::size_t width = 5;
  for (const auto& [k, v] : rows) width = std::max(width, k.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "field" << "  value\n";
  os << std::string(width, '-') << "  " << std::string(24, '-') << '\n';
  for (const auto& [k, v] : rows) os << std::left << std::setw(static_cast<int>(width)) << k << "  " << v << '\n';
  return os.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw SchemaError(path + ": cannot write file");
  f << text;
}

// The report goes to stdout in the chosen format; --out also writes it as
// JSON (CSV when --format csv).
void emit(const Options& o, const Json& report) {
  if (o.format == "json") std::cout << dump_json(report);
  else if (o.format == "csv") std::cout << dump_csv(report);
  else std::cout << render_table(report);
  if (!o.out.empty()) write_file(o.out, o.format == "csv" ? dump_csv(report) : dump_json(report));
}

// --------------------------------------------------------------- helpers

Assembly load_or_draw(const Instance& in, const Options& o) {
  if (!o.policy.empty()) return load_assembly(in, o.policy);
  require_valid(in);
  std::mt19937_64 rng(o.seed);
  Assembly as;
  as.instance = in;
  for (int i = 0; i < in.n(); ++i) as.encoders.emplace_back(random_general_encoder(in, i, rng));
  if (!in.perfect_memory()) {
    std::vector<std::vector<IntTable>> rules;
    for (int i = 0; i < in.n(); ++i) rules.push_back(random_memory_rules(in, i, rng));
    as.memory_rules = rules;
  }
  return as;
}

EncoderClass parse_class(const std::string& s) {
  if (s == "general") return EncoderClass::general;
  if (s == "structured") return EncoderClass::structured;
  return EncoderClass::belief_history;
}

// ------------------------------------------------------------- commands

int cmd_validate(const Options& o) {
  const Instance in = load_instance(o.instance);
  const auto rep = validate(in);
  Json report = report_header("validate", in, o.seed, budgets_json(o));
  Json violations = Json::array();
  for (const auto& v : rep.violations) violations.push_back({{"path", v.path}, {"message", v.message}});
  report["result"] = {{"valid", rep.ok()}, {"violations", violations}};
  emit(o, report);
  if (!rep.ok()) {
    std::cerr << "invalid instance:\n" << rep.to_string();
    return kUsage;
  }
  return kOk;
}

int cmd_exact(const Options& o) {
  const Instance in = load_instance(o.instance);
  const Assembly as = load_assembly(in, o.policy);
  Json report = report_header("exact", in, o.seed, budgets_json(o));
  report["result"] = to_json(expected_distortion_exact(as, exact_options(o)));
  emit(o, report);
  return kOk;
}

int cmd_mc(const Options& o, bool compare) {
  const Instance in = load_instance(o.instance);
  const Assembly as = load_assembly(in, o.policy);
  MonteCarloOptions mo;
  mo.samples = o.samples;
  mo.seed = o.seed;
  mo.workers = o.workers;
  mo.atom_budget = o.max_atoms;
  const auto rep = simulate_mc(as, mo);
  Json report = report_header("mc", in, o.seed, budgets_json(o));
  report["result"] = to_json(rep);
  if (compare) {
    const double exact = expected_distortion_exact(as, exact_options(o)).total;
    const double gap = std::abs(rep.mean - exact);
    report["comparison"] = {{"exact", exact}, {"mc_mean", rep.mean}, {"gap", gap}, {"std_errors", rep.std_error > 0.0 ? gap / rep.std_error : 0.0}};
  }
  emit(o, report);
  return kOk;
}

int cmd_brute(const Options& o, const std::string& cls, const std::string& witness_path) {
  const Instance in = load_instance(o.instance);
  const auto g = optimum_over_class(in, parse_class(cls), search_budget(o));
  Json report = report_header("brute", in, o.seed, budgets_json(o));
  report["result"] = {{"class", cls}, {"cost", g.cost}, {"strategies", g.strategies}, {"evaluated", g.evaluated}};
  if (!witness_path.empty()) write_file(witness_path, dump_json(assembly_policies_to_json(g.witness)));
  emit(o, report);
  return kOk;
}

struct VerifySelection {
  bool theorem1 = false;
  bool theorem2 = false;
  bool lemma3 = false;
  bool randomization = false;
  int mixtures = 50;
  int encoder = 0;
};

int cmd_verify(const Options& o, VerifySelection sel) {
  const Instance in = load_instance(o.instance);
  require_valid(in);
  if (!sel.theorem1 && !sel.theorem2 && !sel.lemma3 && !sel.randomization) {
    sel.theorem1 = sel.theorem2 = sel.lemma3 = sel.randomization = true;
  }
  Json report = report_header("verify", in, o.seed, budgets_json(o));
  Json result = Json::object();
  bool pass = true;
  if (sel.theorem1) {
    const auto r = verify_theorem1(in, search_budget(o));
    result["theorem1"] = to_json(r);
    pass = pass && r.pass;
  }
  if (sel.theorem2 || sel.lemma3) {
    const Assembly as = load_or_draw(in, o);
    if (sel.theorem2) {
      const auto r = verify_theorem2(as, search_budget(o));
      result["theorem2"] = to_json(r);
      pass = pass && r.pass;
    }
    if (sel.lemma3) {
      const int i = sel.encoder;
      if (i < 0 || i >= in.n()) throw SchemaError("--encoder out of range");
      const HistoryTree tree(in, i);
      const std::vector<IntTable>* rules = as.memory_rules ? &(*as.memory_rules)[static_cast<std::size_t>(i)] : nullptr;
      const auto schedule = memory_schedule(in, i, std::max(in.horizon() - 1, 0), rules);
      Json parts = Json::array();
      for (const auto& [enc, w] : as.encoders[static_cast<std::size_t>(i)].components) {
        const auto r = verify_lemma3_markov(in, i, tree, compile_encoder(enc, in, tree, schedule), schedule);
        parts.push_back(to_json(r));
        pass = pass && r.pass;
      }
      result["lemma3"] = {{"encoder", i}, {"components", parts}};
    }
  }
  if (sel.randomization) {
    const auto r = verify_no_randomization_gain(in, sel.mixtures, o.seed, search_budget(o));
    result["no_randomization"] = to_json(r);
    pass = pass && r.pass;
  }
  result["pass"] = pass;
  report["result"] = result;
  emit(o, report);
  std::cerr << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kOk : kFail;
}

struct DpSelection {
  int focus = 0;
  int grid = 0;
  int sweeps = 0;
  std::string policy_out;
  std::string graph_out;
};

int cmd_dp(const Options& o, const DpSelection& sel) {
  const Instance in = load_instance(o.instance);
  const int focus = sel.focus;
  if (focus < 0 || focus > 1) throw SchemaError("--focus must be 0 or 1");
  require_p2(in, focus);
  Assembly base;
  base.instance = in;
  if (!o.policy.empty()) {
    base = load_assembly(in, o.policy);
  } else {
    base.encoders = {EncoderPolicy(ConstantEncoder{0}), EncoderPolicy(ConstantEncoder{0})};
  }
  const auto& other_policy = base.encoders.at(static_cast<std::size_t>(1 - focus));
  if (!other_policy.deterministic()) throw SchemaError("the other encoder must be deterministic for the coordinator program");
  const auto other = fix_other_encoder(in, focus, other_policy.components.front().first);
  const auto sol = solve_coordinator(in, focus, other, o.max_actions, sel.grid);

  Assembly extracted = base;
  extracted.encoders[static_cast<std::size_t>(focus)] = EncoderPolicy(sol.encoder);
  extracted.decoder = Decoder::tau();
  const double exact = expected_distortion_exact(extracted, exact_options(o)).total;

  Json states = Json::array();
  for (const auto& st : sol.graph.stages) states.push_back(st.size());
  Json result = {{"focus", focus},
                 {"grid", sel.grid},
                 {"v0", sol.values.v0},
                 {"states_per_stage", states},
                 {"actions", sol.graph.action_count},
                 {"beliefs", sol.graph.beliefs.size()},
                 {"extracted_exact", exact},
                 {"extracted_gap", std::abs(exact - sol.values.v0)}};
  bool pass = sel.grid != 0 || std::abs(exact - sol.values.v0) <= 1e-12;

  const HistoryTree tree(in, focus);
  const double count = general_strategy_count(tree, in.z_size(focus));
  if (count <= o.max_strategies) {
    const double brute = brute_force_response(in, focus, other, false, o.max_strategies);
    const double gap = std::abs(brute - sol.values.v0);
    result["cross_check"] = {{"status", "done"}, {"strategies", count}, {"brute", brute}, {"v0", sol.values.v0}, {"gap", gap}};
    if (sel.grid == 0) pass = pass && gap <= kGapTolerance;
  } else {
    result["cross_check"] = {{"status", "skipped"}, {"strategies", count}, {"limit", o.max_strategies}};
  }
  if (sel.sweeps > 0) {
    const auto br = alternating_best_response(in, extracted.encoders[0].components.front().first,
                                              extracted.encoders[1].components.front().first, sel.sweeps, o.max_actions);
    Json steps = Json::array();
    for (const auto& s : br.steps) steps.push_back({{"focus", s.focus}, {"value", s.value}});
    result["best_response"] = {{"heuristic", true}, {"steps", steps}, {"cost", br.cost}};
  }
  result["pass"] = pass;
  if (!sel.policy_out.empty()) write_file(sel.policy_out, dump_json(assembly_policies_to_json(extracted)));
  if (!sel.graph_out.empty()) write_file(sel.graph_out, dump_json(graph_to_json(sol.graph)));
  Json report = report_header("dp", in, o.seed, budgets_json(o));
  report["result"] = result;
  emit(o, report);
  return pass ? kOk : kFail;
}

int cmd_trace(const Options& o) {
  const Instance in = load_instance(o.instance);
  const Assembly as = load_assembly(in, o.policy);
  Json report = report_header("trace", in, o.seed, budgets_json(o));
  report["result"] = to_json(trace_rollout(as, o.seed, exact_options(o)));
  emit(o, report);
  return kOk;
}

int cmd_generate(const Options& o, const RandomInstanceOptions& ro) {
  const Instance in = random_instance(ro, o.seed);
  require_valid(in);
  const std::string text = dump_json(to_json(in));
  if (o.out.empty()) std::cout << text;
  else write_file(o.out, text);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact analysis of real-time multi-terminal coding systems"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool instance, bool policy_required) {
    if (instance) sub->add_option("instance", o.instance, "Instance JSON")->required()->check(CLI::ExistingFile);
    auto* p = sub->add_option("--policy", o.policy, "Policy JSON (encoders, decoder, memory rules)")->check(CLI::ExistingFile);
    if (policy_required) p->required();
    sub->add_option("--format", o.format, "Standard output format")->check(CLI::IsMember({"table", "json", "csv"}));
    sub->add_option("--out", o.out, "Also write the report to this file");
    sub->add_option("--seed", o.seed, "Random seed");
    sub->add_option("--workers", o.workers, "Worker threads (results do not depend on it)")->check(CLI::Range(1, 256));
    sub->add_option("--max-strategies", o.max_strategies, "Budget on enumerated strategies");
    sub->add_option("--max-atoms", o.max_atoms, "Budget on joint atoms per exact evaluation");
    sub->add_option("--max-actions", o.max_actions, "Budget on coordinator actions");
  };

  auto* validate_cmd = app.add_subcommand("validate", "Check an instance");
  add_common(validate_cmd, true, false);
  auto* exact_cmd = app.add_subcommand("exact", "Exact expected distortion of a policy");
  add_common(exact_cmd, true, true);
  auto* mc_cmd = app.add_subcommand("mc", "Monte Carlo estimate of the expected distortion");
  add_common(mc_cmd, true, true);
  mc_cmd->add_option("--samples", o.samples, "Sample paths")->check(CLI::PositiveNumber);
  bool compare = false;
  mc_cmd->add_flag("--compare-exact", compare, "Report the gap to the exact cost");
  auto* brute_cmd = app.add_subcommand("brute", "Global optimum by enumeration");
  add_common(brute_cmd, true, false);
  std::string cls = "general", witness;
  brute_cmd->add_option("--class", cls, "Encoder class")->check(CLI::IsMember({"general", "structured", "belief_history"}));
  brute_cmd->add_option("--witness", witness, "Write the optimal policy here");
  auto* verify_cmd = app.add_subcommand("verify", "Run the structural checks (all when none is selected)");
  add_common(verify_cmd, true, false);
  VerifySelection vs;
  verify_cmd->add_flag("--theorem1", vs.theorem1, "Structured encoders lose nothing");
  verify_cmd->add_flag("--theorem2", vs.theorem2, "The tau decoder is optimal for the policy");
  verify_cmd->add_flag("--lemma3", vs.lemma3, "Encoder state is a controlled Markov chain");
  verify_cmd->add_flag("--no-randomization", vs.randomization, "Mixtures of encoder-1 tables do not help");
  verify_cmd->add_option("--mixtures", vs.mixtures, "Random mixtures to try")->check(CLI::PositiveNumber);
  verify_cmd->add_option("--encoder", vs.encoder, "Encoder for the Markov check");
  auto* dp_cmd = app.add_subcommand("dp", "Coordinator program for one encoder, the other fixed");
  add_common(dp_cmd, true, false);
  DpSelection ds;
  dp_cmd->add_option("--focus", ds.focus, "Encoder to optimize (0 or 1)");
  dp_cmd->add_option("--grid", ds.grid, "Project binary a-beliefs onto k/grid (0: exact)")->check(CLI::NonNegativeNumber);
  dp_cmd->add_option("--sweeps", ds.sweeps, "Alternating best-response sweeps (heuristic)")->check(CLI::NonNegativeNumber);
  dp_cmd->add_option("--out-policy", ds.policy_out, "Write the policy with the extracted encoder here");
  dp_cmd->add_option("--graph", ds.graph_out, "Write the information-state graph here");
  auto* trace_cmd = app.add_subcommand("trace", "Dump one sampled path with every belief");
  add_common(trace_cmd, true, true);
  auto* gen_cmd = app.add_subcommand("generate", "Write a random valid instance");
  add_common(gen_cmd, false, false);
  RandomInstanceOptions ro;
  gen_cmd->add_option("--encoders", ro.n, "Number of encoders")->check(CLI::Range(1, 8));
  gen_cmd->add_option("--horizon", ro.horizon, "Horizon")->check(CLI::Range(1, 16));
  gen_cmd->add_option("--max-x", ro.max_x, "Largest observation alphabet");
  gen_cmd->add_option("--max-a", ro.max_a, "Largest A alphabet");
  gen_cmd->add_option("--max-z", ro.max_z, "Largest symbol alphabet");
  gen_cmd->add_option("--max-y", ro.max_y, "Largest channel output alphabet");
  gen_cmd->add_option("--max-m", ro.max_m, "Largest memory alphabet");
  gen_cmd->add_option("--max-estimate", ro.max_estimate, "Largest estimate alphabet");
  gen_cmd->add_flag("--fixed-sizes", ro.fixed_sizes, "Use the largest sizes exactly");
  gen_cmd->add_flag("--perfect", ro.perfect, "Noiseless channels and a perfect-memory receiver");
  gen_cmd->add_flag("--noiseless", ro.noiseless, "Noiseless channels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*validate_cmd) return cmd_validate(o);
    if (*exact_cmd) return cmd_exact(o);
    if (*mc_cmd) return cmd_mc(o, compare);
    if (*brute_cmd) return cmd_brute(o, cls, witness);
    if (*verify_cmd) return cmd_verify(o, vs);
    if (*dp_cmd) return cmd_dp(o, ds);
    if (*trace_cmd) return cmd_trace(o);
    if (*gen_cmd) return cmd_generate(o, ro);
  } catch (const BudgetExceeded& e) {
    std::cerr << "rtmt: budget exceeded: " << e.what() << '\n';
    return kBudget;
  } catch (const std::exception& e) {
    std::cerr << "rtmt: error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
