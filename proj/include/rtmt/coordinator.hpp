#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <vector>

#include "rtmt/beliefs.hpp"
#include "rtmt/engine.hpp"
#include "rtmt/enumerate.hpp"
#include "rtmt/errors.hpp"
#include "rtmt/history_tree.hpp"
#include "rtmt/model.hpp"
#include "rtmt/policies.hpp"
#include "rtmt/xi.hpp"

namespace rtmt {

inline constexpr double kDefaultActionBudget = 1e6;

// Every value of P(A | x_{1:s}) over positive-probability prefixes, s < stages.
inline CanonicalBeliefSet reachable_a_beliefs(const Instance& in, int i, int stages = -1, int grid = 0) {
  return HistoryTree(in, i, stages, kDedupTolerance, grid).beliefs();
}

inline void require_p2(const Instance& in, int focus) {
  require_two_encoders(in, focus);
  require_valid(in);
  if (!in.perfect_memory() || !in.noiseless()) throw SchemaError("coordinator requires noiseless channels and a perfect-memory receiver");
}

// Everything the coordinator needs about the fixed other encoder.
struct OtherEncoder {
  int index = 1;
  HistoryTree tree;
  Emission emission;
  HistoryLikelihoods likelihoods;
  EncoderMarginals marginals;
};

inline OtherEncoder fix_other_encoder(const Instance& in, int focus, const DeterministicEncoder& policy) {
  require_p2(in, focus);
  const int other = 1 - focus;
  HistoryTree tree(in, other);
  const auto schedule = memory_schedule(in, other, std::max(in.horizon() - 1, 0));
  Emission em = compile_encoder(policy, in, tree, schedule);
  auto lik = history_likelihoods(in, tree, em);
  auto marg = encoder_marginals(in, tree, em, schedule);
  return OtherEncoder{other, std::move(tree), std::move(em), std::move(lik), std::move(marg)};
}

struct XiEdge {
  int z = 0;
  double p = 0.0;
  int target = 0;
};

struct XiNode {
  XiState state;                               // after the stages so far
  double cost = 0.0;                           // cost of the stage this state closes (0 for the sentinel)
  std::vector<std::pair<int, int>> domain;     // support of the next predictive; empty at the last stage
  std::uint64_t actions = 0;
  std::vector<std::vector<XiEdge>> edges;      // [w id]
};

// Stage k holds the distinct information states after k stages; stage 0 is
// the sentinel alone.
struct ReachableXiGraph {
  int focus = 0;
  int z_size = 0;
  CanonicalBeliefSet beliefs;
  std::vector<std::vector<XiNode>> stages;
  double action_count = 0.0;
  int horizon() const { return static_cast<int>(stages.size()) - 1; }
};

namespace detail {

class XiIndex {
 public:
  int intern(std::vector<XiNode>& nodes, const XiState& xi) {
    auto& ids = by_support_[xi.support()];
    for (int id : ids) {
      if (xi_distance(nodes[static_cast<std::size_t>(id)].state, xi) <= kDedupTolerance) return id;
    }
    const int id = static_cast<int>(nodes.size());
    XiNode nd;
    nd.state = xi;
    nodes.push_back(std::move(nd));
    ids.push_back(id);
    return id;
  }

 private:
  std::map<std::vector<std::pair<int, int>>, std::vector<int>> by_support_;
};

inline double action_space(int z_size, std::size_t domain) {
  return std::pow(static_cast<double>(z_size), static_cast<double>(domain));
}

}  // namespace detail

inline ReachableXiGraph build_reachable_xi_graph(const Instance& in, int focus, const OtherEncoder& other,
                                                 double action_budget = kDefaultActionBudget, int grid = 0) {
  require_p2(in, focus);
  const int T = in.horizon();
  ReachableXiGraph g;
  g.focus = focus;
  g.z_size = in.z_size(focus);
  g.beliefs.set_grid(grid);
  g.stages.resize(static_cast<std::size_t>(T + 1));
  g.stages[0].push_back(XiNode{});
  for (int s = 0; s < T; ++s) {
    detail::XiIndex index;
    auto& next = g.stages[static_cast<std::size_t>(s + 1)];
    for (std::size_t u = 0; u < g.stages[static_cast<std::size_t>(s)].size(); ++u) {
      const XiState pred = predictive_xi(g.stages[static_cast<std::size_t>(s)][u].state, in, focus, s, g.beliefs);
      const auto domain = pred.support();
      const double count = detail::action_space(g.z_size, domain.size());
      g.action_count += count;
      if (g.action_count > action_budget) throw BudgetExceeded("coordinator actions", g.action_count, action_budget);
      const auto actions = static_cast<std::uint64_t>(count);
      std::vector<std::vector<XiEdge>> edges(actions);
      for (std::uint64_t w = 0; w < actions; ++w) {
        const auto pe = PartialEncoder::from_id(domain, w, g.z_size);
        for (int z = 0; z < g.z_size; ++z) {
          const double p = symbol_probability(pred, pe, z);
          if (!(p > 0.0)) continue;
          const int target = index.intern(next, condition_xi(pred, pe, z));
          edges[w].push_back({z, p, target});
        }
      }
      auto& node = g.stages[static_cast<std::size_t>(s)][u];
      node.domain = domain;
      node.actions = actions;
      node.edges = std::move(edges);
    }
    for (auto& nd : next) nd.cost = coordinator_stage_cost(nd.state, other.likelihoods, in, focus, s, g.beliefs);
  }
  return g;
}

struct ValueTable {
  std::vector<std::vector<double>> value;          // [stage][state]
  std::vector<std::vector<std::uint64_t>> argmin;  // [stage][state], stages 0..T-1
  double v0 = 0.0;
};

inline ValueTable solve_dp(const ReachableXiGraph& g) {
  const int T = g.horizon();
  ValueTable vt;
  vt.value.resize(static_cast<std::size_t>(T + 1));
  vt.argmin.resize(static_cast<std::size_t>(T));
  for (const auto& nd : g.stages[static_cast<std::size_t>(T)]) vt.value[static_cast<std::size_t>(T)].push_back(nd.cost);
  for (int s = T - 1; s >= 0; --s) {
    const auto& next = vt.value[static_cast<std::size_t>(s + 1)];
    for (const auto& nd : g.stages[static_cast<std::size_t>(s)]) {
      double best = std::numeric_limits<double>::infinity();
      std::uint64_t arg = 0;
      for (std::uint64_t w = 0; w < nd.actions; ++w) {
        double v = 0.0;
        for (const auto& e : nd.edges[w]) v += e.p * next[static_cast<std::size_t>(e.target)];
        if (v < best) {
          best = v;
          arg = w;
        }
      }
      vt.value[static_cast<std::size_t>(s)].push_back(nd.cost + best);
      vt.argmin[static_cast<std::size_t>(s)].push_back(arg);
    }
  }
  vt.v0 = vt.value[0].empty() ? 0.0 : vt.value[0][0];
  return vt;
}

// Markov-form rule: at every reachable state the minimizing partial encoder.
inline CoordinatorRule extract_selection_rule(const ValueTable& vt, const ReachableXiGraph& g) {
  CoordinatorRule rule;
  rule.focus = g.focus;
  rule.b_values = g.beliefs.values();
  rule.stages.resize(vt.argmin.size());
  for (std::size_t s = 0; s < vt.argmin.size(); ++s) {
    for (std::size_t u = 0; u < vt.argmin[s].size(); ++u) {
      const auto& nd = g.stages[s][u];
      rule.stages[s].emplace_back(nd.state, PartialEncoder::from_id(nd.domain, vt.argmin[s][u], g.z_size));
    }
  }
  return rule;
}

// f_s(x, b, xi) = G_s(xi)(x, b).
inline XiStructuredEncoder coordinator_to_structured(const CoordinatorRule& rule) {
  XiStructuredEncoder out;
  out.focus = rule.focus;
  out.b_values = rule.b_values;
  out.xi_values.resize(rule.stages.size());
  out.stages.resize(rule.stages.size());
  for (std::size_t s = 0; s < rule.stages.size(); ++s) {
    for (std::size_t id = 0; id < rule.stages[s].size(); ++id) {
      const auto& [xi, w] = rule.stages[s][id];
      out.xi_values[s].push_back(xi);
      for (std::size_t k = 0; k < w.domain().size(); ++k) {
        const auto [x, b] = w.domain()[k];
        out.stages[s][{x, b, static_cast<int>(id)}] = w.symbols()[k];
      }
    }
  }
  return out;
}

struct CoordinatorSolution {
  ReachableXiGraph graph;
  ValueTable values;
  CoordinatorRule rule;
  XiStructuredEncoder encoder;
};

inline CoordinatorSolution solve_coordinator(const Instance& in, int focus, const OtherEncoder& other,
                                             double action_budget = kDefaultActionBudget, int grid = 0) {
  CoordinatorSolution sol;
  sol.graph = build_reachable_xi_graph(in, focus, other, action_budget, grid);
  sol.values = solve_dp(sol.graph);
  sol.rule = extract_selection_rule(sol.values, sol.graph);
  sol.encoder = coordinator_to_structured(sol.rule);
  return sol;
}

// ------------------------------------------------------ history-form rules

// A coordinator rule in history form: per stage, the partial encoder chosen
// after each focus-symbol history (base-|Z| code, first symbol most
// significant; 0 at stage 1).
using HistoryRule = std::vector<std::map<std::int64_t, PartialEncoder>>;

struct RuleEnumeration {
  double count = 0.0;
  std::vector<double> costs;  // coordinator-side cost of each rule, in enumeration order
  std::vector<HistoryRule> rules;
};

namespace detail {

struct XiBranch {
  XiState xi;
  double p = 1.0;
  std::int64_t hist = 0;
};

class HistoryRuleWalker {
 public:
  HistoryRuleWalker(const Instance& in, int focus, const OtherEncoder& other, CanonicalBeliefSet& beliefs)
      : in_(&in), focus_(focus), other_(&other), beliefs_(&beliefs), z_(in.z_size(focus)), T_(in.horizon()) {}

  // Calls visit(rule, cost) for every rule; stops counting past `limit` when
  // `count_only` is set.
  template <typename Visit>
  void run(bool count_only, double limit, double& count, Visit&& visit) {
    HistoryRule rule(static_cast<std::size_t>(T_));
    std::vector<XiBranch> start{XiBranch{}};
    rec(0, start, 0.0, rule, count_only, limit, count, visit);
  }

  // Cost of a given rule under the information-state recursion.
  double cost(const HistoryRule& rule) {
    std::vector<XiBranch> cur{XiBranch{}}, next;
    double total = 0.0;
    for (int s = 0; s < T_; ++s) {
      next.clear();
      for (const auto& br : cur) {
        const XiState pred = predictive_xi(br.xi, *in_, focus_, s, *beliefs_);
        auto it = rule[static_cast<std::size_t>(s)].find(br.hist);
        if (it == rule[static_cast<std::size_t>(s)].end()) throw MissingEntry("history rule has no choice for a reachable history");
        expand(pred, it->second, br, s, next, total);
      }
      cur.swap(next);
    }
    return total;
  }

 private:
  void expand(const XiState& pred, const PartialEncoder& w, const XiBranch& br, int s, std::vector<XiBranch>& next,
              double& total) {
    for (int z = 0; z < z_; ++z) {
      const double p = symbol_probability(pred, w, z);
      if (!(p > 0.0)) continue;
      XiBranch nb{condition_xi(pred, w, z), br.p * p, br.hist * z_ + z};
      total += nb.p * coordinator_stage_cost(nb.xi, other_->likelihoods, *in_, focus_, s, *beliefs_);
      next.push_back(std::move(nb));
    }
  }

  template <typename Visit>
  void rec(int s, const std::vector<XiBranch>& cur, double acc, HistoryRule& rule, bool count_only, double limit,
           double& count, Visit& visit) {
    if (count_only && count > limit) return;
    if (s == T_) {
      count += 1.0;
      if (!count_only) visit(static_cast<const HistoryRule&>(rule), acc);
      return;
    }
    std::vector<XiState> preds;
    std::vector<std::vector<std::pair<int, int>>> domains;
    std::vector<std::uint64_t> radix;
    double combos = 1.0;
    for (const auto& br : cur) {
      preds.push_back(predictive_xi(br.xi, *in_, focus_, s, *beliefs_));
      domains.push_back(preds.back().support());
      const double a = action_space(z_, domains.back().size());
      radix.push_back(static_cast<std::uint64_t>(a));
      combos *= a;
    }
    if (count_only && s == T_ - 1) {
      count += combos;
      return;
    }
    std::vector<std::uint64_t> digits(cur.size(), 0);
    auto& stage_rule = rule[static_cast<std::size_t>(s)];
    std::vector<XiBranch> next;
    while (true) {
      stage_rule.clear();
      next.clear();
      double total = acc;
      for (std::size_t k = 0; k < cur.size(); ++k) {
        auto w = PartialEncoder::from_id(domains[k], digits[k], z_);
        expand(preds[k], w, cur[k], s, next, total);
        stage_rule.emplace(cur[k].hist, std::move(w));
      }
      rec(s + 1, next, total, rule, count_only, limit, count, visit);
      if (count_only && count > limit) return;
      std::size_t pos = 0;
      while (pos < digits.size() && ++digits[pos] == radix[pos]) digits[pos++] = 0;
      if (pos == digits.size()) break;
    }
    stage_rule.clear();
  }

  const Instance* in_;
  int focus_;
  const OtherEncoder* other_;
  CanonicalBeliefSet* beliefs_;
  int z_;
  int T_;
};

}  // namespace detail

// Symbol table on the focus encoder's history tree induced by a history rule.
inline Emission emission_from_history_rule(const HistoryRule& rule, const HistoryTree& tree, int z_size,
                                           const CanonicalBeliefSet& beliefs) {
  Emission em(static_cast<std::size_t>(tree.stages()));
  std::vector<std::int64_t> hist_prev, hist;
  for (int s = 0; s < tree.stages(); ++s) {
    const auto& nodes = tree.stage(s);
    hist.assign(nodes.size(), 0);
    em[static_cast<std::size_t>(s)].assign(nodes.size(), 0);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const std::int64_t h = s == 0 ? 0 : hist_prev[static_cast<std::size_t>(nodes[k].parent)];
      auto it = rule[static_cast<std::size_t>(s)].find(h);
      if (it == rule[static_cast<std::size_t>(s)].end()) throw MissingEntry("history rule has no choice for a reachable history");
      const auto b = beliefs.find(nodes[k].belief);
      if (!b) throw MissingEntry("history rule does not cover a reachable a-belief");
      const int z = it->second(nodes[k].x, *b);
      em[static_cast<std::size_t>(s)][k] = z;
      hist[k] = h * z_size + z;
    }
    hist_prev.swap(hist);
  }
  return em;
}

// History rule equivalent to a symbol table: w_s(x, b) = f_s(x, b, z_{1:s-1}).
// Throws SchemaError if the table is not a function of (x, b, past symbols).
inline HistoryRule history_rule_from_emission(const Emission& em, const HistoryTree& tree, int z_size,
                                              CanonicalBeliefSet& beliefs) {
  HistoryRule rule(static_cast<std::size_t>(tree.stages()));
  std::vector<std::int64_t> hist_prev, hist;
  for (int s = 0; s < tree.stages(); ++s) {
    const auto& nodes = tree.stage(s);
    hist.assign(nodes.size(), 0);
    std::map<std::int64_t, std::map<std::pair<int, int>, int>> table;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const std::int64_t h = s == 0 ? 0 : hist_prev[static_cast<std::size_t>(nodes[k].parent)];
      const int z = em[static_cast<std::size_t>(s)][k];
      const int b = beliefs.intern(nodes[k].belief);
      auto [it, fresh] = table[h].emplace(std::pair(nodes[k].x, b), z);
      if (!fresh && it->second != z) throw SchemaError("symbol table is not a function of (x, b, past symbols)");
      hist[k] = h * z_size + z;
    }
    for (auto& [h, m] : table) {
      std::vector<std::pair<int, int>> dom;
      std::vector<int> zs;
      for (const auto& [key, z] : m) {
        dom.push_back(key);
        zs.push_back(z);
      }
      rule[static_cast<std::size_t>(s)].emplace(h, PartialEncoder(std::move(dom), std::move(zs)));
    }
    hist_prev.swap(hist);
  }
  return rule;
}

// Every history-form coordinator rule with partial encoders on the
// positive-probability support, with its cost J(rule).
inline RuleEnumeration enumerate_history_rules(const Instance& in, int focus, const OtherEncoder& other,
                                               CanonicalBeliefSet& beliefs, double limit, bool keep_rules = false) {
  require_p2(in, focus);
  detail::HistoryRuleWalker walker(in, focus, other, beliefs);
  RuleEnumeration out;
  double count = 0.0;
  walker.run(true, limit, count, [](const HistoryRule&, double) {});
  if (count > limit) throw BudgetExceeded("coordinator history rules", count, limit);
  walker.run(false, limit, out.count, [&](const HistoryRule& r, double c) {
    out.costs.push_back(c);
    if (keep_rules) out.rules.push_back(r);
  });
  return out;
}

inline double history_rule_cost(const Instance& in, int focus, const OtherEncoder& other, CanonicalBeliefSet& beliefs,
                                const HistoryRule& rule) {
  detail::HistoryRuleWalker walker(in, focus, other, beliefs);
  return walker.cost(rule);
}

// Exact objective (tau decoder) of a focus-encoder symbol table against the
// fixed other encoder.
inline double exact_cost_against(const Instance& in, int focus, const OtherEncoder& other, const HistoryTree& tree,
                                 const Emission& em, double atom_budget = kDefaultAtomBudget) {
  const auto schedule = memory_schedule(in, focus, std::max(in.horizon() - 1, 0));
  const auto mine = encoder_marginals(in, tree, em, schedule);
  std::vector<const EncoderMarginals*> marg(2);
  marg[static_cast<std::size_t>(focus)] = &mine;
  marg[static_cast<std::size_t>(other.index)] = &other.marginals;
  return evaluate_marginals(in, marg, Decoder::tau(), ExactOptions{atom_budget}).total;
}

struct EquivalenceReport {
  std::vector<double> coordinator_costs;  // sorted
  std::vector<double> encoder_costs;      // sorted
  double max_rule_to_encoder_gap = 0.0;   // direction (i)
  double max_encoder_to_rule_gap = 0.0;   // direction (ii)
  double max_multiset_gap = 0.0;
  double coordinator_min = 0.0;
  double encoder_min = 0.0;
  bool pass = false;
};

// Both formulations of the focus encoder's problem (coordinator choosing
// partial encoders from the common history; encoder using (x, b, past
// symbols)) with the other encoder fixed: each member of one side is mapped
// to the other and evaluated there, and the achievable cost multisets are
// compared.
inline EquivalenceReport verify_equivalence_p2(const Instance& in, int focus, const OtherEncoder& other, double limit = 1e5,
                                               double tol = 1e-12) {
  require_p2(in, focus);
  const HistoryTree tree(in, focus);
  const int nz = in.z_size(focus);
  CanonicalBeliefSet beliefs;
  EquivalenceReport rep;

  // (i) coordinator rules -> encoders.
  const auto rules = enumerate_history_rules(in, focus, other, beliefs, limit, true);
  for (std::size_t r = 0; r < rules.rules.size(); ++r) {
    const Emission em = emission_from_history_rule(rules.rules[r], tree, nz, beliefs);
    const double c = exact_cost_against(in, focus, other, tree, em);
    rep.max_rule_to_encoder_gap = std::max(rep.max_rule_to_encoder_gap, std::abs(c - rules.costs[r]));
    rep.coordinator_costs.push_back(rules.costs[r]);
  }

  // (ii) encoders -> coordinator rules.
  BeliefHistoryDomain counter(tree, nz);
  const double n_enc = count_tables(tree, nz, counter, limit);
  if (n_enc > limit) throw BudgetExceeded("belief-history strategies", n_enc, limit);
  BeliefHistoryDomain domain(tree, nz);
  enumerate_tables(tree, nz, domain, [&](const Emission& em) {
    const double c = exact_cost_against(in, focus, other, tree, em);
    const HistoryRule rule = history_rule_from_emission(em, tree, nz, beliefs);
    const double j = history_rule_cost(in, focus, other, beliefs, rule);
    rep.max_encoder_to_rule_gap = std::max(rep.max_encoder_to_rule_gap, std::abs(c - j));
    rep.encoder_costs.push_back(c);
  });

  std::sort(rep.coordinator_costs.begin(), rep.coordinator_costs.end());
  std::sort(rep.encoder_costs.begin(), rep.encoder_costs.end());
  const bool same_size = rep.coordinator_costs.size() == rep.encoder_costs.size();
  if (same_size) {
    for (std::size_t k = 0; k < rep.coordinator_costs.size(); ++k) {
      rep.max_multiset_gap = std::max(rep.max_multiset_gap, std::abs(rep.coordinator_costs[k] - rep.encoder_costs[k]));
    }
  } else {
    rep.max_multiset_gap = std::numeric_limits<double>::infinity();
  }
  rep.coordinator_min = rep.coordinator_costs.empty() ? 0.0 : rep.coordinator_costs.front();
  rep.encoder_min = rep.encoder_costs.empty() ? 0.0 : rep.encoder_costs.front();
  rep.pass = same_size && rep.max_multiset_gap <= tol && rep.max_rule_to_encoder_gap <= tol && rep.max_encoder_to_rule_gap <= tol;
  return rep;
}

// Minimum over focus-encoder tables of the given class, other encoder fixed.
inline double brute_force_response(const Instance& in, int focus, const OtherEncoder& other, bool belief_history_only,
                                   double limit = 1e7) {
  const HistoryTree tree(in, focus);
  const int nz = in.z_size(focus);
  double best = std::numeric_limits<double>::infinity();
  auto visit = [&](const Emission& em) { best = std::min(best, exact_cost_against(in, focus, other, tree, em)); };
  if (belief_history_only) {
    BeliefHistoryDomain counter(tree, nz);
    const double n = count_tables(tree, nz, counter, limit);
    if (n > limit) throw BudgetExceeded("belief-history strategies", n, limit);
    BeliefHistoryDomain d(tree, nz);
    enumerate_tables(tree, nz, d, visit);
  } else {
    const double n = general_strategy_count(tree, nz);
    if (n > limit) throw BudgetExceeded("general strategies", n, limit);
    GeneralDomain d(tree);
    enumerate_tables(tree, nz, d, visit);
  }
  return best;
}

struct BestResponseStep {
  int focus = 0;
  double value = 0.0;  // coordinator optimum for this encoder, the other fixed
};

struct BestResponseResult {
  std::vector<BestResponseStep> steps;
  DeterministicEncoder encoders[2];
  double cost = 0.0;
};

// Heuristic: alternately re-optimizes each encoder with the coordinator
// program while the other is held fixed. Costs never increase from step to
// step, but the end point is only a person-by-person optimum.
inline BestResponseResult alternating_best_response(const Instance& in, DeterministicEncoder first, DeterministicEncoder second,
                                                    int sweeps, double action_budget = kDefaultActionBudget) {
  require_p2(in, 0);
  BestResponseResult out;
  out.encoders[0] = std::move(first);
  out.encoders[1] = std::move(second);
  for (int k = 0; k < sweeps; ++k) {
    for (int focus = 0; focus < 2; ++focus) {
      const auto other = fix_other_encoder(in, focus, out.encoders[1 - focus]);
      auto sol = solve_coordinator(in, focus, other, action_budget);
      out.encoders[focus] = std::move(sol.encoder);
      out.steps.push_back({focus, sol.values.v0});
    }
  }
  Assembly as;
  as.instance = in;
  as.encoders = {out.encoders[0], out.encoders[1]};
  out.cost = expected_distortion_exact(as).total;
  return out;
}

}  // namespace rtmt
