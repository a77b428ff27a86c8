#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <thread>
#include <vector>

#include "rtmt/beliefs.hpp"
#include "rtmt/engine.hpp"
#include "rtmt/enumerate.hpp"
#include "rtmt/errors.hpp"
#include "rtmt/history_tree.hpp"
#include "rtmt/model.hpp"
#include "rtmt/policies.hpp"
#include "rtmt/tau.hpp"

namespace rtmt {

inline constexpr double kGapTolerance = 1e-9;

struct SearchBudget {
  double max_strategies = 1e7;
  double max_atoms_per_eval = kDefaultAtomBudget;
  int workers = 1;
};

// One encoder's candidate: a symbol table together with its memory rules,
// reduced to the stage marginals the receiver sees.
struct Candidate {
  Emission emission;
  std::size_t rule_index = 0;
  EncoderMarginals marginals;
};

struct CandidateSet {
  std::vector<std::vector<IntTable>> rules;
  std::vector<Candidate> items;
  double counted = 0.0;  // strategies in the class (tables x memory rules)
};

enum class EncoderClass { general, structured, belief_history };

inline const char* to_string(EncoderClass c) {
  switch (c) {
    case EncoderClass::general: return "general";
    case EncoderClass::structured: return "structured";
    case EncoderClass::belief_history: return "belief_history";
  }
  return "?";
}

// Every (table, memory rule) pair of the class for encoder i.
inline CandidateSet enumerate_candidates(const Instance& in, int i, const HistoryTree& tree, EncoderClass cls,
                                         double limit, const std::vector<std::vector<IntTable>>* fixed_rules = nullptr) {
  CandidateSet out;
  out.rules = fixed_rules ? *fixed_rules : enumerate_memory_rules(in, i, limit);
  const int T = in.horizon();
  const int nz = in.z_size(i);
  for (std::size_t r = 0; r < out.rules.size(); ++r) {
    const auto schedule = memory_schedule(in, i, std::max(T - 1, 0), in.perfect_memory() ? nullptr : &out.rules[r]);
    auto visit = [&](const Emission& em) {
      out.items.push_back({em, r, encoder_marginals(in, tree, em, schedule)});
    };
    double count = 0.0;
    switch (cls) {
      case EncoderClass::general: {
        count = general_strategy_count(tree, nz);
        out.counted += count;
        if (out.counted > limit) throw BudgetExceeded(std::string("strategies of encoder ") + std::to_string(i), out.counted, limit);
        GeneralDomain d(tree);
        enumerate_tables(tree, nz, d, visit);
        break;
      }
      case EncoderClass::structured: {
        StructuredDomain dc(in, tree, schedule);
        count = count_tables(tree, nz, dc, limit - out.counted);
        out.counted += count;
        if (out.counted > limit) throw BudgetExceeded(std::string("structured strategies of encoder ") + std::to_string(i), out.counted, limit);
        StructuredDomain d(in, tree, schedule);
        enumerate_tables(tree, nz, d, visit);
        break;
      }
      case EncoderClass::belief_history: {
        BeliefHistoryDomain dc(tree, nz);
        count = count_tables(tree, nz, dc, limit - out.counted);
        out.counted += count;
        if (out.counted > limit) throw BudgetExceeded(std::string("belief-history strategies of encoder ") + std::to_string(i), out.counted, limit);
        BeliefHistoryDomain d(tree, nz);
        enumerate_tables(tree, nz, d, visit);
        break;
      }
    }
  }
  return out;
}

// Objective with the tau decoder, reusing buffers across calls.
class TauCost {
 public:
  TauCost(const Instance& in, double atom_budget) : in_(&in), budget_(atom_budget) {}

  double operator()(std::span<const EncoderMarginals* const> marg) {
    double total = 0.0;
    double atoms = 0.0;
    for (int s = 0; s < in_->horizon(); ++s) {
      build_stage_joint(*in_, marg, s, sj_, atoms, budget_);
      const Matrix& rho = in_->rho(s);
      for (std::int64_t key = 0; key < sj_.keys; ++key) total += tau_on_slice(sj_.slice(key), rho, scratch_).cost;
    }
    return total;
  }

 private:
  const Instance* in_;
  double budget_;
  StageJoint sj_;
  std::vector<double> scratch_;
};

struct SearchResult {
  double cost = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> witness;  // candidate index per encoder
  double evaluated = 0.0;            // assemblies evaluated
};

// Minimum of the tau-decoder objective over the product of candidate sets.
// Ties (equal cost) go to the lexicographically smallest index tuple; work
// is split over workers by the first encoder's stage-1 table.
inline SearchResult search_product(const Instance& in, const std::vector<const CandidateSet*>& sets, const SearchBudget& budget) {
  const std::size_t n = sets.size();
  double total = 1.0;
  for (const auto* s : sets) total *= static_cast<double>(s->items.size());
  if (total > budget.max_strategies) throw BudgetExceeded("strategy combinations", total, budget.max_strategies);

  // Partition encoder 0's candidates by their stage-1 table.
  std::map<std::vector<int>, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < sets[0]->items.size(); ++k) {
    const auto& em = sets[0]->items[k].emission;
    groups[em.empty() ? std::vector<int>{} : em[0]].push_back(k);
  }
  std::vector<const std::vector<std::size_t>*> parts;
  for (const auto& [key, idx] : groups) parts.push_back(&idx);

  auto better = [](double c, const std::vector<std::size_t>& w, const SearchResult& r) {
    return c < r.cost || (c == r.cost && w < r.witness);
  };
  auto run_part = [&](const std::vector<std::size_t>& first, SearchResult& res) {
    TauCost cost(in, budget.max_atoms_per_eval);
    std::vector<std::size_t> idx(n, 0);
    std::vector<const EncoderMarginals*> marg(n);
    for (std::size_t k0 : first) {
      idx[0] = k0;
      marg[0] = &sets[0]->items[k0].marginals;
      std::fill(idx.begin() + 1, idx.end(), 0);
      while (true) {
        for (std::size_t i = 1; i < n; ++i) marg[i] = &sets[i]->items[idx[i]].marginals;
        const double c = cost(marg);
        res.evaluated += 1.0;
        if (better(c, idx, res)) {
          res.cost = c;
          res.witness = idx;
        }
        std::size_t pos = n;
        while (pos-- > 1) {
          if (++idx[pos] < sets[pos]->items.size()) break;
          idx[pos] = 0;
        }
        if (pos == 0 || n == 1) break;
      }
    }
  };

  const int workers = std::max(1, std::min<int>(budget.workers, static_cast<int>(parts.size())));
  std::vector<SearchResult> results(static_cast<std::size_t>(workers));
  if (workers == 1) {
    for (const auto* p : parts) run_part(*p, results[0]);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t p = static_cast<std::size_t>(w); p < parts.size(); p += static_cast<std::size_t>(workers)) {
          run_part(*parts[p], results[static_cast<std::size_t>(w)]);
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  SearchResult best;
  for (const auto& r : results) {
    best.evaluated += r.evaluated;
    if (!r.witness.empty() && better(r.cost, r.witness, best)) {
      best.cost = r.cost;
      best.witness = r.witness;
    }
  }
  return best;
}

// Assembly realizing a search witness: encoders in the given form, memory
// rules of the candidates, tau decoder.
inline Assembly witness_assembly(const Instance& in, const std::vector<const CandidateSet*>& sets,
                                 const std::vector<std::size_t>& witness, const std::vector<HistoryTree>& trees,
                                 EncoderClass cls) {
  Assembly as;
  as.instance = in;
  as.decoder = Decoder::tau();
  std::vector<std::vector<IntTable>> rules;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& cand = sets[i]->items[witness[i]];
    const auto& r = sets[i]->rules[cand.rule_index];
    rules.push_back(r);
    const auto schedule = memory_schedule(in, static_cast<int>(i), std::max(in.horizon() - 1, 0), in.perfect_memory() ? nullptr : &r);
    switch (cls) {
      case EncoderClass::general:
        as.encoders.emplace_back(general_from_emission(trees[i], cand.emission));
        break;
      case EncoderClass::structured:
        as.encoders.emplace_back(structured_from_emission(in, trees[i], cand.emission, schedule));
        break;
      case EncoderClass::belief_history:
        as.encoders.emplace_back(belief_history_from_emission(trees[i], cand.emission));
        break;
    }
  }
  if (!in.perfect_memory()) as.memory_rules = rules;
  return as;
}

struct GlobalOptimum {
  double cost = 0.0;
  Assembly witness;
  double strategies = 0.0;  // size of the enumerated strategy space
  double evaluated = 0.0;
};

inline std::vector<HistoryTree> build_trees(const Instance& in) {
  std::vector<HistoryTree> trees;
  for (int i = 0; i < in.n(); ++i) trees.emplace_back(in, i);
  return trees;
}

inline GlobalOptimum optimum_over_class(const Instance& in, EncoderClass cls, const SearchBudget& budget) {
  require_valid(in);
  const auto trees = build_trees(in);
  std::vector<CandidateSet> sets;
  double space = 1.0;
  for (int i = 0; i < in.n(); ++i) {
    sets.push_back(enumerate_candidates(in, i, trees[static_cast<std::size_t>(i)], cls, budget.max_strategies));
    space *= sets.back().counted;
    if (space > budget.max_strategies) throw BudgetExceeded("strategy space", space, budget.max_strategies);
  }
  std::vector<const CandidateSet*> ptrs;
  for (const auto& s : sets) ptrs.push_back(&s);
  const auto res = search_product(in, ptrs, budget);
  GlobalOptimum out;
  out.cost = res.cost;
  out.strategies = space;
  out.evaluated = res.evaluated;
  out.witness = witness_assembly(in, ptrs, res.witness, trees, cls);
  return out;
}

// Exhaustive minimum over general encoders and memory rules. The decoder is
// minimized per evidence value, which is the exhaustive minimum over decoder
// tables because the objective is a sum of independent per-value terms.
inline GlobalOptimum enumerate_global_optimum(const Instance& in, const SearchBudget& budget = {}) {
  return optimum_over_class(in, EncoderClass::general, budget);
}

struct StructureReport {
  double global_min = 0.0;
  double structured_min = 0.0;
  double gap = 0.0;
  double global_count = 0.0;
  double structured_count = 0.0;
  Assembly global_witness;
  Assembly structured_witness;
  bool pass = false;
};

inline StructureReport verify_theorem1(const Instance& in, const SearchBudget& budget = {}) {
  const auto g = optimum_over_class(in, EncoderClass::general, budget);
  const auto st = optimum_over_class(in, EncoderClass::structured, budget);
  StructureReport rep;
  rep.global_min = g.cost;
  rep.structured_min = st.cost;
  rep.gap = st.cost - g.cost;
  rep.global_count = g.strategies;
  rep.structured_count = st.strategies;
  rep.global_witness = g.witness;
  rep.structured_witness = st.witness;
  rep.pass = std::abs(rep.gap) <= kGapTolerance;
  return rep;
}

struct DecoderReport {
  double tau_cost = 0.0;
  double table_min = 0.0;
  double gap = 0.0;
  double tau_completed_cost = 0.0;  // tau written out as a table, off-path keys set to 0
  std::int64_t off_path_keys = 0;
  double tables_enumerated = 0.0;    // sum over stages
  std::vector<double> per_stage_min;
  bool pass = false;
};

// Encoders, memory rules fixed by the assembly; compares the tau decoder
// with the minimum over every decoder table on the on-path evidence values
// of each stage (off-path entries do not change the cost).
inline DecoderReport verify_theorem2(const Assembly& as, const SearchBudget& budget = {}) {
  CompiledAssembly ca(as);
  const Instance& in = as.instance;
  const auto marg = ca.marginals();
  ExactOptions opt;
  opt.atom_budget = budget.max_atoms_per_eval;
  std::vector<StageJoint> joints;
  const auto tau_rep = evaluate_marginals(in, marg, Decoder::tau(), opt, nullptr, &joints);
  DecoderReport rep;
  rep.tau_cost = tau_rep.total;
  const int ne = in.estimate_size();
  for (const auto& sj : joints) {
    std::vector<std::int64_t> on_path;
    for (std::int64_t key = 0; key < sj.keys; ++key) {
      const auto q = sj.slice(key);
      if (std::any_of(q.begin(), q.end(), [](double v) { return v != 0.0; })) on_path.push_back(key);
    }
    const double tables = std::pow(static_cast<double>(ne), static_cast<double>(on_path.size()));
    if (tables > budget.max_strategies) throw BudgetExceeded("decoder tables at stage " + std::to_string(sj.stage + 1), tables, budget.max_strategies);
    rep.tables_enumerated += tables;
    const Matrix& rho = in.rho(sj.stage);
    // cost[k][e]: contribution of on-path value k decoded as e.
    std::vector<std::vector<double>> cost(on_path.size(), std::vector<double>(static_cast<std::size_t>(ne)));
    for (std::size_t k = 0; k < on_path.size(); ++k) {
      for (int e = 0; e < ne; ++e) cost[k][static_cast<std::size_t>(e)] = slice_cost(sj.slice(on_path[k]), rho, e);
    }
    std::vector<int> digits(on_path.size(), 0);
    double best = std::numeric_limits<double>::infinity();
    while (true) {
      double c = 0.0;
      for (std::size_t k = 0; k < digits.size(); ++k) c += cost[k][static_cast<std::size_t>(digits[k])];
      best = std::min(best, c);
      std::size_t pos = 0;
      while (pos < digits.size() && ++digits[pos] == ne) digits[pos++] = 0;
      if (pos == digits.size()) break;
    }
    rep.per_stage_min.push_back(best);
    rep.table_min += best;
  }
  std::int64_t off = 0;
  Assembly completed = as;
  completed.decoder = materialize_tau(ca, opt, &off);
  rep.off_path_keys = off;
  rep.tau_completed_cost = expected_distortion_exact(completed, opt).total;
  rep.gap = rep.tau_cost - rep.table_min;
  rep.pass = std::abs(rep.gap) <= kGapTolerance && std::abs(rep.tau_completed_cost - rep.tau_cost) <= kGapTolerance;
  return rep;
}

// Deliberate faults in the a-belief recursion for negative controls.
enum class BeliefCorruption { none, skip_likelihood, skip_prior };

struct MarkovReport {
  double max_deviation = 0.0;
  std::int64_t histories = 0;  // positive-probability conditioning histories checked
  bool pass = false;
};

// Checks that R_s = (x_s, b_s, mu_s) of encoder i is a controlled Markov
// chain with control z_s: P(R_{s+1} | r_{1:s}, z_{1:s}) = P(R_{s+1} | r_s, z_s)
// on every positive-probability history, by exact enumeration of (A, X-paths).
// The encoder is given by its symbol table on the history tree; memory
// rules come from `schedule`.
inline MarkovReport verify_lemma3_markov(const Instance& in, int i, const HistoryTree& tree, const Emission& em,
                                         const std::vector<MemoryStep>& schedule,
                                         BeliefCorruption corruption = BeliefCorruption::none, double tol = 1e-10) {
  const int T = in.horizon();
  const auto na = static_cast<std::size_t>(in.a_size());
  CanonicalBeliefSet bset;
  std::vector<CanonicalBeliefSet> mu_sets(static_cast<std::size_t>(T));
  const auto mu = node_memory_beliefs(in, tree, em, schedule);

  // The recursion under test, evaluated along each node's path.
  std::vector<std::vector<int>> b_id(static_cast<std::size_t>(T));
  std::vector<std::vector<Pmf>> b_val(static_cast<std::size_t>(T));
  for (int s = 0; s < T; ++s) {
    const auto& nodes = tree.stage(s);
    for (const auto& nd : nodes) {
      Pmf b;
      if (s == 0) {
        b = init_a_belief(in, i, nd.x);
      } else {
        const Pmf& prev = b_val[static_cast<std::size_t>(s - 1)][static_cast<std::size_t>(nd.parent)];
        const int xp = tree.node(s - 1, nd.parent).x;
        const auto& K = in.kernels(i, s - 1);
        b = Pmf(na);
        for (std::size_t a = 0; a < na; ++a) {
          const double lik = K[a][static_cast<std::size_t>(xp)][static_cast<std::size_t>(nd.x)];
          switch (corruption) {
            case BeliefCorruption::none: b[a] = lik * prev[a]; break;
            case BeliefCorruption::skip_likelihood: b[a] = prev[a]; break;
            case BeliefCorruption::skip_prior: b[a] = lik; break;
          }
        }
        if (!(b.sum() > 0.0)) b = prev;
        b.normalize("a-belief under test");
      }
      b_val[static_cast<std::size_t>(s)].push_back(b);
      b_id[static_cast<std::size_t>(s)].push_back(bset.intern(b));
    }
  }
  auto r_key = [&](int s, int node) {
    return std::array<int, 3>{tree.node(s, node).x, b_id[static_cast<std::size_t>(s)][static_cast<std::size_t>(node)],
                              mu_sets[static_cast<std::size_t>(s)].intern(mu[static_cast<std::size_t>(s)][static_cast<std::size_t>(node)])};
  };
  // Histories are the node paths themselves plus the symbols, which are a
  // function of the path; r-histories group paths that agree on every R and z.
  std::vector<std::vector<std::array<int, 3>>> r(static_cast<std::size_t>(T));
  for (int s = 0; s < T; ++s) {
    for (int k = 0; k < static_cast<int>(tree.stage(s).size()); ++k) r[static_cast<std::size_t>(s)].push_back(r_key(s, k));
  }
  MarkovReport rep;
  using Hist = std::vector<int>;
  for (int s = 0; s + 1 < T; ++s) {
    std::map<Hist, std::map<std::array<int, 3>, double>> full;
    std::map<std::array<int, 4>, std::map<std::array<int, 3>, double>> local;
    for (int k = 0; k < static_cast<int>(tree.stage(s + 1).size()); ++k) {
      const auto& nd = tree.node(s + 1, k);
      Hist h;
      int p = nd.parent;
      for (int t = s; t >= 0; --t) {
        const auto& rk = r[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
        h.insert(h.end(), {rk[0], rk[1], rk[2], em[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)]});
        p = tree.node(t, p).parent;
      }
      const auto& cur = r[static_cast<std::size_t>(s)][static_cast<std::size_t>(nd.parent)];
      const std::array<int, 4> lk{cur[0], cur[1], cur[2], em[static_cast<std::size_t>(s)][static_cast<std::size_t>(nd.parent)]};
      const auto& nxt = r[static_cast<std::size_t>(s + 1)][static_cast<std::size_t>(k)];
      full[h][nxt] += nd.weight;
      local[lk][nxt] += nd.weight;
    }
    // Re-derive each history's local key from its first four entries.
    for (const auto& [h, dist] : full) {
      const std::array<int, 4> lk{h[0], h[1], h[2], h[3]};
      const auto& ld = local.at(lk);
      double hm = 0.0, lm = 0.0;
      for (const auto& [k, v] : dist) hm += v;
      for (const auto& [k, v] : ld) lm += v;
      std::map<std::array<int, 3>, double> merged;
      for (const auto& [k, v] : dist) merged[k] += v / hm;
      for (const auto& [k, v] : ld) merged[k] -= v / lm;
      for (const auto& [k, v] : merged) rep.max_deviation = std::max(rep.max_deviation, std::abs(v));
      ++rep.histories;
    }
  }
  rep.pass = rep.max_deviation <= tol;
  return rep;
}

struct RandomizationReport {
  double deterministic_min = 0.0;  // best encoder-1 table with everything else fixed
  double global_min = 0.0;
  std::vector<double> mixture_costs;
  double min_mixture_cost = 0.0;
  double max_linearity_error = 0.0;
  double strategies = 0.0;
  bool pass = false;
};

// Fixes encoder 2, the memory rules and the decoder table at a global
// optimum, then compares random mixtures of encoder-1 tables with the best
// deterministic one.
inline RandomizationReport verify_no_randomization_gain(const Instance& in, int mixtures, std::uint64_t seed,
                                                        const SearchBudget& budget = {}) {
  const auto g = enumerate_global_optimum(in, budget);
  ExactOptions opt;
  opt.atom_budget = budget.max_atoms_per_eval;
  CompiledAssembly witness(g.witness);
  Assembly fixed = g.witness;
  fixed.decoder = materialize_tau(witness, opt);

  const auto trees = build_trees(in);
  const int focus = 0;
  const auto& tree = trees[0];
  std::vector<std::vector<IntTable>> rule_list;
  if (fixed.memory_rules) rule_list.push_back((*fixed.memory_rules)[0]);
  else rule_list.emplace_back();
  const auto cands = enumerate_candidates(in, focus, tree, EncoderClass::general, budget.max_strategies, &rule_list);

  auto others = witness.marginals();
  std::vector<double> cost(cands.items.size());
  RandomizationReport rep;
  rep.global_min = g.cost;
  rep.strategies = static_cast<double>(cands.items.size());
  rep.deterministic_min = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < cands.items.size(); ++k) {
    others[0] = &cands.items[k].marginals;
    cost[k] = evaluate_marginals(in, others, fixed.decoder, opt).total;
    rep.deterministic_min = std::min(rep.deterministic_min, cost[k]);
  }
  std::mt19937_64 rng(splitmix64(seed));
  rep.min_mixture_cost = std::numeric_limits<double>::infinity();
  rep.pass = true;
  for (int m = 0; m < mixtures; ++m) {
    const std::size_t max_parts = std::min<std::size_t>(5, cands.items.size());
    const std::size_t parts = max_parts <= 1 ? 1 : 2 + static_cast<std::size_t>(rng() % (max_parts - 1));
    std::vector<std::pair<DeterministicEncoder, double>> mix;
    std::vector<std::size_t> chosen;
    Row w;
    double wsum = 0.0;
    for (std::size_t p = 0; p < parts; ++p) {
      chosen.push_back(static_cast<std::size_t>(rng() % cands.items.size()));
      w.push_back(-std::log(1.0 - uniform01(rng)));
      wsum += w.back();
    }
    for (double& v : w) v /= wsum;
    double convex = 0.0;
    for (std::size_t p = 0; p < parts; ++p) {
      mix.emplace_back(general_from_emission(tree, cands.items[chosen[p]].emission), w[p]);
      convex += w[p] * cost[chosen[p]];
    }
    Assembly as = fixed;
    as.encoders[0] = randomize_encoder(std::move(mix));
    const double c = expected_distortion_exact(as, opt).total;
    rep.mixture_costs.push_back(c);
    rep.min_mixture_cost = std::min(rep.min_mixture_cost, c);
    rep.max_linearity_error = std::max(rep.max_linearity_error, std::abs(c - convex));
    if (c < rep.deterministic_min - kGapTolerance) rep.pass = false;
  }
  if (rep.max_linearity_error > 1e-12) rep.pass = false;
  return rep;
}

}  // namespace rtmt
