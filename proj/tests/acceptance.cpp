// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rtmt/rtmt.hpp"
#include "support/fixtures.hpp"
#include "support/flat_oracle.hpp"

using namespace rtmt;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double linf(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a[k] - b[k]));
  return d;
}

// Largest gap between a recursive information state and the direct one;
// infinity when the supports differ.
double xi_gap(const XiState& rec, const CanonicalBeliefSet& beliefs, const std::vector<flat::XiAtom>& direct) {
  if (rec.entries.size() != direct.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (const auto& at : direct) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : rec.entries) {
      if (e.x != at.x || linf(beliefs[e.b].weights(), at.b) > 1e-9) continue;
      best = std::min(best, std::abs(e.p - at.p));
    }
    worst = std::max(worst, best);
  }
  return worst;
}

// ----------------------------------------------------------------- 1

Verdict belief_recursions() {
  double gap_b = 0.0, gap_mu = 0.0, gap_xi = 0.0;
  long checked = 0;
  for (int k = 0; k < 25; ++k) {
    RandomInstanceOptions o;
    o.horizon = 2 + k % 3;
    o.max_x = o.max_a = o.max_z = o.max_y = o.max_m = o.max_estimate = 3;
    const Instance in = random_instance(o, 1100 + static_cast<std::uint64_t>(k));
    std::mt19937_64 rng(static_cast<std::uint64_t>(k));
    for (int i = 0; i < in.n(); ++i) {
      const HistoryTree tree(in, i);
      const auto schedule = memory_schedule(in, i, std::max(in.horizon() - 1, 0));
      const Emission em = random_emission(tree, in.z_size(i), rng);
      const auto mu = node_memory_beliefs(in, tree, em, schedule);
      for (int s = 0; s < tree.stages(); ++s) {
        std::map<flat::Path, Row> lik;
        for (const auto& pl : flat::first_order_paths(in, i, s + 1)) lik[pl.x] = pl.lik;
        for (int id = 0; id < static_cast<int>(tree.stage(s).size()); ++id) {
          const auto path = tree.path(s, id);
          gap_b = std::max(gap_b, linf(tree.node(s, id).belief.weights(), flat::posterior_a(in, lik.at(path))));
          auto zs = symbol_path(tree, em, s, id);
          zs.pop_back();
          gap_mu = std::max(gap_mu, linf(mu[static_cast<std::size_t>(s)][static_cast<std::size_t>(id)].weights(),
                                         flat::memory_law(in, nullptr, i, zs)));
          ++checked;
        }
      }
    }
  }
  for (int k = 0; k < 25; ++k) {
    RandomInstanceOptions o;
    o.perfect = true;
    o.horizon = 2 + k % 3;
    o.max_x = o.max_a = o.max_z = o.max_estimate = 3;
    const Instance in = random_instance(o, 1200 + static_cast<std::uint64_t>(k));
    std::mt19937_64 rng(static_cast<std::uint64_t>(k));
    const HistoryTree tree(in, 0);
    BeliefHistoryDomain dom(tree, in.z_size(0));
    const Emission em = random_emission_in(tree, in.z_size(0), dom, rng);
    const auto walk = fx::walk_xi(in, 0, tree, em);
    auto symbol = [&](const flat::Path& p) { return fx::symbol_at(tree, em, p); };
    for (const auto& stage : walk.after) {
      for (const auto& [zs, xi] : stage) {
        gap_xi = std::max(gap_xi, xi_gap(xi, walk.beliefs, flat::xi_direct(in, 0, zs, symbol)));
        ++checked;
      }
    }
  }
  const double worst = std::max({gap_b, gap_mu, gap_xi});
  return {worst <= 1e-10, "histories=" + std::to_string(checked) + " max|b|=" + fmt(gap_b) + " max|mu|=" + fmt(gap_mu) +
                              " max|xi|=" + fmt(gap_xi)};
}

// ----------------------------------------------------------------- 2

Verdict delta_factorization() {
  double worst = 0.0;
  long checked = 0, unreachable = 0, mismatched = 0;
  for (int k = 0; k < 10; ++k) {
    RandomInstanceOptions o;
    o.perfect = true;
    o.horizon = 2 + k % 2;
    o.fixed_sizes = k % 3 != 0;
    const Instance in = random_instance(o, 2100 + static_cast<std::uint64_t>(k));
    std::mt19937_64 rng(static_cast<std::uint64_t>(k));
    const HistoryTree t0(in, 0), t1(in, 1);
    BeliefHistoryDomain dom(t0, in.z_size(0));
    const Emission e0 = random_emission_in(t0, in.z_size(0), dom, rng);
    const Emission e1 = random_emission(t1, in.z_size(1), rng);
    Assembly as;
    as.instance = in;
    as.encoders = {EncoderPolicy(DeterministicEncoder(belief_history_from_emission(t0, e0))),
                   EncoderPolicy(DeterministicEncoder(general_from_emission(t1, e1)))};
    const auto walk = fx::walk_xi(in, 0, t0, e0);
    const auto lik = history_likelihoods(in, t1, e1);
    const int nz0 = in.z_size(0), nz1 = in.z_size(1);
    for (int s = 0; s < in.horizon(); ++s) {
      for (const auto& [z0, xi] : walk.after[static_cast<std::size_t>(s)]) {
        for (const auto& [h1, row] : lik.stages[static_cast<std::size_t>(s)]) {
          std::vector<int> z1(static_cast<std::size_t>(s + 1));
          std::int64_t rest = h1;
          for (int t = s; t >= 0; --t) {
            z1[static_cast<std::size_t>(t)] = static_cast<int>(rest % nz1);
            rest /= nz1;
          }
          ReceiverEvidence ev;
          ev.y = {z0.back(), z1.back()};
          ev.m = {fx::base_code(std::vector<int>(z0.begin(), z0.end() - 1), nz0),
                  fx::base_code(std::vector<int>(z1.begin(), z1.end() - 1), nz1)};
          bool direct_ok = true, rec_ok = true;
          Pmf direct, rec;
          try {
            direct = receiver_belief_direct(as, s, ev);
          } catch (const ImpossibleEvidence&) {
            direct_ok = false;
          }
          try {
            rec = psi_from_xi(xi, h1, lik, in, 0, s, walk.beliefs);
          } catch (const ImpossibleEvidence&) {
            rec_ok = false;
          }
          if (direct_ok != rec_ok) {
            ++mismatched;
          } else if (!direct_ok) {
            ++unreachable;
          } else {
            worst = std::max(worst, linf(direct.weights(), rec.weights()));
            ++checked;
          }
        }
      }
    }
  }
  return {worst <= 1e-10 && mismatched == 0 && checked > 0,
          "evidence=" + std::to_string(checked) + " zero-probability=" + std::to_string(unreachable) +
              " disagreeing-support=" + std::to_string(mismatched) + " max|psi|=" + fmt(worst)};
}

// ------------------------------------------------------------- 3 and 4

std::vector<Instance> small_suite() {
  std::vector<Instance> out;
  for (int k = 0; k < 20; ++k) {
    RandomInstanceOptions o;
    o.horizon = 2;
    o.fixed_sizes = k % 2 == 0;
    out.push_back(random_instance(o, 3100 + static_cast<std::uint64_t>(k)));
  }
  return out;
}

Verdict structural_optimality(const std::vector<Instance>& suite) {
  double worst = 0.0, strategies = 0.0;
  int passed = 0;
  for (const auto& in : suite) {
    const auto rep = verify_theorem1(in);
    worst = std::max(worst, std::abs(rep.gap));
    strategies += rep.global_count + rep.structured_count;
    passed += rep.pass ? 1 : 0;
  }
  return {passed == static_cast<int>(suite.size()),
          "instances=" + std::to_string(passed) + "/" + std::to_string(suite.size()) + " max gap=" + fmt(worst) +
              " strategies=" + fmt(strategies)};
}

Verdict decoder_optimality(const std::vector<Instance>& suite) {
  double worst = 0.0;
  int passed = 0;
  std::int64_t off_path = 0;
  std::uint64_t seed = 4100;
  for (const auto& in : suite) {
    std::mt19937_64 rng(seed++);
    Assembly as;
    as.instance = in;
    std::vector<std::vector<IntTable>> rules;
    for (int i = 0; i < in.n(); ++i) {
      as.encoders.emplace_back(DeterministicEncoder(random_general_encoder(in, i, rng)));
      rules.push_back(random_memory_rules(in, i, rng));
    }
    as.memory_rules = rules;
    const auto rep = verify_theorem2(as);
    worst = std::max({worst, std::abs(rep.gap), std::abs(rep.tau_completed_cost - rep.tau_cost)});
    off_path += rep.off_path_keys;
    passed += rep.pass ? 1 : 0;
  }
  return {passed == static_cast<int>(suite.size()),
          "instances=" + std::to_string(passed) + "/" + std::to_string(suite.size()) + " max gap=" + fmt(worst) +
              " off-path keys=" + std::to_string(off_path)};
}

// ----------------------------------------------------------------- 5

Instance p2_instance(std::uint64_t seed, double zero_probability = 0.15) {
  RandomInstanceOptions o;
  o.perfect = true;
  o.horizon = 2;
  o.fixed_sizes = true;
  o.zero_probability = zero_probability;
  return random_instance(o, seed);
}

Verdict coordinator_dp() {
  double gap_bf = 0.0, gap_general = 0.0, gap_exact = 0.0;
  for (int k = 0; k < 10; ++k) {
    const Instance in = p2_instance(5100 + static_cast<std::uint64_t>(k));
    std::mt19937_64 rng(static_cast<std::uint64_t>(k));
    const GeneralEncoder f2 = random_general_encoder(in, 1, rng);
    const auto other = fix_other_encoder(in, 0, f2);
    const auto sol = solve_coordinator(in, 0, other);
    const double bf = brute_force_response(in, 0, other, true);
    const double bf_general = brute_force_response(in, 0, other, false);
    Assembly as;
    as.instance = in;
    as.encoders = {EncoderPolicy(DeterministicEncoder(sol.encoder)), EncoderPolicy(DeterministicEncoder(f2))};
    const double exact = expected_distortion_exact(as).total;
    gap_bf = std::max(gap_bf, std::abs(sol.values.v0 - bf));
    gap_general = std::max(gap_general, std::abs(sol.values.v0 - bf_general));
    gap_exact = std::max(gap_exact, std::abs(sol.values.v0 - exact));
  }
  return {gap_bf <= 1e-9 && gap_general <= 1e-9 && gap_exact <= 1e-12,
          "instances=10 |V0-brute|=" + fmt(gap_bf) + " |V0-brute(general)|=" + fmt(gap_general) +
              " |V0-exact(extracted)|=" + fmt(gap_exact)};
}

// ----------------------------------------------------------------- 6

Verdict dominance() {
  const Instance in = p2_instance(6100, 0.0);
  std::mt19937_64 rng(6100);
  const GeneralEncoder f2 = random_general_encoder(in, 1, rng);
  const auto other = fix_other_encoder(in, 0, f2);
  const auto sol = solve_coordinator(in, 0, other);
  CanonicalBeliefSet beliefs;
  const auto rules = enumerate_history_rules(in, 0, other, beliefs, 1e4, false);
  double worst_violation = -std::numeric_limits<double>::infinity();
  double min_cost = std::numeric_limits<double>::infinity();
  for (double c : rules.costs) {
    worst_violation = std::max(worst_violation, sol.values.v0 - c);
    min_cost = std::min(min_cost, c);
  }
  Assembly as;
  as.instance = in;
  as.encoders = {EncoderPolicy(DeterministicEncoder(sol.encoder)), EncoderPolicy(DeterministicEncoder(f2))};
  const CompiledAssembly ca(as);
  const HistoryRule extracted = history_rule_from_emission(ca.components(0).front().first, ca.tree(0), in.z_size(0), beliefs);
  const double j_extracted = history_rule_cost(in, 0, other, beliefs, extracted);
  const double eq = std::abs(j_extracted - sol.values.v0);
  const bool ok = rules.count >= 1 && rules.count <= 1e4 && worst_violation <= 1e-9 && eq <= 1e-9 &&
                  std::abs(min_cost - sol.values.v0) <= 1e-9;
  return {ok, "rules=" + fmt(rules.count) + " max(V0-J)=" + fmt(worst_violation) + " |J(extracted)-V0|=" + fmt(eq) +
                  " |min J-V0|=" + fmt(std::abs(min_cost - sol.values.v0))};
}

// ----------------------------------------------------------------- 7

Verdict equivalence() {
  int passed = 0;
  double worst = 0.0;
  std::size_t members = 0;
  for (int k = 0; k < 5; ++k) {
    const Instance in = p2_instance(7100 + static_cast<std::uint64_t>(k));
    std::mt19937_64 rng(static_cast<std::uint64_t>(k));
    const auto other = fix_other_encoder(in, 0, random_general_encoder(in, 1, rng));
    const auto rep = verify_equivalence_p2(in, 0, other);
    passed += rep.pass ? 1 : 0;
    worst = std::max({worst, rep.max_multiset_gap, rep.max_rule_to_encoder_gap, rep.max_encoder_to_rule_gap});
    members += rep.coordinator_costs.size();
  }
  return {passed == 5, "instances=" + std::to_string(passed) + "/5 rules=" + std::to_string(members) + " max gap=" + fmt(worst)};
}

// ----------------------------------------------------------------- 8

Verdict markov_property() {
  double worst = 0.0, control = std::numeric_limits<double>::infinity();
  int passed = 0, caught = 0;
  std::int64_t histories = 0;
  for (int k = 0; k < 10; ++k) {
    RandomInstanceOptions o;
    o.horizon = 4;
    o.fixed_sizes = true;
    o.zero_probability = 0.0;
    const Instance in = random_instance(o, 8100 + static_cast<std::uint64_t>(k));
    std::mt19937_64 rng(static_cast<std::uint64_t>(k));
    const HistoryTree tree(in, 0);
    const auto schedule = memory_schedule(in, 0, in.horizon() - 1);
    const Emission em = random_emission(tree, in.z_size(0), rng);
    const Emission constant = compile_encoder(ConstantEncoder{0}, in, tree, schedule);
    const auto good = verify_lemma3_markov(in, 0, tree, em, schedule);
    const auto good_c = verify_lemma3_markov(in, 0, tree, constant, schedule);
    worst = std::max({worst, good.max_deviation, good_c.max_deviation});
    histories += good.histories + good_c.histories;
    passed += good.pass && good_c.pass ? 1 : 0;
    // The constant encoder keeps the receiver memory uninformative, so
    // only the belief separates histories and a faulty update shows up.
    const auto bad1 = verify_lemma3_markov(in, 0, tree, constant, schedule, BeliefCorruption::skip_likelihood);
    const auto bad2 = verify_lemma3_markov(in, 0, tree, constant, schedule, BeliefCorruption::skip_prior);
    caught += !bad1.pass && !bad2.pass ? 1 : 0;
    control = std::min({control, bad1.max_deviation, bad2.max_deviation});
  }
  return {passed == 10 && caught == 10, "instances=" + std::to_string(passed) + "/10 histories=" + std::to_string(histories) +
                                            " max dev=" + fmt(worst) + " corrupted caught=" + std::to_string(caught) +
                                            "/10 (min dev " + fmt(control) + ")"};
}

// ----------------------------------------------------------------- 9

Verdict no_randomization_gain() {
  int passed = 0;
  double worst_gain = -std::numeric_limits<double>::infinity(), worst_lin = 0.0;
  for (int k = 0; k < 5; ++k) {
    RandomInstanceOptions o;
    o.horizon = 2;
    const Instance in = random_instance(o, 9100 + static_cast<std::uint64_t>(k));
    const auto rep = verify_no_randomization_gain(in, 50, 9200 + static_cast<std::uint64_t>(k));
    passed += rep.pass ? 1 : 0;
    worst_gain = std::max(worst_gain, rep.deterministic_min - rep.min_mixture_cost);
    worst_lin = std::max(worst_lin, rep.max_linearity_error);
  }
  return {passed == 5, "instances=" + std::to_string(passed) + "/5 mixtures=250 max(det min - mixture)=" + fmt(worst_gain) +
                           " max linearity error=" + fmt(worst_lin)};
}

// ---------------------------------------------------------------- 10

Verdict monte_carlo() {
  int worst_within = 100;
  bool identical = true;
  std::string per;
  for (int k = 0; k < 3; ++k) {
    RandomInstanceOptions o;
    o.horizon = 3;
    const Instance in = random_instance(o, 10100 + static_cast<std::uint64_t>(k));
    std::mt19937_64 rng(static_cast<std::uint64_t>(k));
    Assembly as;
    as.instance = in;
    for (int i = 0; i < in.n(); ++i) as.encoders.emplace_back(DeterministicEncoder(random_general_encoder(in, i, rng)));
    const double exact = expected_distortion_exact(as).total;
    int within = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
      MonteCarloOptions mo;
      mo.samples = 10000;
      mo.seed = seed;
      const auto rep = simulate_mc(as, mo);
      if (std::abs(rep.mean - exact) <= 3.0 * rep.std_error) ++within;
    }
    MonteCarloOptions mo;
    mo.samples = 10000;
    mo.seed = 77;
    const auto r1 = simulate_mc(as, mo);
    const auto r2 = simulate_mc(as, mo);
    mo.workers = 3;
    const auto r3 = simulate_mc(as, mo);
    identical = identical && r1 == r2 && r1 == r3 && dump_json(to_json(r1)) == dump_json(to_json(r2));
    worst_within = std::min(worst_within, within);
    per += (k ? "," : "") + std::to_string(within);
  }
  return {worst_within >= 99 && identical,
          "within 3 sigma=" + per + " (of 100 each) reruns identical=" + std::string(identical ? "yes" : "no")};
}

// ---------------------------------------------------------------- 11

// Lifted observation prefix for an original prefix.
std::vector<int> kth_lifted_prefix(int nx, int k, const flat::Path& seen) {
  std::vector<int> out;
  for (std::size_t t = 0; t < seen.size(); ++t) {
    const std::size_t from = t + 1 > static_cast<std::size_t>(k) ? t + 1 - static_cast<std::size_t>(k) : 0;
    out.push_back(fx::lifted_index(nx, std::vector<int>(seen.begin() + static_cast<std::ptrdiff_t>(from), seen.begin() + static_cast<std::ptrdiff_t>(t) + 1)));
  }
  return out;
}

constexpr int d = 1;  // delay used by the lift checks

// Lifted prefix of the delay regrouping at a stage: window t (1-based) is
// X_{max(1, t-d)} .. X_{min(t, T)}.
std::vector<int> delay_prefix(int nx, int delay, int T, int stages_seen, const flat::Path& full) {
  std::vector<int> out;
  for (int t = 1; t <= stages_seen; ++t) {
    const int lo = std::max(1, t - delay), hi = std::min(t, T);
    out.push_back(fx::lifted_index(nx, std::vector<int>(full.begin() + lo - 1, full.begin() + hi)));
  }
  return out;
}

KthOrderKernels random_ext(const Instance& base, int k, std::mt19937_64& rng) {
  KthOrderKernels ext;
  std::exponential_distribution<double> ex(1.0);
  for (int i = 0; i < base.n(); ++i) {
    std::vector<std::vector<Matrix>> list;
    const int nx = base.x_size(i);
    for (int s = 0; s + 1 < base.horizon(); ++s) {
      int windows = 1;
      for (int l = 0; l < std::min(s + 1, k); ++l) windows *= nx;
      std::vector<Matrix> per_a;
      for (int a = 0; a < base.a_size(); ++a) {
        Matrix K;
        for (int w = 0; w < windows; ++w) {
          Row r(static_cast<std::size_t>(nx));
          double sum = 0.0;
          for (auto& v : r) sum += v = ex(rng);
          for (auto& v : r) v /= sum;
          K.push_back(r);
        }
        per_a.push_back(std::move(K));
      }
      list.push_back(std::move(per_a));
    }
    ext.push_back(std::move(list));
  }
  return ext;
}

Verdict transforms() {
  bool identities = true;
  for (int k = 0; k < 10; ++k) {
    RandomInstanceOptions o;
    o.horizon = 1 + k % 4;
    const Instance in = random_instance(o, 11100 + static_cast<std::uint64_t>(k));
    identities = identities && lift_kth_order(in, 1, as_kth_order(in)) == in && lift_delay(in, 0) == in;
  }

  // k = 2: path law and costs of random policies against the order-2 oracle.
  double law_gap = 0.0, kth_cost_gap = 0.0;
  for (int k = 0; k < 5; ++k) {
    RandomInstanceOptions o;
    o.horizon = 3;
    o.fixed_sizes = true;
    const Instance base = random_instance(o, 11200 + static_cast<std::uint64_t>(k));
    std::mt19937_64 rng(static_cast<std::uint64_t>(k));
    const auto ext = random_ext(base, 2, rng);
    const Instance lifted = lift_kth_order(base, 2, ext);
    for (int i = 0; i < base.n(); ++i) {
      const int nx = base.x_size(i);
      std::map<flat::Path, Row> from_lift;
      for (const auto& pl : flat::first_order_paths(lifted, i, base.horizon())) {
        // Newest element of each lifted tuple.
        flat::Path orig;
        for (int v : pl.x) orig.push_back((v < nx ? v : v - nx) % nx);
        if (kth_lifted_prefix(nx, 2, orig) != pl.x) {
          law_gap = std::numeric_limits<double>::infinity();
          continue;
        }
        from_lift[orig] = pl.lik;
      }
      const auto direct = flat::kth_order_paths(base, i, base.horizon(), 2, ext);
      if (direct.size() != from_lift.size()) law_gap = std::numeric_limits<double>::infinity();
      for (const auto& pl : direct) {
        auto it = from_lift.find(pl.x);
        law_gap = std::max(law_gap, it == from_lift.end() ? std::numeric_limits<double>::infinity() : linf(it->second, pl.lik));
      }
    }
    for (int rep = 0; rep < 4; ++rep) {
      Assembly as;
      as.instance = lifted;
      std::vector<GeneralEncoder> g;
      for (int i = 0; i < base.n(); ++i) {
        g.push_back(random_general_encoder(lifted, i, rng));
        as.encoders.emplace_back(DeterministicEncoder(g.back()));
      }
      const double engine = expected_distortion_exact(as).total;
      std::vector<std::vector<std::pair<GeneralEncoder, double>>> pols;
      for (auto& e : g) pols.push_back({{e, 1.0}});
      auto sys = flat::system_for(base, pols);
      for (int i = 0; i < base.n(); ++i) {
        const int nx = base.x_size(i);
        sys.enc[static_cast<std::size_t>(i)].paths = flat::kth_order_paths(base, i, base.horizon(), 2, ext);
        const GeneralEncoder* gi = &g[static_cast<std::size_t>(i)];
        sys.enc[static_cast<std::size_t>(i)].symbol = [gi, nx](int, int s, const flat::Path& seen, const std::vector<int>& zs) {
          return flat::general_symbol(*gi, s, kth_lifted_prefix(nx, 2, seen), zs);
        };
      }
      kth_cost_gap = std::max(kth_cost_gap, std::abs(engine - flat::flat_cost(sys)));
    }
  }

  // d = 1: costs of random policies against a delayed-objective evaluator,
  // then both brute-force optima on a 2x2 single-informative-encoder case.
  double delay_cost_gap = 0.0;
  // The receiver's memory rules are a design input, so both sides use the
  // lifted instance's (extended) list.
  auto delayed_system = [&](const Instance& in, const Instance& lifted, const std::vector<const GeneralEncoder*>& g) {
    flat::FlatSystem sys;
    const int T = in.horizon();
    sys.stages = T + d;
    sys.a_prior = in.source.a_prior;
    sys.estimate_size = in.estimate_size();
    for (int i = 0; i < in.n(); ++i) {
      flat::FlatEncoder fe;
      fe.paths = flat::first_order_paths(in, i, T);
      const int nx = in.x_size(i);
      const GeneralEncoder* gi = g[static_cast<std::size_t>(i)];
      fe.symbol = [gi, nx, T](int, int s, const flat::Path& seen, const std::vector<int>& zs) {
        return flat::general_symbol(*gi, s, delay_prefix(nx, d, T, s + 1, seen), zs);
      };
      fe.channel = [&in, i](int s) -> const Matrix& { return flat::at_stage(in.channels.matrix[static_cast<std::size_t>(i)], s); };
      const std::vector<IntTable>* rules = in.perfect_memory() ? nullptr : &lifted.receiver.memory_rules[static_cast<std::size_t>(i)];
      fe.memory = [&in, rules, i](int s, std::int64_t m, int y) { return flat::memory_next(in, rules, i, s, m, y); };
      sys.enc.push_back(std::move(fe));
    }
    sys.rho = [&in](int s, const std::vector<const flat::Path*>& x, int a, int e) {
      if (s < d) return 0.0;
      std::vector<int> cur;
      for (const auto* p : x) cur.push_back((*p)[static_cast<std::size_t>(s - d)]);
      return flat::at_stage(in.distortion.rho, s)[static_cast<std::size_t>(in.joint_index(cur, a))][static_cast<std::size_t>(e)];
    };
    return sys;
  };
  for (int k = 0; k < 5; ++k) {
    RandomInstanceOptions o;
    o.horizon = 2 + k % 2;
    const Instance in = random_instance(o, 11300 + static_cast<std::uint64_t>(k));
    const Instance lifted = lift_delay(in, d);
    std::mt19937_64 rng(static_cast<std::uint64_t>(k));
    for (int rep = 0; rep < 4; ++rep) {
      Assembly as;
      as.instance = lifted;
      std::vector<GeneralEncoder> g;
      for (int i = 0; i < in.n(); ++i) g.push_back(random_general_encoder(lifted, i, rng));
      std::vector<const GeneralEncoder*> ptrs;
      for (auto& e : g) {
        as.encoders.emplace_back(DeterministicEncoder(e));
        ptrs.push_back(&e);
      }
      const double engine = expected_distortion_exact(as).total;
      delay_cost_gap = std::max(delay_cost_gap, std::abs(engine - flat::flat_cost(delayed_system(in, lifted, ptrs))));
    }
  }

  Instance small;
  {
    RandomInstanceOptions o;
    o.horizon = 2;
    o.perfect = true;
    o.fixed_sizes = true;
    o.zero_probability = 0.0;
    small = random_instance(o, 11400);
    // Second encoder observes and sends a constant.
    small.alphabets.x_sizes[1] = 1;
    small.alphabets.z_sizes[1] = small.alphabets.y_sizes[1] = 1;
    small.source.init[1] = Matrix(static_cast<std::size_t>(small.a_size()), Row{1.0});
    small.source.kernel[1] = {std::vector<Matrix>(static_cast<std::size_t>(small.a_size()), Matrix{Row{1.0}})};
    small.channels.matrix[1] = {Matrix{Row{1.0}}};
    for (auto& rho : small.distortion.rho) {
      Matrix r;
      for (int x = 0; x < small.x_size(0); ++x) {
        for (int a = 0; a < small.a_size(); ++a) r.push_back(rho[static_cast<std::size_t>((x * 2 + 0) * small.a_size() + a)]);
      }
      rho = r;
    }
    require_valid(small);
  }
  const Instance small_lift = lift_delay(small, d);
  const double lifted_opt = enumerate_global_optimum(small_lift).cost;
  // Direct: every table over (stage, visible original prefix) for encoder 1.
  const int T = small.horizon();
  std::vector<std::pair<int, flat::Path>> slots;
  for (int s = 0; s < T + d; ++s) {
    flat::odometer_paths(small.x_size(0), std::min(s + 1, T), [&](const flat::Path& p) { slots.emplace_back(s, p); });
  }
  double direct_opt = std::numeric_limits<double>::infinity();
  std::vector<int> sym(slots.size(), 0);
  const int nz = small.z_size(0);
  while (true) {
    std::map<std::pair<int, flat::Path>, int> table;
    for (std::size_t k = 0; k < slots.size(); ++k) table[slots[k]] = sym[k];
    flat::FlatSystem sys;
    sys.stages = T + d;
    sys.a_prior = small.source.a_prior;
    sys.estimate_size = small.estimate_size();
    for (int i = 0; i < 2; ++i) {
      flat::FlatEncoder fe;
      fe.paths = flat::first_order_paths(small, i, T);
      if (i == 0) {
        fe.symbol = [&table](int, int s, const flat::Path& seen, const std::vector<int>&) { return table.at({s, seen}); };
      } else {
        fe.symbol = [](int, int, const flat::Path&, const std::vector<int>&) { return 0; };
      }
      fe.channel = [&small, i](int s) -> const Matrix& { return flat::at_stage(small.channels.matrix[static_cast<std::size_t>(i)], s); };
      fe.memory = [&small, i](int s, std::int64_t m, int y) { return flat::memory_next(small, nullptr, i, s, m, y); };
      sys.enc.push_back(std::move(fe));
    }
    sys.rho = [&small](int s, const std::vector<const flat::Path*>& x, int a, int e) {
      if (s < d) return 0.0;
      const int j = ((*x[0])[static_cast<std::size_t>(s - d)] * 1 + 0) * small.a_size() + a;
      return flat::at_stage(small.distortion.rho, s)[static_cast<std::size_t>(j)][static_cast<std::size_t>(e)];
    };
    direct_opt = std::min(direct_opt, flat::flat_cost(sys));
    std::size_t k = 0;
    while (k < sym.size() && ++sym[k] == nz) sym[k++] = 0;
    if (k == sym.size()) break;
  }
  const double opt_gap = std::abs(lifted_opt - direct_opt);

  const bool ok = identities && law_gap <= 1e-12 && kth_cost_gap <= 1e-12 && delay_cost_gap <= 1e-12 && opt_gap <= 1e-12;
  return {ok, "identities=" + std::string(identities ? "bit-exact" : "DIFFER") + " k=2 law=" + fmt(law_gap) +
                  " k=2 cost=" + fmt(kth_cost_gap) + " d=1 cost=" + fmt(delay_cost_gap) + " d=1 optimum=" + fmt(opt_gap)};
}

}  // namespace

int main() {
  struct Item {
    const char* name;
    std::function<Verdict()> run;
  };
  const auto suite = small_suite();
  const std::vector<Item> items = {
      {"1 belief recursions vs direct conditionals", belief_recursions},
      {"2 receiver belief factorization", delta_factorization},
      {"3 structured encoders lose nothing", [&] { return structural_optimality(suite); }},
      {"4 tau decoder is optimal", [&] { return decoder_optimality(suite); }},
      {"5 coordinator program vs brute force", coordinator_dp},
      {"6 coordinator value dominates every rule", dominance},
      {"7 coordinator and encoder formulations agree", equivalence},
      {"8 encoder state is Markov", markov_property},
      {"9 randomized encoders do not help", no_randomization_gain},
      {"10 Monte Carlo consistency", monte_carlo},
      {"11 lift round-trips", transforms},
  };
  int failed = 0;
  for (const auto& it : items) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = it.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s  %-48s %s (%.2fs)\n", v.pass ? "PASS" : "FAIL", it.name, v.detail.c_str(), secs);
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(items.size()) - failed, items.size());
  return failed == 0 ? 0 : 1;
}
