#include <gtest/gtest.h>

#include <random>

#include "rtmt/rtmt.hpp"
#include "support/fixtures.hpp"
#include "support/flat_oracle.hpp"

using namespace rtmt;

namespace {

// Nothing reaches the receiver: each stage costs min_e E rho(X_s, A, e).
double blind_cost(const Instance& in) {
  double want = 0.0;
  for (int s = 0; s < in.horizon(); ++s) {
    const auto p0 = flat::first_order_paths(in, 0, s + 1);
    const auto p1 = flat::first_order_paths(in, 1, s + 1);
    Row by_est(static_cast<std::size_t>(in.estimate_size()), 0.0);
    for (const auto& u : p0) {
      for (const auto& v : p1) {
        for (int a = 0; a < in.a_size(); ++a) {
          const double w = in.source.a_prior[static_cast<std::size_t>(a)] * u.lik[static_cast<std::size_t>(a)] * v.lik[static_cast<std::size_t>(a)];
          const int j = in.joint_index(std::vector<int>{u.x.back(), v.x.back()}, a);
          for (int e = 0; e < in.estimate_size(); ++e) by_est[static_cast<std::size_t>(e)] += w * in.rho(s)[static_cast<std::size_t>(j)][static_cast<std::size_t>(e)];
        }
      }
    }
    want += *std::min_element(by_est.begin(), by_est.end());
  }
  return want;
}

Instance mute(int T) {
  Instance in = fx::binary_instance(T, true);
  in.alphabets.z_sizes = in.alphabets.y_sizes = {1, 1};
  in.channels.matrix = {{identity_matrix(1)}, {identity_matrix(1)}};
  return in;
}

TEST(GlobalOptimum, SingleSymbolAlphabetsGiveTheBlindCost) {
  for (int T = 1; T <= 3; ++T) {
    const Instance in = mute(T);
    require_valid(in);
    EXPECT_NEAR(enumerate_global_optimum(in).cost, blind_cost(in), 1e-12) << "T=" << T;
  }
}

TEST(GlobalOptimum, ZeroWhenObservationsCanBeSentVerbatim) {
  for (int T = 1; T <= 2; ++T) {
    const auto opt = enumerate_global_optimum(fx::binary_instance(T, true));
    EXPECT_NEAR(opt.cost, 0.0, 1e-15);
    EXPECT_NEAR(expected_distortion_exact(opt.witness).total, 0.0, 1e-15);
  }
}

TEST(GlobalOptimum, SingleEncoderMatchesFlatBruteForce) {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    RandomInstanceOptions o;
    o.n = 1;
    o.horizon = 2;
    o.perfect = seed % 2 == 0;
    const Instance in = random_instance(o, seed);
    EXPECT_NEAR(enumerate_global_optimum(in).cost, flat::single_encoder_brute_force(in), 1e-12) << "seed " << seed;
  }
}

TEST(GlobalOptimum, NoRandomAssemblyBeatsIt) {
  std::mt19937_64 rng(2);
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    RandomInstanceOptions o;
    o.horizon = 2;
    const Instance in = random_instance(o, seed);
    const auto opt = enumerate_global_optimum(in);
    EXPECT_NEAR(expected_distortion_exact(opt.witness).total, opt.cost, 1e-12);
    for (int k = 0; k < 20; ++k) {
      Assembly as;
      as.instance = in;
      for (int i = 0; i < in.n(); ++i) as.encoders.emplace_back(random_general_encoder(in, i, rng));
      if (!in.perfect_memory()) as.memory_rules = std::vector<std::vector<IntTable>>{random_memory_rules(in, 0, rng), random_memory_rules(in, 1, rng)};
      EXPECT_GE(expected_distortion_exact(as).total, opt.cost - 1e-12);
    }
  }
}

TEST(GlobalOptimum, BudgetIsEnforced) {
  SearchBudget b;
  b.max_strategies = 10;
  EXPECT_THROW(enumerate_global_optimum(fx::binary_instance(2), b), BudgetExceeded);
}

TEST(StructureCheck, DegenerateObservationsHaveNoGap) {
  Instance in = fx::binary_instance(2);
  in.alphabets.x_sizes = {1, 2};
  in.source.init[0] = {{1.0}, {1.0}};
  in.source.kernel[0] = {{Matrix{{1.0}}, Matrix{{1.0}}}};
  in.distortion.rho = {Matrix(4, Row{0.0, 1.0, 1.0, 0.5})};
  require_valid(in);
  const auto rep = verify_theorem1(in);
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.gap, 0.0);
}

TEST(StructureCheck, PassesOnRandomInstances) {
  for (std::uint64_t seed = 20; seed < 24; ++seed) {
    RandomInstanceOptions o;
    o.horizon = 2;
    const auto rep = verify_theorem1(random_instance(o, seed));
    EXPECT_TRUE(rep.pass) << "seed " << seed << " gap " << rep.gap;
    EXPECT_LE(rep.structured_count, rep.global_count);
  }
}

TEST(DecoderCheck, ZeroDistortion) {
  Instance in = fx::binary_instance(1);
  for (auto& r : in.distortion.rho[0]) std::fill(r.begin(), r.end(), 0.0);
  std::mt19937_64 rng(3);
  Assembly as;
  as.instance = in;
  as.encoders = {EncoderPolicy(random_general_encoder(in, 0, rng)), EncoderPolicy(random_general_encoder(in, 1, rng))};
  const auto rep = verify_theorem2(as);
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.tau_cost, 0.0);
  EXPECT_EQ(rep.gap, 0.0);
}

TEST(DecoderCheck, OffPathKeysDoNotChangeTheCost) {
  // Constant symbols over noiseless channels leave most evidence values
  // unreachable.
  Assembly as;
  as.instance = fx::binary_instance(2, true);
  as.encoders = {EncoderPolicy(ConstantEncoder{0}), EncoderPolicy(ConstantEncoder{1})};
  const auto rep = verify_theorem2(as);
  EXPECT_TRUE(rep.pass);
  EXPECT_GT(rep.off_path_keys, 0);
  EXPECT_EQ(rep.tau_completed_cost, rep.tau_cost);
  EXPECT_NEAR(rep.tau_cost, blind_cost(as.instance), 1e-12);
}

TEST(DecoderCheck, PassesOnRandomAssemblies) {
  std::mt19937_64 rng(4);
  for (std::uint64_t seed = 30; seed < 36; ++seed) {
    RandomInstanceOptions o;
    o.horizon = 2;
    const Instance in = random_instance(o, seed);
    Assembly as;
    as.instance = in;
    for (int i = 0; i < in.n(); ++i) as.encoders.emplace_back(random_general_encoder(in, i, rng));
    const auto rep = verify_theorem2(as);
    EXPECT_TRUE(rep.pass) << "seed " << seed;
    EXPECT_LE(rep.tau_cost, rep.table_min + 1e-12);
  }
}

TEST(MarkovCheck, HoldsWithOneValueOfA) {
  Instance in = fx::binary_instance(3);
  in.alphabets.a_size = 1;
  in.source.a_prior = {1.0};
  for (auto& by_a : in.source.init) by_a.resize(1);
  for (auto& stages : in.source.kernel) {
    for (auto& by_a : stages) by_a.resize(1);
  }
  in.distortion.rho = {Matrix(4, Row(4, 0.0))};
  require_valid(in);
  std::mt19937_64 rng(5);
  const HistoryTree tree(in, 0);
  const auto rep = verify_lemma3_markov(in, 0, tree, random_emission(tree, 2, rng), memory_schedule(in, 0, 2));
  EXPECT_TRUE(rep.pass);
  EXPECT_GT(rep.histories, 0);
}

TEST(MarkovCheck, HoldsWithASingleMemoryValue) {
  Instance in = fx::binary_instance(3);
  in.alphabets.m_sizes = {1, 1};
  const std::vector<IntTable> rules = {{{0, 0}}, {{0, 0}}};
  in.receiver.memory_rules = {rules, rules};
  require_valid(in);
  std::mt19937_64 rng(6);
  const HistoryTree tree(in, 1);
  const auto rep = verify_lemma3_markov(in, 1, tree, random_emission(tree, 2, rng), memory_schedule(in, 1, 2));
  EXPECT_TRUE(rep.pass) << rep.max_deviation;
}

TEST(MarkovCheck, CorruptedBeliefsAreCaught) {
  RandomInstanceOptions o;
  o.horizon = 4;
  o.fixed_sizes = true;
  o.zero_probability = 0.0;
  const Instance in = random_instance(o, 7);
  const HistoryTree tree(in, 0);
  const auto sched = memory_schedule(in, 0, 3);
  const Emission em = compile_encoder(ConstantEncoder{0}, in, tree, sched);
  EXPECT_TRUE(verify_lemma3_markov(in, 0, tree, em, sched).pass);
  EXPECT_FALSE(verify_lemma3_markov(in, 0, tree, em, sched, BeliefCorruption::skip_likelihood).pass);
  EXPECT_FALSE(verify_lemma3_markov(in, 0, tree, em, sched, BeliefCorruption::skip_prior).pass);
}

TEST(RandomizationCheck, MixturesNeverBeatTheBestTable) {
  for (std::uint64_t seed = 40; seed < 43; ++seed) {
    RandomInstanceOptions o;
    o.horizon = 2;
    const auto rep = verify_no_randomization_gain(random_instance(o, seed), 30, seed);
    EXPECT_TRUE(rep.pass) << "seed " << seed;
    EXPECT_GE(rep.min_mixture_cost, rep.deterministic_min - 1e-12);
    EXPECT_LE(rep.max_linearity_error, 1e-12);
  }
}

}  // namespace
