#include <gtest/gtest.h>

#include <random>

#include "rtmt/rtmt.hpp"
#include "support/fixtures.hpp"
#include "support/flat_oracle.hpp"

using namespace rtmt;

namespace {

Instance small(std::uint64_t seed, bool perfect = false, int T = 3) {
  RandomInstanceOptions o;
  o.horizon = T;
  o.perfect = perfect;
  o.max_x = o.max_z = o.max_y = o.max_m = 2;
  return random_instance(o, seed);
}

std::vector<int> node_path(const HistoryTree& tree, int s, int id) { return tree.path(s, id); }

TEST(CompileEncoder, GeneralTableIsLookedUpByHistory) {
  std::mt19937_64 rng(1);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Instance in = small(seed);
    const HistoryTree tree(in, 0);
    const GeneralEncoder g = random_general_encoder(in, 0, rng);
    const Emission em = compile_encoder(g, in, tree, memory_schedule(in, 0, in.horizon() - 1));
    for (int s = 0; s < tree.stages(); ++s) {
      for (int id = 0; id < static_cast<int>(tree.stage(s).size()); ++id) {
        std::vector<int> zs = symbol_path(tree, em, s, id);
        zs.pop_back();
        EXPECT_EQ(em[static_cast<std::size_t>(s)][static_cast<std::size_t>(id)], flat::general_symbol(g, s, node_path(tree, s, id), zs));
      }
    }
    EXPECT_EQ(general_from_emission(tree, em), g);
  }
}

TEST(CompileEncoder, MissingGeneralEntryIsReported) {
  const Instance in = fx::binary_instance(2);
  const HistoryTree tree(in, 0);
  GeneralEncoder g;
  g.stages.resize(2);
  g.stages[0][{{0}, {}}] = 0;
  try {
    compile_encoder(g, in, tree, memory_schedule(in, 0, 1));
    FAIL() << "expected a missing entry";
  } catch (const MissingEntry& e) {
    EXPECT_NE(std::string(e.what()).find("x=[1]"), std::string::npos) << e.what();
  }
  GeneralEncoder short_table;
  short_table.stages.resize(1);
  EXPECT_THROW(compile_encoder(short_table, in, tree, memory_schedule(in, 0, 1)), MissingEntry);
}

TEST(CompileEncoder, ConstantEncoder) {
  const Instance in = fx::binary_instance(3);
  const HistoryTree tree(in, 1);
  const auto sched = memory_schedule(in, 1, 2);
  for (const auto& st : compile_encoder(ConstantEncoder{1}, in, tree, sched)) {
    for (int z : st) EXPECT_EQ(z, 1);
  }
  EXPECT_THROW(compile_encoder(ConstantEncoder{2}, in, tree, sched), SchemaError);
}

TEST(CompileEncoder, StructuredTableDependsOnXBMuOnly) {
  std::mt19937_64 rng(2);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Instance in = small(seed);
    const HistoryTree tree(in, 0);
    const auto sched = memory_schedule(in, 0, in.horizon() - 1);
    StructuredDomain dom(in, tree, sched);
    const Emission em = random_emission_in(tree, in.z_size(0), dom, rng);
    const StructuredEncoder st = structured_from_emission(in, tree, em, sched);
    EXPECT_EQ(compile_encoder(st, in, tree, sched), em);
    // Equal (x, b, mu) computed from the model must give equal symbols.
    for (int s = 0; s < tree.stages(); ++s) {
      const int n_nodes = static_cast<int>(tree.stage(s).size());
      for (int u = 0; u < n_nodes; ++u) {
        for (int v = u + 1; v < n_nodes; ++v) {
          const auto pu = node_path(tree, s, u), pv = node_path(tree, s, v);
          if (pu.back() != pv.back()) continue;
          auto zu = symbol_path(tree, em, s, u), zv = symbol_path(tree, em, s, v);
          zu.pop_back();
          zv.pop_back();
          const bool same_b = linf_distance(Pmf(flat::posterior_a(in, 0, pu)), Pmf(flat::posterior_a(in, 0, pv))) <= 1e-9;
          const bool same_mu = linf_distance(Pmf(flat::memory_law(in, nullptr, 0, zu)), Pmf(flat::memory_law(in, nullptr, 0, zv))) <= 1e-9;
          if (same_b && same_mu) {
            EXPECT_EQ(em[static_cast<std::size_t>(s)][static_cast<std::size_t>(u)], em[static_cast<std::size_t>(s)][static_cast<std::size_t>(v)]);
          }
        }
      }
    }
  }
}

TEST(CompileEncoder, StructuredRejectsAHistoryDependentTable) {
  // With one value of A every belief is the same, so the stage-2 nodes
  // (0, 1) and (1, 1) share (x, b, mu) after a constant first symbol.
  Instance in = fx::binary_instance(2);
  in.alphabets.a_size = 1;
  in.source.a_prior = {1.0};
  for (auto& by_a : in.source.init) by_a.resize(1);
  for (auto& stages : in.source.kernel) {
    for (auto& by_a : stages) by_a.resize(1);
  }
  in.distortion.rho = {Matrix(4, Row(4, 0.0))};
  require_valid(in);
  const HistoryTree tree(in, 0);
  const auto sched = memory_schedule(in, 0, 1);
  Emission em = compile_encoder(ConstantEncoder{0}, in, tree, sched);
  EXPECT_NO_THROW(structured_from_emission(in, tree, em, sched));
  em[1][static_cast<std::size_t>(tree.find(std::vector<int>{1, 1}))] = 1;
  EXPECT_THROW(structured_from_emission(in, tree, em, sched), SchemaError);
}

TEST(CompileEncoder, BeliefHistoryRoundTrip) {
  std::mt19937_64 rng(3);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Instance in = small(seed, true);
    const HistoryTree tree(in, 1);
    BeliefHistoryDomain dom(tree, in.z_size(1));
    const Emission em = random_emission_in(tree, in.z_size(1), dom, rng);
    const BeliefHistoryEncoder bh = belief_history_from_emission(tree, em);
    EXPECT_EQ(compile_encoder(bh, in, tree, memory_schedule(in, 1, in.horizon() - 1)), em);
  }
}

TEST(Mixture, WeightsMustBeAPmf) {
  EXPECT_THROW(randomize_encoder({}), SchemaError);
  EXPECT_THROW(randomize_encoder({{ConstantEncoder{0}, 0.5}, {ConstantEncoder{1}, 0.4}}), SchemaError);
  EXPECT_THROW(randomize_encoder({{ConstantEncoder{0}, -0.5}, {ConstantEncoder{1}, 1.5}}), SchemaError);
  EXPECT_TRUE(randomize_encoder({{ConstantEncoder{0}, 1.0}}).deterministic());
}

TEST(Mixture, SingleComponentEqualsTheDeterministicEncoder) {
  std::mt19937_64 rng(4);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Instance in = small(seed);
    Assembly det;
    det.instance = in;
    for (int i = 0; i < in.n(); ++i) det.encoders.emplace_back(random_general_encoder(in, i, rng));
    Assembly mix = det;
    mix.encoders[0] = randomize_encoder({{det.encoders[0].components[0].first, 1.0}});
    EXPECT_EQ(expected_distortion_exact(det).total, expected_distortion_exact(mix).total);
  }
}

TEST(PolicyJson, EveryEncoderFormRoundTrips) {
  std::mt19937_64 rng(5);
  const Instance in = small(7, true);
  const HistoryTree tree(in, 0);
  const auto sched = memory_schedule(in, 0, in.horizon() - 1);
  std::vector<DeterministicEncoder> encs;
  encs.emplace_back(random_general_encoder(in, 0, rng));
  StructuredDomain sd(in, tree, sched);
  encs.emplace_back(structured_from_emission(in, tree, random_emission_in(tree, in.z_size(0), sd, rng), sched));
  BeliefHistoryDomain bd(tree, in.z_size(0));
  encs.emplace_back(belief_history_from_emission(tree, random_emission_in(tree, in.z_size(0), bd, rng)));
  const auto sol = solve_coordinator(in, 0, fix_other_encoder(in, 0, random_general_encoder(in, 1, rng)));
  encs.emplace_back(sol.rule);
  encs.emplace_back(sol.encoder);
  encs.emplace_back(ConstantEncoder{in.z_size(0) - 1});
  for (const auto& e : encs) {
    const Json j = encoder_to_json(e);
    const auto back = encoder_from_json(Json::parse(j.dump()), "enc");
    EXPECT_EQ(back, e) << j.dump().substr(0, 80);
    EXPECT_EQ(compile_encoder(back, in, tree, sched), compile_encoder(e, in, tree, sched));
  }
}

TEST(PolicyJson, MixtureAndDecoderRoundTrip) {
  const EncoderPolicy mix = randomize_encoder({{ConstantEncoder{0}, 0.25}, {ConstantEncoder{1}, 0.75}});
  EXPECT_EQ(policy_from_json(Json::parse(policy_to_json(mix).dump()), "p"), mix);

  Decoder d;
  d.kind = Decoder::Kind::table;
  d.default_estimate = 2;
  d.stages = {{{{0, 1, 0, 0}, 3}, {{1, 1, 0, 0}, 1}}, {{{0, 0, 1, 1}, 0}}};
  EXPECT_EQ(decoder_from_json(Json::parse(decoder_to_json(d).dump()), "d"), d);
  EXPECT_EQ(decoder_from_json(decoder_to_json(Decoder::tau()), "d"), Decoder::tau());
}

TEST(PolicyJson, UnknownFieldsAreRejected) {
  Json j = decoder_to_json(Decoder::tau());
  j["extra"] = 1;
  EXPECT_THROW(decoder_from_json(j, "d"), SchemaError);
  Json mix = policy_to_json(randomize_encoder({{ConstantEncoder{0}, 0.5}, {ConstantEncoder{1}, 0.5}}));
  mix["components"][0]["bogus"] = true;
  EXPECT_THROW(policy_from_json(mix, "p"), SchemaError);
}

TEST(PolicyJson, AssemblyRoundTrip) {
  std::mt19937_64 rng(6);
  const Instance in = small(8);
  Assembly as;
  as.instance = in;
  as.encoders = {randomize_encoder({{random_general_encoder(in, 0, rng), 0.3}, {ConstantEncoder{0}, 0.7}}),
                 EncoderPolicy(random_general_encoder(in, 1, rng))};
  as.memory_rules = std::vector<std::vector<IntTable>>{random_memory_rules(in, 0, rng), random_memory_rules(in, 1, rng)};
  const Assembly back = assembly_from_json(in, Json::parse(assembly_policies_to_json(as).dump()));
  EXPECT_EQ(back.encoders, as.encoders);
  EXPECT_EQ(back.memory_rules, as.memory_rules);
  EXPECT_EQ(expected_distortion_exact(back).total, expected_distortion_exact(as).total);
}

TEST(CoordinatorConversion, RuleAndStructuredFormSendTheSameSymbols) {
  std::mt19937_64 rng(7);
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const Instance in = small(seed, true);
    const auto other = fix_other_encoder(in, 0, random_general_encoder(in, 1, rng));
    const auto sol = solve_coordinator(in, 0, other);
    const HistoryTree tree(in, 0);
    const auto sched = memory_schedule(in, 0, in.horizon() - 1);
    const Emission a = compile_encoder(sol.rule, in, tree, sched);
    const Emission b = compile_encoder(sol.encoder, in, tree, sched);
    EXPECT_EQ(a, b);
    EXPECT_EQ(coordinator_to_structured(sol.rule), sol.encoder);
    Assembly as;
    as.instance = in;
    as.encoders = {EncoderPolicy(sol.rule), EncoderPolicy(general_from_emission(other.tree, other.emission))};
    Assembly as2 = as;
    as2.encoders[0] = EncoderPolicy(sol.encoder);
    EXPECT_EQ(expected_distortion_exact(as).total, expected_distortion_exact(as2).total);
  }
}

TEST(CoordinatorConversion, RuleBuiltForTheOtherEncoderIsRejected) {
  std::mt19937_64 rng(8);
  const Instance in = small(3, true);
  const auto sol = solve_coordinator(in, 0, fix_other_encoder(in, 0, random_general_encoder(in, 1, rng)));
  const HistoryTree tree(in, 1);
  const auto sched = memory_schedule(in, 1, in.horizon() - 1);
  EXPECT_THROW(compile_encoder(sol.rule, in, tree, sched), SchemaError);
  EXPECT_THROW(compile_encoder(sol.encoder, in, tree, sched), SchemaError);
}

TEST(DetectionRule, IsAValidMemoryRule) {
  Instance in = fx::binary_instance(4);
  const auto rules = detection_memory_rule(2);
  in.receiver.memory_rules = {rules, rules};
  EXPECT_TRUE(validate(in).ok()) << validate(in).to_string();
}

}  // namespace
