#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

#include "rtmt/beliefs.hpp"
#include "rtmt/errors.hpp"
#include "rtmt/history_tree.hpp"
#include "rtmt/model.hpp"
#include "rtmt/pmf.hpp"
#include "rtmt/tau.hpp"
#include "rtmt/xi.hpp"

namespace rtmt {

// z_{s+1} = f(x_{1:s+1}, z_{1:s}); keys hold the observation and symbol
// prefixes of the stage.
struct GeneralEncoder {
  using Key = std::pair<std::vector<int>, std::vector<int>>;
  std::vector<std::map<Key, int>> stages;
  friend bool operator==(const GeneralEncoder&, const GeneralEncoder&) = default;
};

// z = f(x, b, mu) with b and mu given by id into the companion value lists.
struct StructuredEncoder {
  using Key = std::array<int, 3>;  // x, b id, mu id
  std::vector<Pmf> b_values;
  std::vector<std::vector<Pmf>> mu_values;  // [stage][mu id]
  std::vector<std::map<Key, int>> stages;
  friend bool operator==(const StructuredEncoder&, const StructuredEncoder&) = default;
};

// z = f(x, b, z_{1:s}): the encoder form for noiseless channels with a
// perfect-memory receiver.
struct BeliefHistoryEncoder {
  using Key = std::tuple<int, int, std::vector<int>>;  // x, b id, past symbols
  std::vector<Pmf> b_values;
  std::vector<std::map<Key, int>> stages;
  friend bool operator==(const BeliefHistoryEncoder&, const BeliefHistoryEncoder&) = default;
};

// Markov-form selection rule: at stage s the partial encoder is looked up by
// the information state reached after stage s-1.
struct CoordinatorRule {
  int focus = 0;
  std::vector<Pmf> b_values;
  std::vector<std::vector<std::pair<XiState, PartialEncoder>>> stages;
  friend bool operator==(const CoordinatorRule&, const CoordinatorRule&) = default;
};

// The same choice keyed per stage by (x, b id, information-state id): the
// structured form of a coordinator rule.
struct XiStructuredEncoder {
  using Key = std::array<int, 3>;  // x, b id, xi id
  int focus = 0;
  std::vector<Pmf> b_values;
  std::vector<std::vector<XiState>> xi_values;  // [stage][xi id], state before the stage
  std::vector<std::map<Key, int>> stages;
  friend bool operator==(const XiStructuredEncoder&, const XiStructuredEncoder&) = default;
};

struct ConstantEncoder {
  int z = 0;
  friend bool operator==(const ConstantEncoder&, const ConstantEncoder&) = default;
};

using DeterministicEncoder =
    std::variant<GeneralEncoder, StructuredEncoder, BeliefHistoryEncoder, CoordinatorRule, XiStructuredEncoder, ConstantEncoder>;

// Finite mixture of deterministic encoders, drawn once before stage 1
// independently of everything else. A single weight-1 component is a
// deterministic encoder.
struct EncoderPolicy {
  std::vector<std::pair<DeterministicEncoder, double>> components;

  EncoderPolicy() = default;
  EncoderPolicy(DeterministicEncoder e) { components.emplace_back(std::move(e), 1.0); }  // NOLINT
  bool deterministic() const { return components.size() == 1; }
  friend bool operator==(const EncoderPolicy&, const EncoderPolicy&) = default;
};

inline EncoderPolicy randomize_encoder(std::vector<std::pair<DeterministicEncoder, double>> mix) {
  if (mix.empty()) throw SchemaError("randomized encoder needs at least one component");
  Row w;
  for (const auto& c : mix) w.push_back(c.second);
  if (!row_is_stochastic(w)) throw SchemaError("mixture weights must be non-negative and sum to 1");
  EncoderPolicy p;
  p.components = std::move(mix);
  return p;
}

struct Decoder {
  enum class Kind { tau, table };
  Kind kind = Kind::tau;
  // Per stage: (y^1..y^n, m^1..m^n) -> estimate. Keys not listed decode to
  // default_estimate.
  std::vector<std::map<std::vector<int>, int>> stages;
  int default_estimate = 0;

  static Decoder tau() { return Decoder{}; }
  friend bool operator==(const Decoder&, const Decoder&) = default;
};

struct EncoderMarkovState {
  int x = 0;
  int b = 0;
  int mu = 0;
};

inline int structured_encode(const StructuredEncoder& enc, const EncoderMarkovState& st, int s) {
  if (s < 0 || s >= static_cast<int>(enc.stages.size())) throw MissingEntry("structured encoder has no stage " + std::to_string(s + 1));
  const auto& table = enc.stages[static_cast<std::size_t>(s)];
  auto it = table.find({st.x, st.b, st.mu});
  if (it == table.end()) {
    throw MissingEntry("structured encoder has no entry for (x=" + std::to_string(st.x) + ", b=" + std::to_string(st.b) +
                       ", mu=" + std::to_string(st.mu) + ") at stage " + std::to_string(s + 1));
  }
  return it->second;
}

// Memory that latches the first non-blank symbol: the memory alphabet is the
// channel output alphabet, `blank` included. Returns rules for stage 1 and
// for every later stage.
inline std::vector<IntTable> detection_memory_rule(int y_size, int blank = 0) {
  if (blank < 0 || blank >= y_size) throw SchemaError("blank symbol out of range");
  IntTable first(1, std::vector<int>(static_cast<std::size_t>(y_size)));
  for (int y = 0; y < y_size; ++y) first[0][static_cast<std::size_t>(y)] = y;
  IntTable later(static_cast<std::size_t>(y_size), std::vector<int>(static_cast<std::size_t>(y_size)));
  for (int m = 0; m < y_size; ++m) {
    for (int y = 0; y < y_size; ++y) later[static_cast<std::size_t>(m)][static_cast<std::size_t>(y)] = m == blank ? y : m;
  }
  return {first, later};
}

namespace detail {

inline int find_value(const std::vector<Pmf>& values, const Pmf& v, double tol = kDedupTolerance) {
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (values[k].size() == v.size() && linf_distance(values[k], v) <= tol) return static_cast<int>(k);
  }
  return -1;
}

inline void check_symbol(int z, int z_size) {
  if (z < 0 || z >= z_size) throw SchemaError("encoder symbol " + std::to_string(z) + " out of range");
}

inline int find_xi(const std::vector<XiState>& values, const XiState& xi) {
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (values[k].support() == xi.support() && xi_distance(values[k], xi) <= kDedupTolerance) return static_cast<int>(k);
  }
  return -1;
}

inline std::string join_ints(const std::vector<int>& v) {
  std::string s = "[";
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + std::to_string(v[k]);
  return s + "]";
}

}  // namespace detail

// Symbol table of a deterministic encoder on the observation-history tree.
// `schedule` supplies the receiver memory updates (needed for mu).
inline Emission compile_encoder(const DeterministicEncoder& enc, const Instance& in, const HistoryTree& tree,
                                const std::vector<MemoryStep>& schedule) {
  const int i = tree.encoder();
  const int nz = in.z_size(i);
  const int T = tree.stages();
  Emission em(static_cast<std::size_t>(T));
  for (int s = 0; s < T; ++s) em[static_cast<std::size_t>(s)].assign(tree.stage(s).size(), 0);

  auto stage_count_check = [&](std::size_t have) {
    if (static_cast<int>(have) < T) throw MissingEntry("encoder defines " + std::to_string(have) + " stages, need " + std::to_string(T));
  };

  if (const auto* c = std::get_if<ConstantEncoder>(&enc)) {
    detail::check_symbol(c->z, nz);
    for (auto& st : em) std::fill(st.begin(), st.end(), c->z);
    return em;
  }
  if (const auto* g = std::get_if<GeneralEncoder>(&enc)) {
    stage_count_check(g->stages.size());
    for (int s = 0; s < T; ++s) {
      for (std::size_t k = 0; k < tree.stage(s).size(); ++k) {
        GeneralEncoder::Key key{tree.path(s, static_cast<int>(k)), {}};
        if (s > 0) key.second = symbol_path(tree, em, s - 1, tree.node(s, static_cast<int>(k)).parent);
        auto it = g->stages[static_cast<std::size_t>(s)].find(key);
        if (it == g->stages[static_cast<std::size_t>(s)].end()) {
          throw MissingEntry("general encoder " + std::to_string(i) + " has no entry for x=" + detail::join_ints(key.first) +
                             " z=" + detail::join_ints(key.second) + " at stage " + std::to_string(s + 1));
        }
        detail::check_symbol(it->second, nz);
        em[static_cast<std::size_t>(s)][k] = it->second;
      }
    }
    return em;
  }
  if (const auto* st = std::get_if<StructuredEncoder>(&enc)) {
    stage_count_check(st->stages.size());
    std::vector<Pmf> mu_prev, mu_cur;
    for (int s = 0; s < T; ++s) {
      const auto& nodes = tree.stage(s);
      mu_cur.clear();
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (s == 0) {
          mu_cur.push_back(initial_memory_belief());
        } else {
          const auto p = static_cast<std::size_t>(nodes[k].parent);
          mu_cur.push_back(update_memory_belief(mu_prev[p], em[static_cast<std::size_t>(s - 1)][p], in.channel(i, s - 1),
                                                schedule[static_cast<std::size_t>(s - 1)]));
        }
        const int b = detail::find_value(st->b_values, nodes[k].belief);
        const int mu = s < static_cast<int>(st->mu_values.size()) ? detail::find_value(st->mu_values[static_cast<std::size_t>(s)], mu_cur.back()) : -1;
        if (b < 0 || mu < 0) {
          throw MissingEntry("structured encoder " + std::to_string(i) + " does not cover a reachable " +
                             (b < 0 ? std::string("a-belief") : std::string("memory belief")) + " at stage " + std::to_string(s + 1));
        }
        const int z = structured_encode(*st, {nodes[k].x, b, mu}, s);
        detail::check_symbol(z, nz);
        em[static_cast<std::size_t>(s)][k] = z;
      }
      mu_prev.swap(mu_cur);
    }
    return em;
  }
  if (const auto* bh = std::get_if<BeliefHistoryEncoder>(&enc)) {
    stage_count_check(bh->stages.size());
    for (int s = 0; s < T; ++s) {
      for (std::size_t k = 0; k < tree.stage(s).size(); ++k) {
        const auto& nd = tree.node(s, static_cast<int>(k));
        const int b = detail::find_value(bh->b_values, nd.belief);
        std::vector<int> zs;
        if (s > 0) zs = symbol_path(tree, em, s - 1, nd.parent);
        const auto& table = bh->stages[static_cast<std::size_t>(s)];
        auto it = b < 0 ? table.end() : table.find({nd.x, b, zs});
        if (it == table.end()) {
          throw MissingEntry("belief-history encoder " + std::to_string(i) + " has no entry for x=" + std::to_string(nd.x) +
                             " z=" + detail::join_ints(zs) + " at stage " + std::to_string(s + 1));
        }
        detail::check_symbol(it->second, nz);
        em[static_cast<std::size_t>(s)][k] = it->second;
      }
    }
    return em;
  }
  if (const auto* xs = std::get_if<XiStructuredEncoder>(&enc)) {
    if (xs->focus != i) throw SchemaError("information-state encoder was built for encoder " + std::to_string(xs->focus));
    stage_count_check(xs->stages.size());
    if (xs->xi_values.size() < xs->stages.size()) throw SchemaError("information-state encoder: missing state list");
    CanonicalBeliefSet bset;
    for (const auto& v : xs->b_values) bset.intern(v);
    std::vector<XiState> xi_prev, xi_cur;
    for (int s = 0; s < T; ++s) {
      const auto& nodes = tree.stage(s);
      xi_cur.assign(nodes.size(), XiState{});
      const auto& table = xs->stages[static_cast<std::size_t>(s)];
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        const XiState before = s == 0 ? XiState{} : xi_prev[static_cast<std::size_t>(nodes[k].parent)];
        const int id = detail::find_xi(xs->xi_values[static_cast<std::size_t>(s)], before);
        if (id < 0) throw MissingEntry("information-state encoder does not cover a reachable state at stage " + std::to_string(s + 1));
        // The partial encoder this state selects, on the predictive support.
        const XiState pred = predictive_xi(before, in, i, s, bset);
        std::vector<int> zs;
        for (const auto& e : pred.entries) {
          auto it = table.find({e.x, e.b, id});
          if (it == table.end()) {
            throw MissingEntry("information-state encoder has no entry for (x=" + std::to_string(e.x) + ", b=" + std::to_string(e.b) +
                               ") at stage " + std::to_string(s + 1));
          }
          zs.push_back(it->second);
        }
        const PartialEncoder w(pred.support(), zs);
        const auto b = bset.find(nodes[k].belief);
        if (!b) throw MissingEntry("information-state encoder does not cover a reachable a-belief at stage " + std::to_string(s + 1));
        const int z = w(nodes[k].x, *b);
        detail::check_symbol(z, nz);
        em[static_cast<std::size_t>(s)][k] = z;
        xi_cur[k] = condition_xi(pred, w, z);
      }
      xi_prev.swap(xi_cur);
    }
    return em;
  }
  const auto& rule = std::get<CoordinatorRule>(enc);
  if (rule.focus != i) throw SchemaError("coordinator rule was built for encoder " + std::to_string(rule.focus));
  stage_count_check(rule.stages.size());
  CanonicalBeliefSet bset;
  for (const auto& v : rule.b_values) bset.intern(v);
  // Information state after each stage, per node (it depends on the path's
  // symbols only, so nodes sharing a symbol prefix share it).
  std::vector<XiState> xi_prev, xi_cur;
  for (int s = 0; s < T; ++s) {
    const auto& nodes = tree.stage(s);
    xi_cur.assign(nodes.size(), XiState{});
    const auto& choices = rule.stages[static_cast<std::size_t>(s)];
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const XiState before = s == 0 ? XiState{} : xi_prev[static_cast<std::size_t>(nodes[k].parent)];
      const PartialEncoder* w = nullptr;
      for (const auto& [xi, cand] : choices) {
        if (xi.support() == before.support() && xi_distance(xi, before) <= kDedupTolerance) {
          w = &cand;
          break;
        }
      }
      if (!w) throw MissingEntry("coordinator rule has no partial encoder for a reachable state at stage " + std::to_string(s + 1));
      const auto b = bset.find(nodes[k].belief);
      if (!b) throw MissingEntry("coordinator rule does not cover a reachable a-belief at stage " + std::to_string(s + 1));
      const int z = (*w)(nodes[k].x, *b);
      detail::check_symbol(z, nz);
      em[static_cast<std::size_t>(s)][k] = z;
      xi_cur[k] = update_xi(before, z, *w, in, i, s, bset);
    }
    xi_prev.swap(xi_cur);
  }
  return em;
}

// Reads a symbol table back into the general (history-keyed) form.
inline GeneralEncoder general_from_emission(const HistoryTree& tree, const Emission& em) {
  GeneralEncoder g;
  g.stages.resize(static_cast<std::size_t>(tree.stages()));
  for (int s = 0; s < tree.stages(); ++s) {
    for (std::size_t k = 0; k < tree.stage(s).size(); ++k) {
      GeneralEncoder::Key key{tree.path(s, static_cast<int>(k)), {}};
      if (s > 0) key.second = symbol_path(tree, em, s - 1, tree.node(s, static_cast<int>(k)).parent);
      g.stages[static_cast<std::size_t>(s)][key] = em[static_cast<std::size_t>(s)][k];
    }
  }
  return g;
}

}  // namespace rtmt
