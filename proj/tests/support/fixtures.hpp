#pragma once

#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rtmt/rtmt.hpp"

namespace fx {

using rtmt::Emission;
using rtmt::HistoryTree;
using rtmt::Instance;

// Symbol a table sends after an observation prefix.
inline int symbol_at(const HistoryTree& tree, const Emission& em, const std::vector<int>& prefix) {
  const int id = tree.find(prefix);
  if (id < 0) throw std::logic_error("prefix has probability zero");
  return em[prefix.size() - 1][static_cast<std::size_t>(id)];
}

// Information states of the focus encoder obtained with the library
// recursion, keyed by the symbols sent so far (stages 0..s). The table must
// depend on the history only through (x, b, past symbols).
struct XiWalk {
  rtmt::CanonicalBeliefSet beliefs;
  std::vector<std::map<std::vector<int>, rtmt::XiState>> after;
  std::vector<std::map<std::vector<int>, rtmt::PartialEncoder>> chosen;  // keyed by the symbols before the stage
};

inline XiWalk walk_xi(const Instance& in, int focus, const HistoryTree& tree, const Emission& em) {
  XiWalk out;
  const int T = tree.stages();
  out.after.resize(static_cast<std::size_t>(T));
  out.chosen.resize(static_cast<std::size_t>(T));
  for (int s = 0; s < T; ++s) {
    std::map<std::vector<int>, std::vector<int>> groups;
    for (int id = 0; id < static_cast<int>(tree.stage(s).size()); ++id) {
      auto zs = rtmt::symbol_path(tree, em, s, id);
      zs.pop_back();
      groups[zs].push_back(id);
    }
    for (const auto& [hist, ids] : groups) {
      const rtmt::XiState prev = s == 0 ? rtmt::XiState{} : out.after[static_cast<std::size_t>(s - 1)].at(hist);
      const auto pred = rtmt::predictive_xi(prev, in, focus, s, out.beliefs);
      std::map<std::pair<int, int>, int> table;
      for (int id : ids) {
        const auto& nd = tree.node(s, id);
        const auto b = out.beliefs.find(nd.belief);
        if (!b) throw std::logic_error("node belief missing from the predictive support");
        const int z = em[static_cast<std::size_t>(s)][static_cast<std::size_t>(id)];
        auto [it, fresh] = table.emplace(std::pair(nd.x, *b), z);
        if (!fresh && it->second != z) throw std::logic_error("table is not a function of (x, b, past symbols)");
      }
      std::vector<std::pair<int, int>> dom;
      std::vector<int> sym;
      for (const auto& [k, z] : table) {
        dom.push_back(k);
        sym.push_back(z);
      }
      const rtmt::PartialEncoder w(dom, sym);
      out.chosen[static_cast<std::size_t>(s)][hist] = w;
      for (int z : sym) {
        auto h = hist;
        h.push_back(z);
        if (!out.after[static_cast<std::size_t>(s)].count(h)) out.after[static_cast<std::size_t>(s)][h] = rtmt::condition_xi(pred, w, z);
      }
    }
  }
  return out;
}

// Two binary encoders, binary A, binary symbols, horizon T. Finite mode
// uses binary memories that keep the latest output; channels are binary
// symmetric with crossover eps (the identity when eps = 0). The distortion
// is the Hamming loss of guessing (x^1, x^2) with estimate 2 x^1 + x^2.
inline Instance binary_instance(int T, bool perfect = false, double eps = 0.1) {
  Instance in;
  in.alphabets.n_encoders = 2;
  in.alphabets.horizon = T;
  in.alphabets.a_size = 2;
  in.alphabets.x_sizes = {2, 2};
  in.alphabets.z_sizes = {2, 2};
  in.alphabets.y_sizes = {2, 2};
  if (!perfect) in.alphabets.m_sizes = {2, 2};
  in.source.a_prior = {0.4, 0.6};
  in.source.init = {{{0.8, 0.2}, {0.3, 0.7}}, {{0.6, 0.4}, {0.1, 0.9}}};
  const std::vector<rtmt::Matrix> k0 = {{{0.9, 0.1}, {0.2, 0.8}}, {{0.5, 0.5}, {0.3, 0.7}}};
  const std::vector<rtmt::Matrix> k1 = {{{0.7, 0.3}, {0.4, 0.6}}, {{0.2, 0.8}, {0.6, 0.4}}};
  if (T > 1) in.source.kernel = {{k0}, {k1}};
  else in.source.kernel = {{}, {}};
  const double e = perfect ? 0.0 : eps;
  const rtmt::Matrix bsc = {{1.0 - e, e}, {e, 1.0 - e}};
  in.channels.matrix = {{bsc}, {bsc}};
  in.receiver.mode = perfect ? rtmt::MemoryMode::perfect : rtmt::MemoryMode::finite;
  if (!perfect) {
    std::vector<rtmt::IntTable> rules;
    if (T > 1) rules.push_back({{0, 1}});
    if (T > 2) rules.push_back({{0, 1}, {0, 1}});
    in.receiver.memory_rules = {rules, rules};
  }
  in.distortion.estimate_size = 4;
  rtmt::Matrix rho;
  for (int x1 = 0; x1 < 2; ++x1) {
    for (int x2 = 0; x2 < 2; ++x2) {
      for (int a = 0; a < 2; ++a) {
        rtmt::Row r(4);
        for (int est = 0; est < 4; ++est) r[static_cast<std::size_t>(est)] = est == 2 * x1 + x2 ? 0.0 : 1.0;
        rho.push_back(r);
      }
    }
  }
  in.distortion.rho = {rho};
  return in;
}

// Index of an observation tuple among tuples of lengths 1..max, numbered by
// length first, oldest element most significant.
inline int lifted_index(int x_size, const std::vector<int>& tuple) {
  int offset = 0, block = 1;
  for (std::size_t l = 1; l < tuple.size(); ++l) {
    block *= x_size;
    offset += block;
  }
  int code = 0;
  for (int x : tuple) code = code * x_size + x;
  return offset + code;
}

inline std::int64_t base_code(const std::vector<int>& digits, int base) {
  std::int64_t v = 0;
  for (int d : digits) v = v * base + d;
  return v;
}

}  // namespace fx
