#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <tuple>
#include <vector>

#include "rtmt/beliefs.hpp"
#include "rtmt/errors.hpp"
#include "rtmt/history_tree.hpp"
#include "rtmt/model.hpp"
#include "rtmt/policies.hpp"

namespace rtmt {

// Decision-relevant arguments of one stage for a given prefix of the
// encoder: node_key[k] is the table argument the node maps to, numbered
// 0..key_count-1 in sorted key order.
struct StageDomain {
  std::vector<int> node_key;
  int key_count = 0;
};

namespace detail {
template <typename K>
StageDomain number_keys(const std::vector<K>& keys) {
  std::map<K, int> ids;
  for (const auto& k : keys) ids.emplace(k, 0);
  int next = 0;
  for (auto& [k, v] : ids) v = next++;
  StageDomain d;
  d.key_count = next;
  for (const auto& k : keys) d.node_key.push_back(ids.at(k));
  return d;
}
}  // namespace detail

// General (history) encoders: every reachable history is its own argument,
// whatever was sent before.
class GeneralDomain {
 public:
  explicit GeneralDomain(const HistoryTree& tree) : tree_(&tree) {}
  StageDomain operator()(int s, const Emission&) {
    StageDomain d;
    d.key_count = static_cast<int>(tree_->stage(s).size());
    d.node_key.resize(static_cast<std::size_t>(d.key_count));
    for (int k = 0; k < d.key_count; ++k) d.node_key[static_cast<std::size_t>(k)] = k;
    return d;
  }

 private:
  const HistoryTree* tree_;
};

// Arguments (x, b, mu): mu depends on the symbols chosen at earlier stages,
// so the domain is recomputed per prefix.
class StructuredDomain {
 public:
  StructuredDomain(const Instance& in, const HistoryTree& tree, const std::vector<MemoryStep>& schedule)
      : in_(&in), tree_(&tree), schedule_(&schedule), mu_(static_cast<std::size_t>(tree.stages())),
        mu_sets_(static_cast<std::size_t>(tree.stages())) {}

  StageDomain operator()(int s, const Emission& em) {
    const auto& nodes = tree_->stage(s);
    auto& mu = mu_[static_cast<std::size_t>(s)];
    mu.clear();
    std::vector<std::array<int, 3>> keys(nodes.size());
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (s == 0) {
        mu.push_back(initial_memory_belief());
      } else {
        const auto p = static_cast<std::size_t>(nodes[k].parent);
        mu.push_back(update_memory_belief(mu_[static_cast<std::size_t>(s - 1)][p], em[static_cast<std::size_t>(s - 1)][p],
                                          in_->channel(tree_->encoder(), s - 1), (*schedule_)[static_cast<std::size_t>(s - 1)]));
      }
      keys[k] = {nodes[k].x, nodes[k].b, mu_sets_[static_cast<std::size_t>(s)].intern(mu.back())};
    }
    return detail::number_keys(keys);
  }

 private:
  const Instance* in_;
  const HistoryTree* tree_;
  const std::vector<MemoryStep>* schedule_;
  std::vector<std::vector<Pmf>> mu_;
  std::vector<CanonicalBeliefSet> mu_sets_;
};

// Arguments (x, b, z_{1:s}) for noiseless channels with perfect memory.
class BeliefHistoryDomain {
 public:
  BeliefHistoryDomain(const HistoryTree& tree, int z_size)
      : tree_(&tree), z_size_(z_size), hist_(static_cast<std::size_t>(tree.stages())) {}

  StageDomain operator()(int s, const Emission& em) {
    const auto& nodes = tree_->stage(s);
    auto& hist = hist_[static_cast<std::size_t>(s)];
    hist.assign(nodes.size(), 0);
    std::vector<std::tuple<std::int64_t, int, int>> keys(nodes.size());
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (s > 0) {
        const auto p = static_cast<std::size_t>(nodes[k].parent);
        hist[k] = hist_[static_cast<std::size_t>(s - 1)][p] * z_size_ + em[static_cast<std::size_t>(s - 1)][p];
      }
      keys[k] = {hist[k], nodes[k].x, nodes[k].b};
    }
    return detail::number_keys(keys);
  }

 private:
  const HistoryTree* tree_;
  int z_size_;
  std::vector<std::vector<std::int64_t>> hist_;
};

namespace detail {

template <typename Domain, typename Visit>
void enumerate_rec(int s, int T, int z_size, Domain& domain, Emission& em, Visit& visit) {
  if (s == T) {
    visit(static_cast<const Emission&>(em));
    return;
  }
  const StageDomain d = domain(s, em);
  std::vector<int> digits(static_cast<std::size_t>(d.key_count), 0);
  auto& row = em[static_cast<std::size_t>(s)];
  while (true) {
    for (std::size_t k = 0; k < row.size(); ++k) row[k] = digits[static_cast<std::size_t>(d.node_key[k])];
    enumerate_rec(s + 1, T, z_size, domain, em, visit);
    std::size_t pos = 0;
    while (pos < digits.size() && ++digits[pos] == z_size) digits[pos++] = 0;
    if (pos == digits.size()) break;
  }
}

template <typename Domain>
void count_rec(int s, int T, int z_size, Domain& domain, Emission& em, double limit, double& count) {
  const StageDomain d = domain(s, em);
  if (s == T - 1) {
    count += std::pow(static_cast<double>(z_size), d.key_count);
    return;
  }
  std::vector<int> digits(static_cast<std::size_t>(d.key_count), 0);
  auto& row = em[static_cast<std::size_t>(s)];
  while (count <= limit) {
    for (std::size_t k = 0; k < row.size(); ++k) row[k] = digits[static_cast<std::size_t>(d.node_key[k])];
    count_rec(s + 1, T, z_size, domain, em, limit, count);
    std::size_t pos = 0;
    while (pos < digits.size() && ++digits[pos] == z_size) digits[pos++] = 0;
    if (pos == digits.size()) break;
  }
}

inline Emission empty_emission(const HistoryTree& tree) {
  Emission em(static_cast<std::size_t>(tree.stages()));
  for (int s = 0; s < tree.stages(); ++s) em[static_cast<std::size_t>(s)].assign(tree.stage(s).size(), 0);
  return em;
}

}  // namespace detail

// Visits every table of the class over reachable arguments, depth first,
// stage 1 outermost; within a stage the first argument varies fastest.
template <typename Domain, typename Visit>
void enumerate_tables(const HistoryTree& tree, int z_size, Domain& domain, Visit&& visit) {
  Emission em = detail::empty_emission(tree);
  if (tree.stages() == 0) {
    visit(static_cast<const Emission&>(em));
    return;
  }
  detail::enumerate_rec(0, tree.stages(), z_size, domain, em, visit);
}

// Number of tables in the class; stops early once the count exceeds `limit`.
template <typename Domain>
double count_tables(const HistoryTree& tree, int z_size, Domain& domain, double limit) {
  if (tree.stages() == 0) return 1.0;
  Emission em = detail::empty_emission(tree);
  double count = 0.0;
  detail::count_rec(0, tree.stages(), z_size, domain, em, limit, count);
  return count;
}

// Closed form for general encoders: prod_s |Z|^(reachable histories at s).
inline double general_strategy_count(const HistoryTree& tree, int z_size) {
  double c = 1.0;
  for (int s = 0; s < tree.stages(); ++s) c *= std::pow(static_cast<double>(z_size), static_cast<double>(tree.stage(s).size()));
  return c;
}

// Structured-form table equivalent to a symbol table, or SchemaError if two
// nodes with the same (x, b, mu) send different symbols.
inline StructuredEncoder structured_from_emission(const Instance& in, const HistoryTree& tree, const Emission& em,
                                                  const std::vector<MemoryStep>& schedule) {
  StructuredEncoder out;
  out.b_values = tree.beliefs().values();
  const auto mu = node_memory_beliefs(in, tree, em, schedule);
  out.mu_values.resize(static_cast<std::size_t>(tree.stages()));
  out.stages.resize(static_cast<std::size_t>(tree.stages()));
  for (int s = 0; s < tree.stages(); ++s) {
    CanonicalBeliefSet set;
    for (std::size_t k = 0; k < tree.stage(s).size(); ++k) {
      const auto& nd = tree.stage(s)[k];
      const int m = set.intern(mu[static_cast<std::size_t>(s)][k]);
      const StructuredEncoder::Key key{nd.x, nd.b, m};
      const int z = em[static_cast<std::size_t>(s)][k];
      auto [it, fresh] = out.stages[static_cast<std::size_t>(s)].emplace(key, z);
      if (!fresh && it->second != z) throw SchemaError("symbol table is not a function of (x, b, mu)");
    }
    out.mu_values[static_cast<std::size_t>(s)] = set.values();
  }
  return out;
}

inline BeliefHistoryEncoder belief_history_from_emission(const HistoryTree& tree, const Emission& em) {
  BeliefHistoryEncoder out;
  out.b_values = tree.beliefs().values();
  out.stages.resize(static_cast<std::size_t>(tree.stages()));
  for (int s = 0; s < tree.stages(); ++s) {
    for (std::size_t k = 0; k < tree.stage(s).size(); ++k) {
      const auto& nd = tree.stage(s)[k];
      std::vector<int> zs;
      if (s > 0) zs = symbol_path(tree, em, s - 1, nd.parent);
      const BeliefHistoryEncoder::Key key{nd.x, nd.b, zs};
      const int z = em[static_cast<std::size_t>(s)][k];
      auto [it, fresh] = out.stages[static_cast<std::size_t>(s)].emplace(key, z);
      if (!fresh && it->second != z) throw SchemaError("symbol table is not a function of (x, b, past symbols)");
    }
  }
  return out;
}

// All memory-rule lists for one encoder over the stages whose output is
// read by a decoder (the rule building M_T is never used). Perfect-memory
// instances have a single, empty, choice.
inline std::vector<std::vector<IntTable>> enumerate_memory_rules(const Instance& in, int i, double limit) {
  std::vector<std::vector<IntTable>> out;
  if (in.perfect_memory()) {
    out.emplace_back();
    return out;
  }
  const int T = in.horizon();
  const int ny = in.y_size(i);
  const int nm = in.alphabets.m_sizes[static_cast<std::size_t>(i)];
  std::vector<int> cells;  // entries per rule
  for (int s = 0; s + 1 < T; ++s) cells.push_back((s == 0 ? 1 : nm) * ny);
  double total = 1.0;
  for (int c : cells) total *= std::pow(static_cast<double>(nm), c);
  if (total > limit) throw BudgetExceeded("memory rules of encoder " + std::to_string(i), total, limit);
  int n_cells = 0;
  for (int c : cells) n_cells += c;
  std::vector<int> digits(static_cast<std::size_t>(n_cells), 0);
  while (true) {
    std::vector<IntTable> rules;
    std::size_t pos = 0;
    for (std::size_t s = 0; s < cells.size(); ++s) {
      const int rows = s == 0 ? 1 : nm;
      IntTable t(static_cast<std::size_t>(rows), std::vector<int>(static_cast<std::size_t>(ny)));
      for (int r = 0; r < rows; ++r) {
        for (int y = 0; y < ny; ++y) t[static_cast<std::size_t>(r)][static_cast<std::size_t>(y)] = digits[pos++];
      }
      rules.push_back(std::move(t));
    }
    out.push_back(std::move(rules));
    std::size_t d = 0;
    while (d < digits.size() && ++digits[d] == nm) digits[d++] = 0;
    if (d == digits.size()) break;
  }
  return out;
}

}  // namespace rtmt
