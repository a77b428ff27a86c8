#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rtmt/beliefs.hpp"
#include "rtmt/model.hpp"
#include "rtmt/pmf.hpp"

namespace rtmt {

struct HistoryNode {
  int x = 0;
  int parent = -1;
  std::vector<int> child;  // by next symbol, -1 when the extension has probability zero
  Row lik;                 // P(x_{1:s+1} | a) for each a
  double weight = 0.0;     // P(x_{1:s+1})
  int b = 0;               // id of P(A | x_{1:s+1}) in the tree's belief set
  Pmf belief;              // the recursion's value (grid-projected when a grid is set)
};

// Trie of the positive-probability observation histories of one encoder,
// annotated with the recursive posterior on A. Every deterministic encoder
// is a function on these nodes (its past symbols are a function of the
// history), so policies are compiled to per-node symbol tables against it.
class HistoryTree {
 public:
  HistoryTree(const Instance& in, int encoder, int stages = -1, double b_tolerance = kDedupTolerance,
              int b_grid = 0)
      : encoder_(encoder), x_size_(in.x_size(encoder)), beliefs_(b_tolerance) {
    beliefs_.set_grid(b_grid);
    if (stages < 0) stages = in.horizon();
    const auto na = static_cast<std::size_t>(in.a_size());
    const Row& prior = in.source.a_prior;
    nodes_.resize(static_cast<std::size_t>(stages));
    if (stages == 0) return;
    for (int x = 0; x < x_size_; ++x) {
      HistoryNode nd;
      nd.x = x;
      nd.lik.resize(na);
      for (std::size_t a = 0; a < na; ++a) {
        nd.lik[a] = in.init(encoder)[a][static_cast<std::size_t>(x)];
        nd.weight += prior[a] * nd.lik[a];
      }
      if (!(nd.weight > 0.0)) continue;
      nd.belief = beliefs_.project(init_a_belief(in, encoder, x));
      nd.b = beliefs_.intern(nd.belief);
      nodes_[0].push_back(std::move(nd));
    }
    for (int s = 0; s + 1 < stages; ++s) {
      const auto& kernels = in.kernels(encoder, s);
      auto& cur = nodes_[static_cast<std::size_t>(s)];
      auto& next = nodes_[static_cast<std::size_t>(s + 1)];
      for (std::size_t p = 0; p < cur.size(); ++p) {
        cur[p].child.assign(static_cast<std::size_t>(x_size_), -1);
        for (int x = 0; x < x_size_; ++x) {
          HistoryNode nd;
          nd.x = x;
          nd.parent = static_cast<int>(p);
          nd.lik.resize(na);
          for (std::size_t a = 0; a < na; ++a) {
            nd.lik[a] = cur[p].lik[a] * kernels[a][static_cast<std::size_t>(cur[p].x)][static_cast<std::size_t>(x)];
            nd.weight += prior[a] * nd.lik[a];
          }
          if (!(nd.weight > 0.0)) continue;
          nd.belief = beliefs_.project(update_a_belief(cur[p].belief, cur[p].x, x, kernels));
          nd.b = beliefs_.intern(nd.belief);
          cur[p].child[static_cast<std::size_t>(x)] = static_cast<int>(next.size());
          next.push_back(std::move(nd));
        }
      }
    }
    for (auto& nd : nodes_.back()) nd.child.assign(static_cast<std::size_t>(x_size_), -1);
  }

  int encoder() const { return encoder_; }
  int x_size() const { return x_size_; }
  int stages() const { return static_cast<int>(nodes_.size()); }
  const std::vector<HistoryNode>& stage(int s) const { return nodes_[static_cast<std::size_t>(s)]; }
  const HistoryNode& node(int s, int id) const { return nodes_[static_cast<std::size_t>(s)][static_cast<std::size_t>(id)]; }
  const CanonicalBeliefSet& beliefs() const { return beliefs_; }
  std::size_t node_count() const {
    std::size_t c = 0;
    for (const auto& st : nodes_) c += st.size();
    return c;
  }

  std::vector<int> path(int s, int id) const {
    std::vector<int> xs(static_cast<std::size_t>(s + 1));
    for (int k = s; k >= 0; --k) {
      const auto& nd = node(k, id);
      xs[static_cast<std::size_t>(k)] = nd.x;
      id = nd.parent;
    }
    return xs;
  }

  // Node for an observation prefix, or -1 if it has probability zero.
  int find(std::span<const int> xs) const {
    if (xs.empty() || static_cast<int>(xs.size()) > stages()) return -1;
    int id = -1;
    for (const auto& st : nodes_[0]) {
      if (st.x == xs[0]) id = static_cast<int>(&st - nodes_[0].data());
    }
    for (std::size_t k = 1; k < xs.size() && id >= 0; ++k) {
      if (xs[k] < 0 || xs[k] >= x_size_) return -1;
      id = node(static_cast<int>(k - 1), id).child[static_cast<std::size_t>(xs[k])];
    }
    return id;
  }

 private:
  int encoder_;
  int x_size_;
  std::vector<std::vector<HistoryNode>> nodes_;
  CanonicalBeliefSet beliefs_;
};

// Symbol emitted at each node: [stage][node] -> z.
using Emission = std::vector<std::vector<int>>;

// Symbols sent along the path to a node, stages 0..s.
inline std::vector<int> symbol_path(const HistoryTree& tree, const Emission& em, int s, int id) {
  std::vector<int> zs(static_cast<std::size_t>(s + 1));
  for (int k = s; k >= 0; --k) {
    zs[static_cast<std::size_t>(k)] = em[static_cast<std::size_t>(k)][static_cast<std::size_t>(id)];
    id = tree.node(k, id).parent;
  }
  return zs;
}

// Distribution of the receiver memory M_s at each node, i.e. the memory
// belief the encoder holds when it is at that node: [stage][node].
inline std::vector<std::vector<Pmf>> node_memory_beliefs(const Instance& in, const HistoryTree& tree, const Emission& em,
                                                         const std::vector<MemoryStep>& schedule, int upto = -1) {
  const int stages = upto < 0 ? tree.stages() : upto;
  std::vector<std::vector<Pmf>> mu(static_cast<std::size_t>(stages));
  const int i = tree.encoder();
  for (int s = 0; s < stages; ++s) {
    const auto& st = tree.stage(s);
    auto& out = mu[static_cast<std::size_t>(s)];
    out.reserve(st.size());
    for (const auto& nd : st) {
      if (s == 0) {
        out.push_back(initial_memory_belief());
      } else {
        const auto& prev = mu[static_cast<std::size_t>(s - 1)][static_cast<std::size_t>(nd.parent)];
        const int z = em[static_cast<std::size_t>(s - 1)][static_cast<std::size_t>(nd.parent)];
        out.push_back(update_memory_belief(prev, z, in.channel(i, s - 1), schedule[static_cast<std::size_t>(s - 1)]));
      }
    }
  }
  return mu;
}

}  // namespace rtmt
