#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "rtmt/engine.hpp"
#include "rtmt/errors.hpp"
#include "rtmt/model.hpp"
#include "rtmt/pmf.hpp"

namespace rtmt {

// What the receiver has seen at stage s: this stage's channel outputs and
// the memories before the stage, one per encoder.
struct ReceiverEvidence {
  std::vector<int> y;
  std::vector<std::int64_t> m;
};

// P(X_s = (x^1..x^n), A = a | evidence) by forward enumeration of every
// (A, mixture draw, observation path, channel outputs) joint outcome; memories
// follow deterministically. Indexed like the distortion rows.
inline Pmf receiver_belief_direct(const Assembly& as, int s, const ReceiverEvidence& ev, double budget = kDefaultAtomBudget) {
  const CompiledAssembly ca(as);
  const Instance& in = as.instance;
  const int n = in.n();
  if (s < 0 || s >= in.horizon()) throw SchemaError("stage out of range");
  if (static_cast<int>(ev.y.size()) != n || static_cast<int>(ev.m.size()) != n) throw SchemaError("evidence needs one (y, m) per encoder");

  Pmf out(static_cast<std::size_t>(in.joint_size()), 0.0);
  std::vector<int> comp(static_cast<std::size_t>(n), 0);
  std::vector<std::vector<int>> xs(static_cast<std::size_t>(n));
  std::vector<int> node(static_cast<std::size_t>(n), -1);
  std::vector<std::int64_t> mem(static_cast<std::size_t>(n), 0);
  double atoms = 0.0;
  int a = 0;

  // Stage-major over encoders: at (stage t, encoder i) draw x, emit z, draw y.
  std::function<void(int, int, double)> step = [&](int t, int i, double w) {
    if (i == n) {
      if (t == s) {
        std::vector<int> last(static_cast<std::size_t>(n));
        for (int e = 0; e < n; ++e) last[static_cast<std::size_t>(e)] = xs[static_cast<std::size_t>(e)].back();
        out[static_cast<std::size_t>(in.joint_index(last, a))] += w;
        return;
      }
      step(t + 1, 0, w);
      return;
    }
    if (++atoms > budget) throw BudgetExceeded("direct enumeration atoms", atoms, budget);
    const auto ii = static_cast<std::size_t>(i);
    const int nx = in.x_size(i);
    const auto& tree = ca.tree(i);
    const auto& em = ca.components(i)[static_cast<std::size_t>(comp[ii])].first;
    for (int x = 0; x < nx; ++x) {
      const double px = t == 0 ? in.init(i)[static_cast<std::size_t>(a)][static_cast<std::size_t>(x)]
                               : in.kernel(i, t - 1, a)[static_cast<std::size_t>(xs[ii].back())][static_cast<std::size_t>(x)];
      if (!(px > 0.0)) continue;
      xs[ii].push_back(x);
      const int prev_node = node[ii];
      node[ii] = tree.find(xs[ii]);
      const int z = em[static_cast<std::size_t>(t)][static_cast<std::size_t>(node[ii])];
      const Matrix& ch = in.channel(i, t);
      const std::int64_t m_before = mem[ii];
      for (int y = 0; y < in.y_size(i); ++y) {
        const double py = ch[static_cast<std::size_t>(z)][static_cast<std::size_t>(y)];
        if (!(py > 0.0)) continue;
        if (t == s) {
          if (y != ev.y[ii] || m_before != ev.m[ii]) continue;
          step(t, i + 1, w * px * py);
        } else {
          mem[ii] = ca.schedule(i)[static_cast<std::size_t>(t)](m_before, y);
          step(t, i + 1, w * px * py);
          mem[ii] = m_before;
        }
      }
      node[ii] = prev_node;
      xs[ii].pop_back();
    }
  };

  // Mixture draws: every tuple of components.
  std::function<void(int, double)> draw = [&](int i, double w) {
    if (i == n) {
      for (a = 0; a < in.a_size(); ++a) {
        const double pa = in.source.a_prior[static_cast<std::size_t>(a)];
        if (pa > 0.0) step(0, 0, w * pa);
      }
      return;
    }
    const auto& comps = ca.components(i);
    for (std::size_t c = 0; c < comps.size(); ++c) {
      if (!(comps[c].second > 0.0)) continue;
      comp[static_cast<std::size_t>(i)] = static_cast<int>(c);
      draw(i + 1, w * comps[c].second);
    }
  };
  draw(0, 1.0);
  out.normalize("receiver evidence");
  return out;
}

}  // namespace rtmt
