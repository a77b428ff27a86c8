#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "rtmt/beliefs.hpp"
#include "rtmt/errors.hpp"
#include "rtmt/history_tree.hpp"
#include "rtmt/model.hpp"
#include "rtmt/pmf.hpp"
#include "rtmt/tau.hpp"

namespace rtmt {

// Coordinator information state: a pmf over (observation, belief-id) pairs of
// the focus encoder given the common information. No entries means the
// stage-0 sentinel (nothing has happened yet).
struct XiEntry {
  int x = 0;
  int b = 0;
  double p = 0.0;
  friend bool operator==(const XiEntry&, const XiEntry&) = default;
};

struct XiState {
  std::vector<XiEntry> entries;  // sorted by (x, b)

  bool sentinel() const { return entries.empty(); }
  std::vector<std::pair<int, int>> support() const {
    std::vector<std::pair<int, int>> s;
    s.reserve(entries.size());
    for (const auto& e : entries) s.emplace_back(e.x, e.b);
    return s;
  }
  double mass() const {
    double m = 0.0;
    for (const auto& e : entries) m += e.p;
    return m;
  }
  friend bool operator==(const XiState&, const XiState&) = default;
};

inline double xi_distance(const XiState& u, const XiState& v) {
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < u.entries.size() || j < v.entries.size()) {
    if (j == v.entries.size() ||
        (i < u.entries.size() && std::pair(u.entries[i].x, u.entries[i].b) < std::pair(v.entries[j].x, v.entries[j].b))) {
      d = std::max(d, std::abs(u.entries[i++].p));
    } else if (i == u.entries.size() ||
               std::pair(v.entries[j].x, v.entries[j].b) < std::pair(u.entries[i].x, u.entries[i].b)) {
      d = std::max(d, std::abs(v.entries[j++].p));
    } else {
      d = std::max(d, std::abs(u.entries[i++].p - v.entries[j++].p));
    }
  }
  return d;
}

// Map from (observation, belief-id) to a channel symbol, defined on a finite
// domain (the support it is applied to).
class PartialEncoder {
 public:
  PartialEncoder() = default;
  PartialEncoder(std::vector<std::pair<int, int>> domain, std::vector<int> symbols)
      : domain_(std::move(domain)), symbols_(std::move(symbols)) {
    if (domain_.size() != symbols_.size()) throw SchemaError("partial encoder: domain and symbol counts differ");
    if (!std::is_sorted(domain_.begin(), domain_.end())) {
      std::vector<std::size_t> order(domain_.size());
      for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
      std::sort(order.begin(), order.end(), [&](auto l, auto r) { return domain_[l] < domain_[r]; });
      std::vector<std::pair<int, int>> d;
      std::vector<int> z;
      for (auto k : order) {
        d.push_back(domain_[k]);
        z.push_back(symbols_[k]);
      }
      domain_ = std::move(d);
      symbols_ = std::move(z);
    }
  }

  // Little-endian mixed radix: the first domain point is the least
  // significant digit, so id 0 maps everything to symbol 0.
  static PartialEncoder from_id(std::vector<std::pair<int, int>> domain, std::uint64_t id, int z_size) {
    std::vector<int> z(domain.size());
    for (auto& v : z) {
      v = static_cast<int>(id % static_cast<std::uint64_t>(z_size));
      id /= static_cast<std::uint64_t>(z_size);
    }
    return PartialEncoder(std::move(domain), std::move(z));
  }

  std::uint64_t id(int z_size) const {
    std::uint64_t v = 0;
    for (std::size_t k = symbols_.size(); k-- > 0;) v = v * static_cast<std::uint64_t>(z_size) + static_cast<std::uint64_t>(symbols_[k]);
    return v;
  }

  bool covers(int x, int b) const { return std::binary_search(domain_.begin(), domain_.end(), std::pair(x, b)); }

  int operator()(int x, int b) const {
    auto it = std::lower_bound(domain_.begin(), domain_.end(), std::pair(x, b));
    if (it == domain_.end() || *it != std::pair(x, b)) {
      throw MissingEntry("partial encoder has no entry for (x=" + std::to_string(x) + ", b=" + std::to_string(b) + ")");
    }
    return symbols_[static_cast<std::size_t>(it - domain_.begin())];
  }

  const std::vector<std::pair<int, int>>& domain() const { return domain_; }
  const std::vector<int>& symbols() const { return symbols_; }
  friend bool operator==(const PartialEncoder&, const PartialEncoder&) = default;

 private:
  std::vector<std::pair<int, int>> domain_;
  std::vector<int> symbols_;
};

inline void require_two_encoders(const Instance& in, int focus) {
  if (in.n() != 2) throw SchemaError("coordinator machinery is defined for two encoders");
  if (focus < 0 || focus > 1) throw SchemaError("focus encoder must be 0 or 1");
}

// Predictive law of (X_{s+1}, b_{s+1}) of the focus encoder given the state
// after stage s-1; `prev` must be the sentinel when s = 0. New beliefs are
// interned into `beliefs`.
inline XiState predictive_xi(const XiState& prev, const Instance& in, int focus, int s, CanonicalBeliefSet& beliefs) {
  std::map<std::pair<int, int>, double> acc;
  const int nx = in.x_size(focus);
  if (s == 0) {
    if (!prev.sentinel()) throw SchemaError("stage-1 predictive requires the sentinel state");
    for (int x = 0; x < nx; ++x) {
      double p = 0.0;
      for (int a = 0; a < in.a_size(); ++a) p += in.source.a_prior[static_cast<std::size_t>(a)] * in.init(focus)[static_cast<std::size_t>(a)][static_cast<std::size_t>(x)];
      if (!(p > 0.0)) continue;
      acc[{x, beliefs.intern(init_a_belief(in, focus, x))}] += p;
    }
  } else {
    if (prev.sentinel()) throw SchemaError("predictive after stage 1 requires a non-sentinel state");
    const auto& kernels = in.kernels(focus, s - 1);
    for (const auto& e : prev.entries) {
      const Pmf bv = beliefs[e.b];
      for (int x = 0; x < nx; ++x) {
        double pr = 0.0;
        for (std::size_t a = 0; a < bv.size(); ++a) pr += bv[a] * kernels[a][static_cast<std::size_t>(e.x)][static_cast<std::size_t>(x)];
        if (!(pr > 0.0)) continue;
        const int nb = beliefs.intern(update_a_belief(bv, e.x, x, kernels));
        acc[{x, nb}] += e.p * pr;
      }
    }
  }
  XiState out;
  double total = 0.0;
  for (const auto& [k, p] : acc) {
    if (p > 0.0) {
      out.entries.push_back({k.first, k.second, p});
      total += p;
    }
  }
  for (auto& e : out.entries) e.p /= total;
  return out;
}

inline double symbol_probability(const XiState& predictive, const PartialEncoder& w, int z) {
  double p = 0.0;
  for (const auto& e : predictive.entries) {
    if (w(e.x, e.b) == z) p += e.p;
  }
  return p;
}

// Conditions a predictive state on the focus encoder having sent z under w.
inline XiState condition_xi(const XiState& predictive, const PartialEncoder& w, int z) {
  XiState out;
  double total = 0.0;
  for (const auto& e : predictive.entries) {
    if (w(e.x, e.b) == z) {
      out.entries.push_back(e);
      total += e.p;
    }
  }
  if (!(total > 0.0)) throw ImpossibleEvidence("information-state update: symbol has probability zero under w");
  for (auto& e : out.entries) e.p /= total;
  return out;
}

// One step of the information-state recursion: predict, then condition on z.
inline XiState update_xi(const XiState& prev, int z, const PartialEncoder& w, const Instance& in, int focus, int s,
                         CanonicalBeliefSet& beliefs) {
  return condition_xi(predictive_xi(prev, in, focus, s, beliefs), w, z);
}

// P(z_{1:s+1} = h, X_{s+1} = x | a) for a fixed encoder over a noiseless
// channel, indexed [s][h][x * |A| + a]. Histories are base-|Z| numbers with
// the first symbol most significant.
struct HistoryLikelihoods {
  int encoder = 0;
  int x_size = 0;
  int a_size = 0;
  std::vector<std::map<std::int64_t, Row>> stages;
};

inline HistoryLikelihoods history_likelihoods(const Instance& in, const HistoryTree& tree, const Emission& em) {
  HistoryLikelihoods out;
  out.encoder = tree.encoder();
  out.x_size = tree.x_size();
  out.a_size = in.a_size();
  const std::int64_t nz = in.z_size(tree.encoder());
  out.stages.resize(static_cast<std::size_t>(tree.stages()));
  std::vector<std::int64_t> hist_prev, hist;
  for (int s = 0; s < tree.stages(); ++s) {
    const auto& st = tree.stage(s);
    hist.assign(st.size(), 0);
    auto& table = out.stages[static_cast<std::size_t>(s)];
    for (std::size_t k = 0; k < st.size(); ++k) {
      const std::int64_t base = s == 0 ? 0 : hist_prev[static_cast<std::size_t>(st[k].parent)] * nz;
      hist[k] = base + em[static_cast<std::size_t>(s)][k];
      auto& row = table[hist[k]];
      if (row.empty()) row.assign(static_cast<std::size_t>(out.x_size * out.a_size), 0.0);
      for (int a = 0; a < out.a_size; ++a) row[static_cast<std::size_t>(st[k].x * out.a_size + a)] += st[k].lik[static_cast<std::size_t>(a)];
    }
    hist_prev.swap(hist);
  }
  return out;
}

namespace detail {
// Unnormalized receiver slice q(x^1, x^2, a) = P(h, x_o | a) * sum_b b(a) xi(x_f, b).
inline void xi_slice(const XiState& xi, const Row& other_row, const Instance& in, int focus,
                     const CanonicalBeliefSet& beliefs, std::vector<double>& q) {
  const int other = 1 - focus;
  const int na = in.a_size();
  const int nf = in.x_size(focus), no = in.x_size(other);
  std::vector<double> fa(static_cast<std::size_t>(nf * na), 0.0);
  for (const auto& e : xi.entries) {
    const Pmf& b = beliefs[e.b];
    for (int a = 0; a < na; ++a) fa[static_cast<std::size_t>(e.x * na + a)] += b[static_cast<std::size_t>(a)] * e.p;
  }
  q.assign(static_cast<std::size_t>(in.joint_size()), 0.0);
  int xs[2];
  for (int xf = 0; xf < nf; ++xf) {
    for (int xo = 0; xo < no; ++xo) {
      xs[focus] = xf;
      xs[other] = xo;
      for (int a = 0; a < na; ++a) {
        q[static_cast<std::size_t>(in.joint_index(std::span<const int>(xs, 2), a))] =
            other_row[static_cast<std::size_t>(xo * na + a)] * fa[static_cast<std::size_t>(xf * na + a)];
      }
    }
  }
}
}  // namespace detail

// Receiver belief on (x^1, x^2, a) from the information state and the other
// encoder's symbol history h at stage s.
inline Pmf psi_from_xi(const XiState& xi, std::int64_t h, const HistoryLikelihoods& other, const Instance& in,
                       int focus, int s, const CanonicalBeliefSet& beliefs) {
  require_two_encoders(in, focus);
  const auto& table = other.stages.at(static_cast<std::size_t>(s));
  auto it = table.find(h);
  if (it == table.end()) throw ImpossibleEvidence("other encoder's symbol history has probability zero");
  std::vector<double> q;
  detail::xi_slice(xi, it->second, in, focus, beliefs, q);
  Pmf psi(std::move(q));
  psi.normalize("receiver belief from information state");
  return psi;
}

// Expected stage-s distortion given the information state when the receiver
// applies the tau rule to each of the other encoder's histories.
inline double coordinator_stage_cost(const XiState& xi, const HistoryLikelihoods& other, const Instance& in, int focus,
                                     int s, const CanonicalBeliefSet& beliefs) {
  require_two_encoders(in, focus);
  if (xi.sentinel()) return 0.0;
  const Matrix& rho = in.rho(s);
  std::vector<double> q, scratch;
  double total = 0.0;
  for (const auto& [h, row] : other.stages.at(static_cast<std::size_t>(s))) {
    detail::xi_slice(xi, row, in, focus, beliefs, q);
    total += tau_on_slice(q, rho, scratch).cost;
  }
  return total;
}

}  // namespace rtmt
