#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "rtmt/errors.hpp"
#include "rtmt/model.hpp"

namespace rtmt {

// Tuples of observations with lengths 1..max_len, numbered by length first
// and then base-|X| with the oldest element most significant.
class TupleSpace {
 public:
  TupleSpace(int x_size, int max_len) : x_size_(x_size), max_len_(max_len) {
    if (x_size < 1 || max_len < 1) throw SchemaError("tuple space needs x_size >= 1 and max_len >= 1");
    std::int64_t off = 0, block = 1;
    for (int l = 1; l <= max_len; ++l) {
      block *= x_size;
      offsets_.push_back(off);
      off += block;
      if (off > (std::int64_t{1} << 24)) throw SchemaError("lifted state space is too large");
    }
    size_ = off;
  }

  int size() const { return static_cast<int>(size_); }
  int max_len() const { return max_len_; }
  int count(int len) const {
    std::int64_t c = 1;
    for (int l = 0; l < len; ++l) c *= x_size_;
    return static_cast<int>(c);
  }

  int index(const std::vector<int>& t) const {
    std::int64_t code = 0;
    for (int x : t) code = code * x_size_ + x;
    return static_cast<int>(offsets_[t.size() - 1] + code);
  }

  // Index of the tuple of length len with base-|X| code `code`.
  int index(int len, int code) const { return static_cast<int>(offsets_[static_cast<std::size_t>(len - 1)] + code); }

  std::vector<int> decode(int idx) const {
    int len = max_len_;
    while (len > 1 && offsets_[static_cast<std::size_t>(len - 1)] > idx) --len;
    auto code = static_cast<std::int64_t>(idx) - offsets_[static_cast<std::size_t>(len - 1)];
    std::vector<int> t(static_cast<std::size_t>(len));
    for (int k = len - 1; k >= 0; --k) {
      t[static_cast<std::size_t>(k)] = static_cast<int>(code % x_size_);
      code /= x_size_;
    }
    return t;
  }

 private:
  int x_size_;
  int max_len_;
  std::vector<std::int64_t> offsets_;
  std::int64_t size_ = 0;
};

namespace detail {

inline Row point_mass_row(int size, int at) {
  Row r(static_cast<std::size_t>(size), 0.0);
  r[static_cast<std::size_t>(at)] = 1.0;
  return r;
}

// Distortion over lifted joint states: each encoder's lifted state is mapped
// to an original observation by `pick`, A is unchanged.
template <typename Pick>
Matrix remap_rho(const Instance& lifted_shape, const Instance& original, const Matrix& rho, Pick&& pick) {
  const int n = original.n();
  const int joints = lifted_shape.joint_size();
  Matrix out(static_cast<std::size_t>(joints));
  std::vector<int> xs(static_cast<std::size_t>(n)), orig(static_cast<std::size_t>(n));
  for (int j = 0; j < joints; ++j) {
    const int a = lifted_shape.split_joint(j, xs);
    for (int i = 0; i < n; ++i) orig[static_cast<std::size_t>(i)] = pick(i, xs[static_cast<std::size_t>(i)]);
    out[static_cast<std::size_t>(j)] = rho[static_cast<std::size_t>(original.joint_index(orig, a))];
  }
  return out;
}

}  // namespace detail

// Extended kernels of an order-k source: ext[i][s][a] has one row per window
// of the last min(s+1, k) observations (oldest most significant) and gives
// the law of X_{s+2}. The list repeats its last entry, which must have full
// windows.
using KthOrderKernels = std::vector<std::vector<std::vector<Matrix>>>;

// Kernels of a first-order instance in the extended form, for k = 1.
inline KthOrderKernels as_kth_order(const Instance& in) { return in.source.kernel; }

// First-order instance whose encoder-i observation is the window of the
// last min(t, k) observations. The original base kernels are ignored.
inline Instance lift_kth_order(const Instance& base, int k, const KthOrderKernels& ext) {
  if (k < 1) throw SchemaError("kth-order lift: k must be at least 1");
  const int n = base.n();
  const int T = base.horizon();
  if (static_cast<int>(ext.size()) != n) throw SchemaError("kth-order lift: need extended kernels for every encoder");
  Instance out = base;
  std::vector<TupleSpace> spaces;
  for (int i = 0; i < n; ++i) {
    const int nx = base.x_size(i);
    const TupleSpace sp(nx, k);
    spaces.push_back(sp);
    const int lifted = sp.size();
    out.alphabets.x_sizes[static_cast<std::size_t>(i)] = lifted;

    Matrix init(static_cast<std::size_t>(base.a_size()), Row(static_cast<std::size_t>(lifted), 0.0));
    for (int a = 0; a < base.a_size(); ++a) {
      for (int x = 0; x < nx; ++x) init[static_cast<std::size_t>(a)][static_cast<std::size_t>(sp.index(1, x))] = base.init(i)[static_cast<std::size_t>(a)][static_cast<std::size_t>(x)];
    }
    out.source.init[static_cast<std::size_t>(i)] = std::move(init);

    const auto& list = ext[static_cast<std::size_t>(i)];
    const int needed = std::min(k, T - 1);
    if (static_cast<int>(list.size()) < needed) {
      throw SchemaError("kth-order lift: encoder " + std::to_string(i) + " needs at least " + std::to_string(needed) + " kernel entries");
    }
    std::vector<std::vector<Matrix>> kernels;
    for (std::size_t s = 0; s < list.size(); ++s) {
      const int len = std::min(static_cast<int>(s) + 1, k);
      const int windows = sp.count(len);
      std::vector<Matrix> per_a;
      for (int a = 0; a < base.a_size(); ++a) {
        const std::string path = "kernel[" + std::to_string(i) + "][" + std::to_string(s) + "][" + std::to_string(a) + "]";
        if (list[s].size() != static_cast<std::size_t>(base.a_size())) throw SchemaError("kth-order lift: " + path + " missing");
        const Matrix& K = list[s][static_cast<std::size_t>(a)];
        if (static_cast<int>(K.size()) != windows) throw SchemaError("kth-order lift: " + path + " must have " + std::to_string(windows) + " rows");
        Matrix L(static_cast<std::size_t>(lifted));
        for (int st = 0; st < lifted; ++st) L[static_cast<std::size_t>(st)] = detail::point_mass_row(lifted, 0);
        for (int w = 0; w < windows; ++w) {
          const Row& row = K[static_cast<std::size_t>(w)];
          if (static_cast<int>(row.size()) != nx || !row_is_stochastic(row)) throw SchemaError("kth-order lift: " + path + " row not normalized");
          const int from = sp.index(len, w);
          // Next window: append, dropping the oldest once the window is full.
          const int keep = len < k ? w : w % sp.count(len - 1);
          const int next_len = std::min(len + 1, k);
          Row r(static_cast<std::size_t>(lifted), 0.0);
          for (int x = 0; x < nx; ++x) r[static_cast<std::size_t>(sp.index(next_len, keep * nx + x))] = row[static_cast<std::size_t>(x)];
          L[static_cast<std::size_t>(from)] = std::move(r);
        }
        per_a.push_back(std::move(L));
      }
      kernels.push_back(std::move(per_a));
    }
    out.source.kernel[static_cast<std::size_t>(i)] = std::move(kernels);
  }
  // The distortion reads the newest element of each window.
  for (auto& rho : out.distortion.rho) {
    rho = detail::remap_rho(out, base, rho, [&](int i, int st) { return spaces[static_cast<std::size_t>(i)].decode(st).back(); });
  }
  require_valid(out);
  return out;
}

// Finite-delay regrouping: horizon T + d, encoder-i observation at stage t
// (1-based) is (X_{max(1, t-d)}, ..., X_{min(t, T)}), and the distortion at
// stage t is rho_t applied to X_{t-d} for t > d, zero before.
inline Instance lift_delay(const Instance& in, int d) {
  if (d < 0) throw SchemaError("delay must be non-negative");
  if (d == 0) return in;
  require_valid(in);
  const int n = in.n();
  const int T = in.horizon();
  const int T2 = T + d;
  Instance out = in;
  out.alphabets.horizon = T2;
  auto window = [&](int t) { return std::pair(std::max(1, t - d), std::min(t, T)); };  // 1-based, inclusive
  std::vector<TupleSpace> spaces;
  for (int i = 0; i < n; ++i) {
    const int nx = in.x_size(i);
    const TupleSpace sp(nx, std::min(d + 1, T));
    spaces.push_back(sp);
    const int lifted = sp.size();
    out.alphabets.x_sizes[static_cast<std::size_t>(i)] = lifted;

    Matrix init(static_cast<std::size_t>(in.a_size()), Row(static_cast<std::size_t>(lifted), 0.0));
    for (int a = 0; a < in.a_size(); ++a) {
      for (int x = 0; x < nx; ++x) init[static_cast<std::size_t>(a)][static_cast<std::size_t>(sp.index(1, x))] = in.init(i)[static_cast<std::size_t>(a)][static_cast<std::size_t>(x)];
    }
    out.source.init[static_cast<std::size_t>(i)] = std::move(init);

    std::vector<std::vector<Matrix>> kernels;
    for (int t = 1; t < T2; ++t) {
      const auto [lo, hi] = window(t);
      const auto [lo2, hi2] = window(t + 1);
      const int len = hi - lo + 1;
      const int drop = lo2 - lo;
      const bool grow = hi2 > hi;
      std::vector<Matrix> per_a;
      for (int a = 0; a < in.a_size(); ++a) {
        Matrix L(static_cast<std::size_t>(lifted));
        for (int st = 0; st < lifted; ++st) L[static_cast<std::size_t>(st)] = detail::point_mass_row(lifted, 0);
        for (int code = 0; code < sp.count(len); ++code) {
          auto tuple = sp.decode(sp.index(len, code));
          std::vector<int> kept(tuple.begin() + drop, tuple.end());
          Row r(static_cast<std::size_t>(lifted), 0.0);
          if (grow) {
            const Row& row = in.kernel(i, t - 1, a)[static_cast<std::size_t>(tuple.back())];
            for (int x = 0; x < nx; ++x) {
              auto next = kept;
              next.push_back(x);
              r[static_cast<std::size_t>(sp.index(next))] += row[static_cast<std::size_t>(x)];
            }
          } else {
            r[static_cast<std::size_t>(sp.index(kept))] = 1.0;
          }
          L[static_cast<std::size_t>(sp.index(len, code))] = std::move(r);
        }
        per_a.push_back(std::move(L));
      }
      kernels.push_back(std::move(per_a));
    }
    out.source.kernel[static_cast<std::size_t>(i)] = std::move(kernels);
  }
  // A horizon-2 instance carries only the first memory rule; the longer
  // horizon needs one for later stages. It stores what the first rule would
  // store for the latest output.
  if (!in.perfect_memory() && T2 > 2) {
    for (int i = 0; i < n; ++i) {
      auto& rules = out.receiver.memory_rules[static_cast<std::size_t>(i)];
      if (rules.size() == 1) {
        rules.push_back(IntTable(static_cast<std::size_t>(in.alphabets.m_sizes[static_cast<std::size_t>(i)]), rules.front().front()));
      }
    }
  }
  out.distortion.rho.clear();
  for (int t = 1; t <= T2; ++t) {
    if (t <= d) {
      out.distortion.rho.push_back(Matrix(static_cast<std::size_t>(out.joint_size()), Row(static_cast<std::size_t>(in.estimate_size()), 0.0)));
    } else {
      out.distortion.rho.push_back(detail::remap_rho(out, in, in.rho(t - 1),
                                                     [&](int i, int st) { return spaces[static_cast<std::size_t>(i)].decode(st).front(); }));
    }
  }
  require_valid(out);
  return out;
}

// Point-to-point problem as a two-encoder instance: the second encoder
// observes a constant and sends a constant.
inline Instance degenerate_p4(const Instance& single) {
  if (single.n() != 1) throw SchemaError("point-to-point reduction expects a single-encoder instance");
  require_valid(single);
  Instance out = single;
  out.alphabets.n_encoders = 2;
  out.alphabets.x_sizes.push_back(1);
  out.alphabets.z_sizes.push_back(1);
  out.alphabets.y_sizes.push_back(1);
  out.alphabets.m_sizes.push_back(1);
  out.source.init.push_back(Matrix(static_cast<std::size_t>(single.a_size()), Row{1.0}));
  out.source.kernel.push_back(std::vector<std::vector<Matrix>>(
      single.horizon() > 1 ? 1 : 0, std::vector<Matrix>(static_cast<std::size_t>(single.a_size()), Matrix{Row{1.0}})));
  out.channels.matrix.push_back({Matrix{Row{1.0}}});
  if (!out.channels.noiseless.empty()) out.channels.noiseless.push_back(true);
  if (!single.perfect_memory()) {
    std::vector<IntTable> rules;
    if (single.horizon() >= 2) rules.push_back(IntTable{{0}});
    if (single.horizon() >= 3) rules.push_back(IntTable{{0}});
    out.receiver.memory_rules.push_back(std::move(rules));
  }
  // Joint index (x, 0, a) equals (x, a): distortion tables carry over.
  require_valid(out);
  return out;
}

// Encoder i additionally observes A: its observation becomes (x, a),
// numbered x * |A| + a. Rows for pairs inconsistent with the true A are
// unreachable and set to a point mass on state 0.
inline Instance observe_a_at_encoder(const Instance& in, int i) {
  require_valid(in);
  if (i < 0 || i >= in.n()) throw SchemaError("encoder index out of range");
  const int na = in.a_size();
  const int nx = in.x_size(i);
  const int lifted = nx * na;
  Instance out = in;
  out.alphabets.x_sizes[static_cast<std::size_t>(i)] = lifted;
  Matrix init(static_cast<std::size_t>(na), Row(static_cast<std::size_t>(lifted), 0.0));
  for (int a = 0; a < na; ++a) {
    for (int x = 0; x < nx; ++x) init[static_cast<std::size_t>(a)][static_cast<std::size_t>(x * na + a)] = in.init(i)[static_cast<std::size_t>(a)][static_cast<std::size_t>(x)];
  }
  out.source.init[static_cast<std::size_t>(i)] = std::move(init);
  auto& kernels = out.source.kernel[static_cast<std::size_t>(i)];
  for (std::size_t s = 0; s < kernels.size(); ++s) {
    for (int a = 0; a < na; ++a) {
      const Matrix& K = in.source.kernel[static_cast<std::size_t>(i)][s][static_cast<std::size_t>(a)];
      Matrix L(static_cast<std::size_t>(lifted), detail::point_mass_row(lifted, 0));
      for (int x = 0; x < nx; ++x) {
        Row r(static_cast<std::size_t>(lifted), 0.0);
        for (int x2 = 0; x2 < nx; ++x2) r[static_cast<std::size_t>(x2 * na + a)] = K[static_cast<std::size_t>(x)][static_cast<std::size_t>(x2)];
        L[static_cast<std::size_t>(x * na + a)] = std::move(r);
      }
      kernels[s][static_cast<std::size_t>(a)] = std::move(L);
    }
  }
  for (auto& rho : out.distortion.rho) {
    rho = detail::remap_rho(out, in, rho, [&](int e, int st) { return e == i ? st / na : st; });
  }
  require_valid(out);
  return out;
}

}  // namespace rtmt
