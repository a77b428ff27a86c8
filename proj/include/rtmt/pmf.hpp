#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rtmt/errors.hpp"

namespace rtmt {

// Input rows must sum to 1 within this tolerance.
inline constexpr double kRowTolerance = 1e-9;
// L-infinity tolerance under which two beliefs are the same point.
inline constexpr double kDedupTolerance = 1e-9;

// Probability mass function over an indexed finite set.
class Pmf {
 public:
  Pmf() = default;
  explicit Pmf(std::size_t n, double fill = 0.0) : w_(n, fill) {}
  Pmf(std::initializer_list<double> w) : w_(w) {}
  explicit Pmf(std::vector<double> w) : w_(std::move(w)) {}

  static Pmf point_mass(std::size_t n, std::size_t at) {
    Pmf p(n);
    p.w_.at(at) = 1.0;
    return p;
  }
  static Pmf uniform(std::size_t n) { return Pmf(n, 1.0 / static_cast<double>(n)); }

  std::size_t size() const { return w_.size(); }
  bool empty() const { return w_.empty(); }
  double& operator[](std::size_t i) { return w_[i]; }
  double operator[](std::size_t i) const { return w_[i]; }
  auto begin() { return w_.begin(); }
  auto end() { return w_.end(); }
  auto begin() const { return w_.begin(); }
  auto end() const { return w_.end(); }
  const std::vector<double>& weights() const { return w_; }

  double sum() const { return std::accumulate(w_.begin(), w_.end(), 0.0); }

  // Rescales to unit mass and returns the mass before rescaling.
  double normalize(std::string_view context = "pmf") {
    const double mass = sum();
    if (!(mass > 0.0)) {
      throw ImpossibleEvidence(std::string(context) + ": conditioning event has probability zero");
    }
    for (double& v : w_) v /= mass;
    return mass;
  }

  bool is_normalized(double tol = kRowTolerance) const {
    for (double v : w_) {
      if (!(v >= 0.0) || !std::isfinite(v)) return false;
    }
    return std::abs(sum() - 1.0) <= tol;
  }

  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(w_.begin(), w_.end()) - w_.begin());
  }

  friend bool operator==(const Pmf&, const Pmf&) = default;

 private:
  std::vector<double> w_;
};

// Missing coordinates of the shorter argument count as zero.
inline double linf_distance(const Pmf& p, const Pmf& q) {
  const std::size_t n = std::max(p.size(), q.size());
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = i < p.size() ? p[i] : 0.0;
    const double b = i < q.size() ? q[i] : 0.0;
    d = std::max(d, std::abs(a - b));
  }
  return d;
}

inline bool row_is_stochastic(const std::vector<double>& row, double tol = kRowTolerance) {
  double s = 0.0;
  for (double v : row) {
    if (!(v >= 0.0) || !std::isfinite(v)) return false;
    s += v;
  }
  return std::abs(s - 1.0) <= tol;
}

// Ordered, deduplicated list of beliefs with integer ids. Two beliefs within
// `tolerance` in L-infinity share an id; the first one interned is kept.
//
// Lookups window on the first coordinate so interning stays cheap when the
// set holds a few thousand points.
class CanonicalBeliefSet {
 public:
  explicit CanonicalBeliefSet(double tolerance = kDedupTolerance) : tol_(tolerance) {}

  // Optional projection of binary beliefs onto {k / resolution}. Only applies
  // to two-point beliefs; resolution 0 disables it.
  void set_grid(int resolution) { grid_ = resolution; }
  int grid() const { return grid_; }
  double tolerance() const { return tol_; }

  std::optional<int> find(const Pmf& b) const {
    const Pmf q = project(b);
    return find_exact(q);
  }

  int intern(const Pmf& b) {
    const Pmf q = project(b);
    if (auto id = find_exact(q)) return *id;
    const int id = static_cast<int>(values_.size());
    values_.push_back(q);
    index_.emplace(key_of(q), id);
    return id;
  }

  const Pmf& operator[](int id) const { return values_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return values_.size(); }
  const std::vector<Pmf>& values() const { return values_; }

  Pmf project(const Pmf& b) const {
    if (grid_ <= 0 || b.size() != 2) return b;
    const double g = static_cast<double>(grid_);
    const double b0 = std::round(b[0] * g) / g;
    return Pmf{b0, 1.0 - b0};
  }

 private:
  static double key_of(const Pmf& b) { return b.empty() ? 0.0 : b[0]; }

  std::optional<int> find_exact(const Pmf& q) const {
    const double k = key_of(q);
    for (auto it = index_.lower_bound(k - tol_); it != index_.end() && it->first <= k + tol_; ++it) {
      const Pmf& v = values_[static_cast<std::size_t>(it->second)];
      if (v.size() == q.size() && linf_distance(v, q) <= tol_) return it->second;
    }
    return std::nullopt;
  }

  double tol_;
  int grid_ = 0;
  std::vector<Pmf> values_;
  std::multimap<double, int> index_;
};

}  // namespace rtmt
