#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rtmt/errors.hpp"
#include "rtmt/pmf.hpp"

namespace rtmt {

using Row = std::vector<double>;
using Matrix = std::vector<Row>;
using IntTable = std::vector<std::vector<int>>;

// Stage indices are 0-based throughout: stage s carries X_{s+1}, Z_{s+1},
// Y_{s+1} and the decoder at stage s reads M_s (M_0 is the blank memory).

struct Alphabets {
  int n_encoders = 0;
  std::vector<int> x_sizes;
  int a_size = 0;
  std::vector<int> z_sizes;
  std::vector<int> y_sizes;
  std::vector<int> m_sizes;  // unused by perfect-memory receivers
  int horizon = 0;

  friend bool operator==(const Alphabets&, const Alphabets&) = default;
};

struct SourceModel {
  Row a_prior;                                     // [a]
  std::vector<Matrix> init;                        // [i][a][x]
  std::vector<std::vector<std::vector<Matrix>>> kernel;  // [i][s][a][x][x'], transition s -> s+1

  friend bool operator==(const SourceModel&, const SourceModel&) = default;
};

struct ChannelModel {
  std::vector<std::vector<Matrix>> matrix;  // [i][s][z][y]
  std::vector<bool> noiseless;              // declared flags; empty when not declared

  friend bool operator==(const ChannelModel&, const ChannelModel&) = default;
};

enum class MemoryMode { finite, perfect };

struct ReceiverSpec {
  MemoryMode mode = MemoryMode::finite;
  // [i][s][m_prev][y] -> m. Entry s builds M_{s+1}; entry 0 has a single row
  // (the blank memory).
  std::vector<std::vector<IntTable>> memory_rules;

  friend bool operator==(const ReceiverSpec&, const ReceiverSpec&) = default;
};

struct DistortionSpec {
  int estimate_size = 0;
  // [s][joint state][estimate]; joint states are (x^1, ..., x^n, a) in
  // row-major order, a varying fastest.
  std::vector<Matrix> rho;

  friend bool operator==(const DistortionSpec&, const DistortionSpec&) = default;
};

namespace detail {
// Time-indexed lists repeat their last entry past the end.
template <typename T>
const T& pick_stage(const std::vector<T>& list, int s) {
  if (list.empty()) throw SchemaError("time-indexed list is empty");
  const auto idx = std::min<std::size_t>(static_cast<std::size_t>(std::max(s, 0)), list.size() - 1);
  return list[idx];
}
}  // namespace detail

struct Instance {
  Alphabets alphabets;
  SourceModel source;
  ChannelModel channels;
  ReceiverSpec receiver;
  DistortionSpec distortion;

  friend bool operator==(const Instance&, const Instance&) = default;

  int n() const { return alphabets.n_encoders; }
  int horizon() const { return alphabets.horizon; }
  int a_size() const { return alphabets.a_size; }
  int x_size(int i) const { return alphabets.x_sizes[static_cast<std::size_t>(i)]; }
  int z_size(int i) const { return alphabets.z_sizes[static_cast<std::size_t>(i)]; }
  int y_size(int i) const { return alphabets.y_sizes[static_cast<std::size_t>(i)]; }
  int estimate_size() const { return distortion.estimate_size; }
  bool perfect_memory() const { return receiver.mode == MemoryMode::perfect; }

  const Matrix& init(int i) const { return source.init[static_cast<std::size_t>(i)]; }
  // Per-a transition matrices P(X_{s+2} = . | X_{s+1} = ., A = a) for encoder i.
  const std::vector<Matrix>& kernels(int i, int s) const {
    return detail::pick_stage(source.kernel[static_cast<std::size_t>(i)], s);
  }
  const Matrix& kernel(int i, int s, int a) const { return kernels(i, s)[static_cast<std::size_t>(a)]; }
  const Matrix& channel(int i, int s) const {
    return detail::pick_stage(channels.matrix[static_cast<std::size_t>(i)], s);
  }
  const IntTable& memory_rule(int i, int s) const {
    const auto& list = receiver.memory_rules[static_cast<std::size_t>(i)];
    if (s == 0 || list.size() == 1) return list.at(0);
    return detail::pick_stage(list, s);
  }
  const Matrix& rho(int s) const { return detail::pick_stage(distortion.rho, s); }

  // Size of the memory alphabet holding M_s.
  std::int64_t memory_size(int i, int s) const {
    if (s == 0) return 1;
    if (perfect_memory()) {
      std::int64_t m = 1;
      for (int k = 0; k < s; ++k) m *= y_size(i);
      return m;
    }
    return alphabets.m_sizes[static_cast<std::size_t>(i)];
  }

  int joint_size() const {
    int n_states = a_size();
    for (int v : alphabets.x_sizes) n_states *= v;
    return n_states;
  }
  int joint_index(std::span<const int> xs, int a) const {
    int idx = 0;
    for (int i = 0; i < n(); ++i) idx = idx * x_size(i) + xs[static_cast<std::size_t>(i)];
    return idx * a_size() + a;
  }
  // Inverse of joint_index; xs must have n() slots.
  int split_joint(int idx, std::span<int> xs) const {
    const int a = idx % a_size();
    idx /= a_size();
    for (int i = n() - 1; i >= 0; --i) {
      xs[static_cast<std::size_t>(i)] = idx % x_size(i);
      idx /= x_size(i);
    }
    return a;
  }

  bool channel_is_identity(int i) const {
    if (y_size(i) != z_size(i)) return false;
    for (const auto& m : channels.matrix[static_cast<std::size_t>(i)]) {
      for (int z = 0; z < z_size(i); ++z) {
        for (int y = 0; y < y_size(i); ++y) {
          if (m[static_cast<std::size_t>(z)][static_cast<std::size_t>(y)] != (z == y ? 1.0 : 0.0)) return false;
        }
      }
    }
    return true;
  }
  bool noiseless() const {
    for (int i = 0; i < n(); ++i) {
      if (!channel_is_identity(i)) return false;
    }
    return true;
  }
};

inline Matrix identity_matrix(int n) {
  Matrix m(static_cast<std::size_t>(n), Row(static_cast<std::size_t>(n), 0.0));
  for (int k = 0; k < n; ++k) m[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)] = 1.0;
  return m;
}

struct Violation {
  std::string path;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::string to_string() const {
    std::ostringstream os;
    for (const auto& v : violations) os << v.path << ": " << v.message << "\n";
    return os.str();
  }
};

namespace detail {

inline std::string idx_path(const std::string& base, std::initializer_list<std::size_t> idx) {
  std::string p = base;
  for (auto k : idx) p += "[" + std::to_string(k) + "]";
  return p;
}

class Validator {
 public:
  explicit Validator(const Instance& inst) : in_(inst) {}

  ValidationReport run() {
    if (!alphabets()) return std::move(report_);
    source();
    channels();
    receiver();
    distortion();
    return std::move(report_);
  }

 private:
  void fail(std::string path, std::string msg) { report_.violations.push_back({std::move(path), std::move(msg)}); }

  bool alphabets() {
    const auto& al = in_.alphabets;
    const std::size_t before = report_.violations.size();
    if (al.n_encoders < 1) fail("alphabets.n_encoders", "must be at least 1");
    if (al.a_size < 1) fail("alphabets.a_size", "must be at least 1");
    if (al.horizon < 1) fail("alphabets.horizon", "must be at least 1");
    const auto n = static_cast<std::size_t>(std::max(al.n_encoders, 0));
    auto sizes = [&](const std::vector<int>& v, const char* name, bool required) {
      if (!required) return;
      if (v.size() != n) {
        fail(std::string("alphabets.") + name, "expected " + std::to_string(n) + " entries");
        return;
      }
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] < 1) fail(idx_path(std::string("alphabets.") + name, {i}), "must be at least 1");
      }
    };
    sizes(al.x_sizes, "x_sizes", true);
    sizes(al.z_sizes, "z_sizes", true);
    sizes(al.y_sizes, "y_sizes", true);
    sizes(al.m_sizes, "m_sizes", in_.receiver.mode == MemoryMode::finite);
    return report_.violations.size() == before;
  }

  void stochastic(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& path,
                  const std::string& what) {
    if (m.size() != rows) {
      fail(path, what + ": expected " + std::to_string(rows) + " rows, got " + std::to_string(m.size()));
      return;
    }
    for (std::size_t r = 0; r < rows; ++r) {
      if (m[r].size() != cols) {
        fail(path, what + ": row " + std::to_string(r) + " expected " + std::to_string(cols) + " entries");
        return;
      }
      if (!row_is_stochastic(m[r])) {
        double s = 0.0;
        for (double v : m[r]) s += v;
        std::ostringstream os;
        os << "row not normalized (" << what << ", row " << r << ", sum " << s << ")";
        fail(path, os.str());
        return;
      }
    }
  }

  void source() {
    const auto& src = in_.source;
    const auto n = static_cast<std::size_t>(in_.n());
    const auto na = static_cast<std::size_t>(in_.a_size());
    if (src.a_prior.size() != na) {
      fail("source.a_prior", "expected " + std::to_string(na) + " entries");
    } else if (!row_is_stochastic(src.a_prior)) {
      fail("source.a_prior", "row not normalized");
    }
    if (src.init.size() != n) {
      fail("source.init", "expected one entry per encoder");
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const auto nx = static_cast<std::size_t>(in_.x_size(static_cast<int>(i)));
        stochastic(src.init[i], na, nx, idx_path("source.init", {i}), "per-a initial law");
      }
    }
    if (src.kernel.size() != n) {
      fail("source.kernel", "expected one entry per encoder");
      return;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto nx = static_cast<std::size_t>(in_.x_size(static_cast<int>(i)));
      if (src.kernel[i].empty() && in_.horizon() > 1) {
        fail(idx_path("source.kernel", {i}), "at least one transition kernel required when horizon > 1");
      }
      for (std::size_t t = 0; t < src.kernel[i].size(); ++t) {
        const auto& per_a = src.kernel[i][t];
        const std::string path = idx_path("source.kernel", {i, t});
        if (per_a.size() != na) {
          fail(path, "expected one matrix per value of A");
          continue;
        }
        for (std::size_t a = 0; a < na; ++a) stochastic(per_a[a], nx, nx, path, "a=" + std::to_string(a));
      }
    }
  }

  void channels() {
    const auto& ch = in_.channels;
    const auto n = static_cast<std::size_t>(in_.n());
    if (ch.matrix.size() != n) {
      fail("channels.matrix", "expected one entry per encoder");
      return;
    }
    if (!ch.noiseless.empty() && ch.noiseless.size() != n) {
      fail("channels.noiseless", "expected one flag per encoder");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const int ii = static_cast<int>(i);
      if (ch.matrix[i].empty()) {
        fail(idx_path("channels.matrix", {i}), "at least one channel matrix required");
        continue;
      }
      for (std::size_t t = 0; t < ch.matrix[i].size(); ++t) {
        stochastic(ch.matrix[i][t], static_cast<std::size_t>(in_.z_size(ii)),
                   static_cast<std::size_t>(in_.y_size(ii)), idx_path("channels.matrix", {i, t}), "channel");
      }
      if (!ch.noiseless.empty() && i < ch.noiseless.size() && ch.noiseless[i] && !in_.channel_is_identity(ii)) {
        fail(idx_path("channels.noiseless", {i}), "declared noiseless but the channel is not the identity");
      }
    }
  }

  void receiver() {
    const auto& rc = in_.receiver;
    const auto n = static_cast<std::size_t>(in_.n());
    if (rc.mode == MemoryMode::perfect) {
      if (!rc.memory_rules.empty()) fail("receiver.memory_rules", "must be absent for a perfect-memory receiver");
      for (std::size_t i = 0; i < n && i < in_.channels.matrix.size(); ++i) {
        if (!in_.channels.matrix[i].empty() && !in_.channel_is_identity(static_cast<int>(i))) {
          fail(idx_path("channels.matrix", {i}), "perfect-memory receiver requires noiseless channels");
        }
      }
      return;
    }
    if (rc.memory_rules.size() != n) {
      fail("receiver.memory_rules", "expected one entry per encoder");
      return;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& list = rc.memory_rules[i];
      const int ii = static_cast<int>(i);
      const int ny = in_.y_size(ii);
      const int nm = in_.alphabets.m_sizes[i];
      if (in_.horizon() >= 2 && list.empty()) {
        fail(idx_path("receiver.memory_rules", {i}), "first-stage rule required when horizon > 1");
      }
      if (in_.horizon() >= 3 && list.size() < 2) {
        fail(idx_path("receiver.memory_rules", {i}), "a rule for stages after the first is required when horizon > 2");
      }
      for (std::size_t t = 0; t < list.size(); ++t) {
        const std::string path = idx_path("receiver.memory_rules", {i, t});
        const std::size_t rows = t == 0 ? 1 : static_cast<std::size_t>(nm);
        if (list[t].size() != rows) {
          fail(path, "expected " + std::to_string(rows) + " rows");
          continue;
        }
        for (const auto& r : list[t]) {
          if (r.size() != static_cast<std::size_t>(ny)) {
            fail(path, "expected " + std::to_string(ny) + " entries per row");
            break;
          }
          if (std::any_of(r.begin(), r.end(), [&](int m) { return m < 0 || m >= nm; })) {
            fail(path, "memory value out of range");
            break;
          }
        }
      }
    }
  }

  void distortion() {
    const auto& d = in_.distortion;
    if (d.estimate_size < 1) {
      fail("distortion.estimate_size", "must be at least 1");
      return;
    }
    if (d.rho.empty()) {
      fail("distortion.rho", "at least one stage required");
      return;
    }
    const auto rows = static_cast<std::size_t>(in_.joint_size());
    for (std::size_t t = 0; t < d.rho.size(); ++t) {
      const std::string path = idx_path("distortion.rho", {t});
      if (d.rho[t].size() != rows) {
        fail(path, "expected " + std::to_string(rows) + " rows (one per joint state)");
        continue;
      }
      for (const auto& r : d.rho[t]) {
        if (r.size() != static_cast<std::size_t>(d.estimate_size)) {
          fail(path, "expected estimate_size entries per row");
          break;
        }
        if (std::any_of(r.begin(), r.end(), [](double v) { return !(v >= 0.0) || !std::isfinite(v); })) {
          fail(path, "distortion must be finite and non-negative");
          break;
        }
      }
    }
  }

  const Instance& in_;
  ValidationReport report_;
};

}  // namespace detail

inline ValidationReport validate(const Instance& instance) { return detail::Validator(instance).run(); }

inline void require_valid(const Instance& instance) {
  auto rep = validate(instance);
  if (!rep.ok()) throw SchemaError("invalid instance:\n" + rep.to_string());
}

}  // namespace rtmt
