#pragma once

#include <cstdint>
#include <vector>

#include "rtmt/errors.hpp"
#include "rtmt/model.hpp"
#include "rtmt/pmf.hpp"

namespace rtmt {

// Posterior on A after the first observation: b(a) ∝ P(x_1 | a) P(a).
inline Pmf init_a_belief(int x1, const Row& a_prior, const Matrix& init_by_a) {
  Pmf b(a_prior.size());
  for (std::size_t a = 0; a < a_prior.size(); ++a) b[a] = init_by_a[a][static_cast<std::size_t>(x1)] * a_prior[a];
  b.normalize("a-belief at stage 1");
  return b;
}

inline Pmf init_a_belief(const Instance& in, int i, int x1) {
  return init_a_belief(x1, in.source.a_prior, in.init(i));
}

// One Bayes step on A: b'(a) ∝ P(x_curr | x_prev, a) b(a).
inline Pmf update_a_belief(const Pmf& prev, int x_prev, int x_curr, const std::vector<Matrix>& kernel_by_a) {
  Pmf b(prev.size());
  for (std::size_t a = 0; a < prev.size(); ++a) {
    b[a] = kernel_by_a[a][static_cast<std::size_t>(x_prev)][static_cast<std::size_t>(x_curr)] * prev[a];
  }
  b.normalize("a-belief update");
  return b;
}

// Transition of X^i from stage s to s+1 (0-based).
inline Pmf update_a_belief(const Instance& in, int i, int s, const Pmf& prev, int x_prev, int x_curr) {
  return update_a_belief(prev, x_prev, x_curr, in.kernels(i, s));
}

// One receiver memory update M_{s+1} = l(M_s, Y). A null table means perfect
// recall: the memory index is the received sequence in base |Y|.
struct MemoryStep {
  const IntTable* table = nullptr;
  int y_size = 0;
  std::int64_t size_before = 1;
  std::int64_t size_after = 1;

  std::int64_t operator()(std::int64_t m, int y) const {
    if (table) return (*table)[static_cast<std::size_t>(m)][static_cast<std::size_t>(y)];
    return m * y_size + y;
  }
};

// Memory updates for encoder i at stages 0..stages-1. `rules`, when given,
// replaces the instance's memory rules for that encoder.
inline std::vector<MemoryStep> memory_schedule(const Instance& in, int i, int stages,
                                               const std::vector<IntTable>* rules = nullptr) {
  std::vector<MemoryStep> out;
  out.reserve(static_cast<std::size_t>(std::max(stages, 0)));
  const std::vector<IntTable>* list = rules;
  if (!list && !in.perfect_memory()) list = &in.receiver.memory_rules[static_cast<std::size_t>(i)];
  for (int s = 0; s < stages; ++s) {
    MemoryStep st;
    st.y_size = in.y_size(i);
    st.size_before = in.memory_size(i, s);
    st.size_after = in.memory_size(i, s + 1);
    if (!in.perfect_memory()) {
      if (!list || list->empty()) throw SchemaError("memory rule missing for encoder " + std::to_string(i));
      st.table = (s == 0 || list->size() == 1) ? &list->front() : &detail::pick_stage(*list, s);
      if (static_cast<std::int64_t>(st.table->size()) != st.size_before) {
        throw SchemaError("memory rule for encoder " + std::to_string(i) + " at stage " + std::to_string(s + 1) +
                          " has the wrong number of rows");
      }
    }
    out.push_back(st);
  }
  return out;
}

// Memory belief after sending z: mu'(m) = sum over (m', y) with l(m', y) = m
// of P(y | z) mu(m').
inline Pmf update_memory_belief(const Pmf& prev, int z_prev, const Matrix& channel, const MemoryStep& rule) {
  Pmf out(static_cast<std::size_t>(rule.size_after));
  const Row& row = channel[static_cast<std::size_t>(z_prev)];
  for (std::size_t m = 0; m < prev.size(); ++m) {
    if (prev[m] == 0.0) continue;
    for (std::size_t y = 0; y < row.size(); ++y) {
      if (row[y] == 0.0) continue;
      out[static_cast<std::size_t>(rule(static_cast<std::int64_t>(m), static_cast<int>(y)))] += row[y] * prev[m];
    }
  }
  out.normalize("memory belief update");
  return out;
}

inline Pmf update_memory_belief(const Pmf& prev, int z_prev, const Matrix& channel, const IntTable& rule,
                                int m_size_after) {
  MemoryStep st;
  st.table = &rule;
  st.y_size = static_cast<int>(channel.empty() ? 0 : channel.front().size());
  st.size_before = static_cast<std::int64_t>(prev.size());
  st.size_after = m_size_after;
  return update_memory_belief(prev, z_prev, channel, st);
}

// Memory belief before the first transmission: the blank memory.
inline Pmf initial_memory_belief() { return Pmf::point_mass(1, 0); }

}  // namespace rtmt
