#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "rtmt/beliefs.hpp"
#include "rtmt/enumerate.hpp"
#include "rtmt/history_tree.hpp"
#include "rtmt/model.hpp"
#include "rtmt/policies.hpp"

namespace rtmt {

// Size ranges are inclusive; each size is drawn uniformly from [min, max].
struct RandomInstanceOptions {
  int n = 2;
  int horizon = 2;
  int min_size = 1;
  int max_x = 2;
  int max_a = 2;
  int max_z = 2;
  int max_y = 2;
  int max_m = 2;
  int max_estimate = 2;
  bool fixed_sizes = false;     // use the max sizes exactly
  bool perfect = false;         // noiseless channels with a perfect-memory receiver
  bool noiseless = false;
  bool time_varying = true;     // one kernel, channel, rule and rho entry per stage
  double zero_probability = 0.15;  // chance that a row entry is forced to zero
};

namespace detail {

inline int draw_size(std::mt19937_64& rng, int lo, int hi) {
  if (hi <= lo) return lo;
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline Row random_row(std::mt19937_64& rng, int size, double zero_probability) {
  std::exponential_distribution<double> ex(1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Row r(static_cast<std::size_t>(size));
  double sum = 0.0;
  for (auto& v : r) {
    v = u(rng) < zero_probability ? 0.0 : ex(rng);
    sum += v;
  }
  if (!(sum > 0.0)) {
    r[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, size - 1)(rng))] = 1.0;
    return r;
  }
  for (auto& v : r) v /= sum;
  return r;
}

inline Matrix random_matrix(std::mt19937_64& rng, int rows, int cols, double zero_probability) {
  Matrix m;
  for (int r = 0; r < rows; ++r) m.push_back(random_row(rng, cols, zero_probability));
  return m;
}

}  // namespace detail

inline Instance random_instance(const RandomInstanceOptions& opt, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto size = [&](int max) { return opt.fixed_sizes ? max : detail::draw_size(rng, opt.min_size, max); };
  Instance in;
  const int n = opt.n;
  const int T = opt.horizon;
  const bool noiseless = opt.noiseless || opt.perfect;
  in.alphabets.n_encoders = n;
  in.alphabets.horizon = T;
  in.alphabets.a_size = size(opt.max_a);
  for (int i = 0; i < n; ++i) {
    in.alphabets.x_sizes.push_back(size(opt.max_x));
    const int z = size(opt.max_z);
    in.alphabets.z_sizes.push_back(z);
    in.alphabets.y_sizes.push_back(noiseless ? z : size(opt.max_y));
    if (!opt.perfect) in.alphabets.m_sizes.push_back(size(opt.max_m));
  }
  const int na = in.alphabets.a_size;
  const int entries = opt.time_varying ? std::max(T - 1, 1) : 1;

  in.source.a_prior = detail::random_row(rng, na, 0.0);
  for (int i = 0; i < n; ++i) {
    const int nx = in.x_size(i);
    in.source.init.push_back(detail::random_matrix(rng, na, nx, opt.zero_probability));
    std::vector<std::vector<Matrix>> kernels;
    if (T > 1) {
      for (int s = 0; s < entries; ++s) {
        std::vector<Matrix> per_a;
        for (int a = 0; a < na; ++a) per_a.push_back(detail::random_matrix(rng, nx, nx, opt.zero_probability));
        kernels.push_back(std::move(per_a));
      }
    }
    in.source.kernel.push_back(std::move(kernels));
  }
  for (int i = 0; i < n; ++i) {
    std::vector<Matrix> list;
    if (noiseless) {
      list.push_back(identity_matrix(in.z_size(i)));
    } else {
      for (int s = 0; s < (opt.time_varying ? T : 1); ++s) list.push_back(detail::random_matrix(rng, in.z_size(i), in.y_size(i), opt.zero_probability));
    }
    in.channels.matrix.push_back(std::move(list));
  }
  in.receiver.mode = opt.perfect ? MemoryMode::perfect : MemoryMode::finite;
  if (!opt.perfect) {
    for (int i = 0; i < n; ++i) {
      const int nm = in.alphabets.m_sizes[static_cast<std::size_t>(i)];
      std::uniform_int_distribution<int> pick(0, nm - 1);
      std::vector<IntTable> rules;
      const int count = T < 2 ? 0 : (T == 2 || !opt.time_varying ? std::min(T - 1, 2) : T - 1);
      for (int s = 0; s < count; ++s) {
        const int rows = s == 0 ? 1 : nm;
        IntTable t(static_cast<std::size_t>(rows), std::vector<int>(static_cast<std::size_t>(in.y_size(i))));
        for (auto& row : t) {
          for (auto& v : row) v = pick(rng);
        }
        rules.push_back(std::move(t));
      }
      in.receiver.memory_rules.push_back(std::move(rules));
    }
  }
  in.distortion.estimate_size = size(opt.max_estimate);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int s = 0; s < (opt.time_varying ? T : 1); ++s) {
    Matrix rho(static_cast<std::size_t>(in.joint_size()), Row(static_cast<std::size_t>(in.estimate_size())));
    for (auto& row : rho) {
      for (auto& v : row) v = u(rng);
    }
    in.distortion.rho.push_back(std::move(rho));
  }
  require_valid(in);
  return in;
}

// Random memory rules for encoder i over the stages a decoder reads.
inline std::vector<IntTable> random_memory_rules(const Instance& in, int i, std::mt19937_64& rng) {
  std::vector<IntTable> rules;
  const int nm = in.alphabets.m_sizes[static_cast<std::size_t>(i)];
  std::uniform_int_distribution<int> pick(0, nm - 1);
  for (int s = 0; s + 1 < in.horizon(); ++s) {
    IntTable t(static_cast<std::size_t>(s == 0 ? 1 : nm), std::vector<int>(static_cast<std::size_t>(in.y_size(i))));
    for (auto& row : t) {
      for (auto& v : row) v = pick(rng);
    }
    rules.push_back(std::move(t));
  }
  return rules;
}

// Random symbol table that is a function of the domain's arguments at every
// stage.
template <typename Domain>
Emission random_emission_in(const HistoryTree& tree, int z_size, Domain& domain, std::mt19937_64& rng) {
  Emission em = detail::empty_emission(tree);
  std::uniform_int_distribution<int> pick(0, z_size - 1);
  for (int s = 0; s < tree.stages(); ++s) {
    const StageDomain d = domain(s, em);
    std::vector<int> sym(static_cast<std::size_t>(d.key_count));
    for (auto& v : sym) v = pick(rng);
    for (std::size_t k = 0; k < d.node_key.size(); ++k) em[static_cast<std::size_t>(s)][k] = sym[static_cast<std::size_t>(d.node_key[k])];
  }
  return em;
}

inline Emission random_emission(const HistoryTree& tree, int z_size, std::mt19937_64& rng) {
  GeneralDomain d(tree);
  return random_emission_in(tree, z_size, d, rng);
}

inline GeneralEncoder random_general_encoder(const Instance& in, int i, std::mt19937_64& rng) {
  const HistoryTree tree(in, i);
  return general_from_emission(tree, random_emission(tree, in.z_size(i), rng));
}

inline BeliefHistoryEncoder random_belief_history_encoder(const Instance& in, int i, std::mt19937_64& rng) {
  const HistoryTree tree(in, i);
  BeliefHistoryDomain d(tree, in.z_size(i));
  return belief_history_from_emission(tree, random_emission_in(tree, in.z_size(i), d, rng));
}

inline StructuredEncoder random_structured_encoder(const Instance& in, int i, const std::vector<MemoryStep>& schedule,
                                                   std::mt19937_64& rng) {
  const HistoryTree tree(in, i);
  StructuredDomain d(in, tree, schedule);
  return structured_from_emission(in, tree, random_emission_in(tree, in.z_size(i), d, rng), schedule);
}

}  // namespace rtmt
