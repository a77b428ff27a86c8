#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include "rtmt/beliefs.hpp"
#include "rtmt/errors.hpp"
#include "rtmt/history_tree.hpp"
#include "rtmt/model.hpp"
#include "rtmt/policies.hpp"
#include "rtmt/tau.hpp"

namespace rtmt {

inline constexpr double kDefaultAtomBudget = 1e8;

// Stage marginals of one encoder's subsystem given A:
// P(X^i_{s+1} = x, Y^i_{s+1} = y, M^i_s = m | A = a).
struct EncoderMarginals {
  struct Entry {
    int x = 0;
    std::int64_t local = 0;  // y * |M_s| + m
    double p = 0.0;
  };
  int x_size = 0;
  int y_size = 0;
  std::vector<std::int64_t> m_size;              // [s]
  std::vector<std::vector<Row>> dense;           // [s][a][(x * |Y| + y) * |M_s| + m]
  std::vector<std::vector<std::vector<Entry>>> entries;  // [s][a], nonzero cells of `dense`

  void finalize() {
    entries.assign(dense.size(), {});
    for (std::size_t s = 0; s < dense.size(); ++s) {
      entries[s].resize(dense[s].size());
      const std::int64_t ms = m_size[s];
      for (std::size_t a = 0; a < dense[s].size(); ++a) {
        const Row& d = dense[s][a];
        for (std::size_t c = 0; c < d.size(); ++c) {
          if (d[c] == 0.0) continue;
          const auto cell = static_cast<std::int64_t>(c);
          const std::int64_t per_x = static_cast<std::int64_t>(y_size) * ms;
          entries[s][a].push_back({static_cast<int>(cell / per_x), cell % per_x, d[c]});
        }
      }
    }
  }
};

inline EncoderMarginals encoder_marginals(const Instance& in, const HistoryTree& tree, const Emission& em,
                                          const std::vector<MemoryStep>& schedule) {
  const int i = tree.encoder();
  const int T = tree.stages();
  const auto na = static_cast<std::size_t>(in.a_size());
  EncoderMarginals out;
  out.x_size = in.x_size(i);
  out.y_size = in.y_size(i);
  out.m_size.resize(static_cast<std::size_t>(T));
  out.dense.resize(static_cast<std::size_t>(T));
  const auto mu = node_memory_beliefs(in, tree, em, schedule);
  for (int s = 0; s < T; ++s) {
    const std::int64_t ms = in.memory_size(i, s);
    out.m_size[static_cast<std::size_t>(s)] = ms;
    auto& per_a = out.dense[static_cast<std::size_t>(s)];
    per_a.assign(na, Row(static_cast<std::size_t>(out.x_size * out.y_size * ms), 0.0));
    const Matrix& ch = in.channel(i, s);
    const auto& nodes = tree.stage(s);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const auto& nd = nodes[k];
      const Row& yrow = ch[static_cast<std::size_t>(em[static_cast<std::size_t>(s)][k])];
      const Pmf& m = mu[static_cast<std::size_t>(s)][k];
      for (int y = 0; y < out.y_size; ++y) {
        const double py = yrow[static_cast<std::size_t>(y)];
        if (py == 0.0) continue;
        for (std::int64_t mm = 0; mm < ms; ++mm) {
          const double pm = m[static_cast<std::size_t>(mm)];
          if (pm == 0.0) continue;
          const auto cell = static_cast<std::size_t>((static_cast<std::int64_t>(nd.x) * out.y_size + y) * ms + mm);
          for (std::size_t a = 0; a < na; ++a) {
            if (nd.lik[a] != 0.0) per_a[a][cell] += nd.lik[a] * py * pm;
          }
        }
      }
    }
  }
  out.finalize();
  return out;
}

// Weighted sum of component marginals (a mixture drawn independently of the
// rest of the system).
inline EncoderMarginals mix_marginals(const std::vector<std::pair<const EncoderMarginals*, double>>& parts) {
  EncoderMarginals out = *parts.front().first;
  for (auto& st : out.dense) {
    for (auto& row : st) std::fill(row.begin(), row.end(), 0.0);
  }
  for (const auto& [m, w] : parts) {
    for (std::size_t s = 0; s < out.dense.size(); ++s) {
      for (std::size_t a = 0; a < out.dense[s].size(); ++a) {
        for (std::size_t c = 0; c < out.dense[s][a].size(); ++c) out.dense[s][a][c] += w * m->dense[s][a][c];
      }
    }
  }
  out.finalize();
  return out;
}

// Joint law of the decoder's evidence and the source state at one stage:
// acc[key * |X| + joint] = P(Y_{s+1} = y, M_s = m, X_{s+1} = x, A = a) with
// key the mixed-radix number of (y^1, m^1, ..., y^n, m^n).
struct StageJoint {
  int stage = 0;
  std::vector<int> y_size;
  std::vector<std::int64_t> m_size;
  std::int64_t keys = 0;
  int joint = 0;
  Row acc;

  std::span<const double> slice(std::int64_t key) const {
    return std::span<const double>(acc).subspan(static_cast<std::size_t>(key * joint), static_cast<std::size_t>(joint));
  }
  // (y^1..y^n, m^1..m^n)
  std::vector<int> key_tuple(std::int64_t key) const {
    const std::size_t n = y_size.size();
    std::vector<int> t(2 * n);
    for (std::size_t i = n; i-- > 0;) {
      const std::int64_t local_size = y_size[i] * m_size[i];
      const std::int64_t local = key % local_size;
      key /= local_size;
      t[i] = static_cast<int>(local / m_size[i]);
      t[n + i] = static_cast<int>(local % m_size[i]);
    }
    return t;
  }
  // -1 when the tuple is out of range.
  std::int64_t key_of(const std::vector<int>& t) const {
    const std::size_t n = y_size.size();
    if (t.size() != 2 * n) return -1;
    std::int64_t key = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (t[i] < 0 || t[i] >= y_size[i] || t[n + i] < 0 || t[n + i] >= m_size[i]) return -1;
      key = key * (y_size[i] * m_size[i]) + static_cast<std::int64_t>(t[i]) * m_size[i] + t[n + i];
    }
    return key;
  }
};

// Builds the stage-s joint from per-encoder marginals. `atoms` accumulates
// the number of product terms; exceeding `budget` throws.
inline void build_stage_joint(const Instance& in, std::span<const EncoderMarginals* const> marg, int s, StageJoint& out,
                              double& atoms, double budget) {
  const std::size_t n = marg.size();
  out.stage = s;
  out.y_size.resize(n);
  out.m_size.resize(n);
  out.keys = 1;
  for (std::size_t i = 0; i < n; ++i) {
    out.y_size[i] = marg[i]->y_size;
    out.m_size[i] = marg[i]->m_size[static_cast<std::size_t>(s)];
    out.keys *= out.y_size[i] * out.m_size[i];
  }
  out.joint = in.joint_size();
  const double cells = static_cast<double>(out.keys) * out.joint;
  double products = 0.0;
  for (int a = 0; a < in.a_size(); ++a) {
    double p = 1.0;
    for (std::size_t i = 0; i < n; ++i) p *= static_cast<double>(marg[i]->entries[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)].size());
    products += p;
  }
  atoms += products + cells;
  if (atoms > budget) throw BudgetExceeded("exact evaluation atoms", atoms, budget);
  out.acc.assign(static_cast<std::size_t>(out.keys * out.joint), 0.0);

  std::vector<int> xs(n);
  const int na = in.a_size();
  for (int a = 0; a < na; ++a) {
    const double pa = in.source.a_prior[static_cast<std::size_t>(a)];
    if (pa == 0.0) continue;
    if (n == 2) {
      const auto& e0 = marg[0]->entries[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
      const auto& e1 = marg[1]->entries[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
      const std::int64_t l1 = out.y_size[1] * out.m_size[1];
      const int nx1 = in.x_size(1);
      for (const auto& u : e0) {
        const double pu = pa * u.p;
        for (const auto& v : e1) {
          const std::int64_t key = u.local * l1 + v.local;
          const int j = (u.x * nx1 + v.x) * na + a;
          out.acc[static_cast<std::size_t>(key * out.joint + j)] += pu * v.p;
        }
      }
      continue;
    }
    auto rec = [&](auto&& self, std::size_t i, std::int64_t key, double p) -> void {
      if (i == n) {
        const int j = in.joint_index(xs, a);
        out.acc[static_cast<std::size_t>(key * out.joint + j)] += p;
        return;
      }
      const std::int64_t li = out.y_size[i] * out.m_size[i];
      for (const auto& e : marg[i]->entries[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]) {
        xs[i] = e.x;
        self(self, i + 1, key * li + e.local, p * e.p);
      }
    };
    rec(rec, 0, 0, pa);
  }
}

// Per-stage decoder estimates on the dense key space.
using DenseDecoderStage = std::vector<int>;

inline DenseDecoderStage densify_decoder_stage(const Decoder& dec, const StageJoint& sj) {
  DenseDecoderStage out(static_cast<std::size_t>(sj.keys), dec.default_estimate);
  if (static_cast<std::size_t>(sj.stage) >= dec.stages.size()) return out;
  for (const auto& [tuple, est] : dec.stages[static_cast<std::size_t>(sj.stage)]) {
    const std::int64_t key = sj.key_of(tuple);
    if (key < 0) throw SchemaError("decoder table key out of range at stage " + std::to_string(sj.stage + 1));
    out[static_cast<std::size_t>(key)] = est;
  }
  return out;
}

struct EvaluationReport {
  std::string method = "exact";
  double total = 0.0;
  std::vector<double> per_stage;
  // Monte Carlo only.
  double mean = 0.0;
  double std_error = 0.0;
  std::uint64_t seed = 0;
  std::int64_t samples = 0;
  // Evidence values with probability zero that a table decoder completes
  // with the default estimate.
  std::int64_t off_path_keys = 0;
  friend bool operator==(const EvaluationReport&, const EvaluationReport&) = default;
};

struct ExactOptions {
  double atom_budget = kDefaultAtomBudget;
};

// Exact objective from per-encoder marginals. The decoder is tau unless a
// table is given; `estimates`, when non-null, receives the decisions used at
// every key of every stage.
inline EvaluationReport evaluate_marginals(const Instance& in, std::span<const EncoderMarginals* const> marg,
                                           const Decoder& dec, const ExactOptions& opt = {},
                                           std::vector<DenseDecoderStage>* estimates = nullptr,
                                           std::vector<StageJoint>* joints = nullptr) {
  EvaluationReport rep;
  const int T = in.horizon();
  rep.per_stage.assign(static_cast<std::size_t>(T), 0.0);
  if (estimates) estimates->assign(static_cast<std::size_t>(T), {});
  if (joints) joints->clear();
  StageJoint sj;
  std::vector<double> scratch;
  double atoms = 0.0;
  for (int s = 0; s < T; ++s) {
    build_stage_joint(in, marg, s, sj, atoms, opt.atom_budget);
    const Matrix& rho = in.rho(s);
    double cost = 0.0;
    DenseDecoderStage table;
    if (dec.kind == Decoder::Kind::table) table = densify_decoder_stage(dec, sj);
    DenseDecoderStage used(static_cast<std::size_t>(sj.keys), dec.default_estimate);
    for (std::int64_t key = 0; key < sj.keys; ++key) {
      const auto q = sj.slice(key);
      if (dec.kind == Decoder::Kind::tau) {
        const TauChoice c = tau_on_slice(q, rho, scratch);
        cost += c.cost;
        if (c.mass > 0.0) used[static_cast<std::size_t>(key)] = c.estimate;
        else ++rep.off_path_keys;
      } else {
        const int est = table[static_cast<std::size_t>(key)];
        if (est < 0 || est >= in.estimate_size()) throw SchemaError("decoder estimate out of range");
        cost += slice_cost(q, rho, est);
        used[static_cast<std::size_t>(key)] = est;
        bool any = false;
        for (double v : q) any = any || v != 0.0;
        if (!any) ++rep.off_path_keys;
      }
    }
    rep.per_stage[static_cast<std::size_t>(s)] = cost;
    if (estimates) (*estimates)[static_cast<std::size_t>(s)] = std::move(used);
    if (joints) joints->push_back(sj);
  }
  for (double c : rep.per_stage) rep.total += c;
  return rep;
}

// Instance + policies + memory rules + decoder.
struct Assembly {
  Instance instance;
  std::vector<EncoderPolicy> encoders;
  std::optional<std::vector<std::vector<IntTable>>> memory_rules;  // overrides the instance's rules
  Decoder decoder;
};

// Policies compiled against the observation-history trees. Keeps a pointer
// to the assembly, which must outlive it.
class CompiledAssembly {
 public:
  explicit CompiledAssembly(const Assembly& as) : as_(&as) {
    const Instance& in = as.instance;
    require_valid(in);
    if (static_cast<int>(as.encoders.size()) != in.n()) throw SchemaError("policy count does not match n_encoders");
    if (as.memory_rules && static_cast<int>(as.memory_rules->size()) != in.n()) {
      throw SchemaError("memory rule override needs one entry per encoder");
    }
    for (int i = 0; i < in.n(); ++i) {
      trees_.emplace_back(in, i);
      const std::vector<IntTable>* rules = as.memory_rules ? &(*as.memory_rules)[static_cast<std::size_t>(i)] : nullptr;
      schedules_.push_back(memory_schedule(in, i, std::max(in.horizon() - 1, 0), rules));
    }
    for (int i = 0; i < in.n(); ++i) {
      const auto& pol = as.encoders[static_cast<std::size_t>(i)];
      if (pol.components.empty()) throw SchemaError("encoder " + std::to_string(i) + " has no components");
      Row w;
      std::vector<std::pair<Emission, double>> comps;
      for (const auto& [enc, weight] : pol.components) {
        comps.emplace_back(compile_encoder(enc, in, trees_[static_cast<std::size_t>(i)], schedules_[static_cast<std::size_t>(i)]), weight);
        w.push_back(weight);
      }
      if (!row_is_stochastic(w)) throw SchemaError("mixture weights of encoder " + std::to_string(i) + " must sum to 1");
      std::vector<EncoderMarginals> parts;
      for (const auto& [em, weight] : comps) {
        parts.push_back(encoder_marginals(in, trees_[static_cast<std::size_t>(i)], em, schedules_[static_cast<std::size_t>(i)]));
      }
      if (parts.size() == 1) {
        marginals_.push_back(std::move(parts.front()));
      } else {
        std::vector<std::pair<const EncoderMarginals*, double>> mix;
        for (std::size_t k = 0; k < parts.size(); ++k) mix.emplace_back(&parts[k], comps[k].second);
        marginals_.push_back(mix_marginals(mix));
      }
      emissions_.push_back(std::move(comps));
    }
  }

  const Assembly& assembly() const { return *as_; }
  const Instance& instance() const { return as_->instance; }
  const HistoryTree& tree(int i) const { return trees_[static_cast<std::size_t>(i)]; }
  const std::vector<MemoryStep>& schedule(int i) const { return schedules_[static_cast<std::size_t>(i)]; }
  const std::vector<std::pair<Emission, double>>& components(int i) const { return emissions_[static_cast<std::size_t>(i)]; }
  std::vector<const EncoderMarginals*> marginals() const {
    std::vector<const EncoderMarginals*> out;
    for (const auto& m : marginals_) out.push_back(&m);
    return out;
  }

 private:
  const Assembly* as_;
  std::vector<HistoryTree> trees_;
  std::vector<std::vector<MemoryStep>> schedules_;
  std::vector<std::vector<std::pair<Emission, double>>> emissions_;
  std::vector<EncoderMarginals> marginals_;
};

inline EvaluationReport expected_distortion_exact(const Assembly& as, const ExactOptions& opt = {}) {
  CompiledAssembly ca(as);
  const auto m = ca.marginals();
  return evaluate_marginals(as.instance, m, as.decoder, opt);
}

// The tau rule written out as a table over on-path evidence. Off-path keys
// are left to the default estimate (0) and counted.
inline Decoder materialize_tau(const CompiledAssembly& ca, const ExactOptions& opt = {}, std::int64_t* off_path = nullptr) {
  const auto m = ca.marginals();
  std::vector<StageJoint> joints;
  std::vector<DenseDecoderStage> est;
  const auto rep = evaluate_marginals(ca.instance(), m, Decoder::tau(), opt, &est, &joints);
  Decoder d;
  d.kind = Decoder::Kind::table;
  d.stages.resize(joints.size());
  for (std::size_t s = 0; s < joints.size(); ++s) {
    for (std::int64_t key = 0; key < joints[s].keys; ++key) {
      const auto q = joints[s].slice(key);
      bool any = false;
      for (double v : q) any = any || v != 0.0;
      if (any) d.stages[s][joints[s].key_tuple(key)] = est[s][static_cast<std::size_t>(key)];
    }
  }
  if (off_path) *off_path = rep.off_path_keys;
  return d;
}

// ---------------------------------------------------------------- sampling

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Substream for (seed, block): blocks are fixed-size runs of samples, so the
// result does not depend on how blocks are spread over workers.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t block) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(block + 0x5bd1e995ULL)));
}

inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline int sample_index(std::span<const double> w, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  double c = 0.0;
  int last = -1;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k] <= 0.0) continue;
    c += w[k];
    last = static_cast<int>(k);
    if (u < c) return last;
  }
  return last;
}

struct MonteCarloOptions {
  std::int64_t samples = 10000;
  std::uint64_t seed = 1;
  int workers = 1;
  std::int64_t block_size = 4096;
  double atom_budget = kDefaultAtomBudget;
};

namespace detail {

struct SampleStats {
  std::int64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  std::vector<double> stage_sum;

  void add(double v) {
    ++n;
    const double d = v - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (v - mean);
  }
  void merge(const SampleStats& o) {
    if (o.n == 0) return;
    if (stage_sum.size() < o.stage_sum.size()) stage_sum.resize(o.stage_sum.size(), 0.0);
    for (std::size_t s = 0; s < o.stage_sum.size(); ++s) stage_sum[s] += o.stage_sum[s];
    if (n == 0) {
      n = o.n;
      mean = o.mean;
      m2 = o.m2;
      return;
    }
    const double tot = static_cast<double>(n + o.n);
    const double d = o.mean - mean;
    mean += d * static_cast<double>(o.n) / tot;
    m2 += o.m2 + d * d * static_cast<double>(n) * static_cast<double>(o.n) / tot;
    n += o.n;
  }
};

struct RolloutStep {
  std::vector<int> x, z, y, m, node;
  int estimate = 0;
  double distortion = 0.0;
};

// Draws one sample path; `on_step` sees every stage.
template <typename OnStep>
double rollout(const CompiledAssembly& ca, const std::vector<DenseDecoderStage>& est,
               const std::vector<StageJoint>& shape, std::mt19937_64& rng, OnStep&& on_step, int* a_out = nullptr,
               std::vector<int>* comp_out = nullptr) {
  const Instance& in = ca.instance();
  const int n = in.n();
  const int a = sample_index(in.source.a_prior, rng);
  if (a_out) *a_out = a;
  RolloutStep st;
  st.x.resize(static_cast<std::size_t>(n));
  st.z.resize(static_cast<std::size_t>(n));
  st.y.resize(static_cast<std::size_t>(n));
  st.m.assign(static_cast<std::size_t>(n), 0);
  st.node.resize(static_cast<std::size_t>(n));
  std::vector<int> comp(static_cast<std::size_t>(n), 0);
  std::vector<double> w;
  for (int i = 0; i < n; ++i) {
    const auto& comps = ca.components(i);
    if (comps.size() > 1) {
      w.clear();
      for (const auto& c : comps) w.push_back(c.second);
      comp[static_cast<std::size_t>(i)] = sample_index(w, rng);
    }
    const int x = sample_index(in.init(i)[static_cast<std::size_t>(a)], rng);
    st.x[static_cast<std::size_t>(i)] = x;
    int node = -1;
    const auto& nodes = ca.tree(i).stage(0);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (nodes[k].x == x) node = static_cast<int>(k);
    }
    st.node[static_cast<std::size_t>(i)] = node;
  }
  if (comp_out) *comp_out = comp;
  double total = 0.0;
  const int T = in.horizon();
  std::vector<int> tuple(static_cast<std::size_t>(2 * n));
  for (int s = 0; s < T; ++s) {
    for (int i = 0; i < n; ++i) {
      const auto& em = ca.components(i)[static_cast<std::size_t>(comp[static_cast<std::size_t>(i)])].first;
      const int z = em[static_cast<std::size_t>(s)][static_cast<std::size_t>(st.node[static_cast<std::size_t>(i)])];
      st.z[static_cast<std::size_t>(i)] = z;
      st.y[static_cast<std::size_t>(i)] = sample_index(in.channel(i, s)[static_cast<std::size_t>(z)], rng);
      tuple[static_cast<std::size_t>(i)] = st.y[static_cast<std::size_t>(i)];
      tuple[static_cast<std::size_t>(n + i)] = st.m[static_cast<std::size_t>(i)];
    }
    const std::int64_t key = shape[static_cast<std::size_t>(s)].key_of(tuple);
    st.estimate = est[static_cast<std::size_t>(s)][static_cast<std::size_t>(key)];
    st.distortion = in.rho(s)[static_cast<std::size_t>(in.joint_index(st.x, a))][static_cast<std::size_t>(st.estimate)];
    total += st.distortion;
    on_step(s, st, key);
    if (s + 1 == T) break;
    for (int i = 0; i < n; ++i) {
      const auto ii = static_cast<std::size_t>(i);
      st.m[ii] = static_cast<int>(ca.schedule(i)[static_cast<std::size_t>(s)](st.m[ii], st.y[ii]));
      const int xn = sample_index(in.kernel(i, s, a)[static_cast<std::size_t>(st.x[ii])], rng);
      st.node[ii] = ca.tree(i).node(s, st.node[ii]).child[static_cast<std::size_t>(xn)];
      st.x[ii] = xn;
    }
  }
  return total;
}

// Decoder decisions for sampling: tau decisions come from the exact joint.
inline void sampling_decoder(const CompiledAssembly& ca, double atom_budget, std::vector<DenseDecoderStage>& est,
                             std::vector<StageJoint>& shape, std::int64_t& off_path) {
  const auto m = ca.marginals();
  ExactOptions opt;
  opt.atom_budget = atom_budget;
  const auto rep = evaluate_marginals(ca.instance(), m, ca.assembly().decoder, opt, &est, &shape);
  off_path = rep.off_path_keys;
  for (auto& sj : shape) sj.acc.clear();
}

}  // namespace detail

inline EvaluationReport simulate_mc(const Assembly& as, const MonteCarloOptions& opt) {
  if (opt.samples < 1) throw SchemaError("sample count must be at least 1");
  CompiledAssembly ca(as);
  std::vector<DenseDecoderStage> est;
  std::vector<StageJoint> shape;
  std::int64_t off_path = 0;
  detail::sampling_decoder(ca, opt.atom_budget, est, shape, off_path);
  const std::int64_t bs = std::max<std::int64_t>(opt.block_size, 1);
  const std::int64_t blocks = (opt.samples + bs - 1) / bs;
  std::vector<detail::SampleStats> per_block(static_cast<std::size_t>(blocks));
  const int T = as.instance.horizon();
  auto run_block = [&](std::int64_t b) {
    auto rng = substream(opt.seed, static_cast<std::uint64_t>(b));
    auto& st = per_block[static_cast<std::size_t>(b)];
    st.stage_sum.assign(static_cast<std::size_t>(T), 0.0);
    const std::int64_t count = std::min(bs, opt.samples - b * bs);
    for (std::int64_t k = 0; k < count; ++k) {
      const double c = detail::rollout(ca, est, shape, rng, [&](int s, const detail::RolloutStep& step, std::int64_t) {
        st.stage_sum[static_cast<std::size_t>(s)] += step.distortion;
      });
      st.add(c);
    }
  };
  const int workers = std::max(1, std::min<int>(opt.workers, static_cast<int>(blocks)));
  if (workers == 1) {
    for (std::int64_t b = 0; b < blocks; ++b) run_block(b);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::int64_t b = w; b < blocks; b += workers) run_block(b);
      });
    }
    for (auto& t : pool) t.join();
  }
  detail::SampleStats all;
  all.stage_sum.assign(static_cast<std::size_t>(T), 0.0);
  for (const auto& st : per_block) all.merge(st);
  EvaluationReport rep;
  rep.method = "monte_carlo";
  rep.samples = all.n;
  rep.seed = opt.seed;
  rep.mean = all.mean;
  rep.total = all.mean;
  rep.std_error = all.n > 1 ? std::sqrt(all.m2 / static_cast<double>(all.n - 1) / static_cast<double>(all.n)) : 0.0;
  rep.per_stage.resize(static_cast<std::size_t>(T));
  for (int s = 0; s < T; ++s) rep.per_stage[static_cast<std::size_t>(s)] = all.stage_sum[static_cast<std::size_t>(s)] / static_cast<double>(all.n);
  rep.off_path_keys = off_path;
  return rep;
}

struct TraceStage {
  std::vector<int> x, z, y, m;
  std::vector<Pmf> b;   // per encoder: P(A | own observations)
  std::vector<Pmf> mu;  // per encoder: P(M_s | own symbols)
  Pmf psi;              // receiver belief on the joint state
  int estimate = 0;
  double distortion = 0.0;
};

struct Trace {
  std::uint64_t seed = 0;
  int a = 0;
  std::vector<int> component;  // mixture component drawn per encoder
  std::vector<TraceStage> stages;
  double total = 0.0;
};

inline Trace trace_rollout(const Assembly& as, std::uint64_t seed, const ExactOptions& opt = {}) {
  CompiledAssembly ca(as);
  const Instance& in = as.instance;
  const auto m = ca.marginals();
  std::vector<DenseDecoderStage> est;
  std::vector<StageJoint> joints;
  evaluate_marginals(in, m, as.decoder, opt, &est, &joints);
  std::vector<std::vector<std::vector<Pmf>>> mu_tables;
  Trace tr;
  tr.seed = seed;
  auto rng = substream(seed, 0);
  // Memory beliefs depend on the drawn component, so they are computed after
  // the draw.
  std::vector<detail::RolloutStep> steps;
  std::vector<std::int64_t> keys;
  tr.total = detail::rollout(
      ca, est, joints, rng,
      [&](int, const detail::RolloutStep& st, std::int64_t key) {
        steps.push_back(st);
        keys.push_back(key);
      },
      &tr.a, &tr.component);
  for (int i = 0; i < in.n(); ++i) {
    const auto& em = ca.components(i)[static_cast<std::size_t>(tr.component[static_cast<std::size_t>(i)])].first;
    mu_tables.push_back(node_memory_beliefs(in, ca.tree(i), em, ca.schedule(i)));
  }
  for (std::size_t s = 0; s < steps.size(); ++s) {
    TraceStage ts;
    ts.x = steps[s].x;
    ts.z = steps[s].z;
    ts.y = steps[s].y;
    ts.m = steps[s].m;
    for (int i = 0; i < in.n(); ++i) {
      const int node = steps[s].node[static_cast<std::size_t>(i)];
      ts.b.push_back(ca.tree(i).node(static_cast<int>(s), node).belief);
      ts.mu.push_back(mu_tables[static_cast<std::size_t>(i)][s][static_cast<std::size_t>(node)]);
    }
    const auto q = joints[s].slice(keys[s]);
    ts.psi = Pmf(std::vector<double>(q.begin(), q.end()));
    ts.psi.normalize("receiver belief along a sampled path");
    ts.estimate = steps[s].estimate;
    ts.distortion = steps[s].distortion;
    tr.stages.push_back(std::move(ts));
  }
  return tr;
}

}  // namespace rtmt
