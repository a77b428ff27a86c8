#pragma once

#include <span>
#include <vector>

#include "rtmt/model.hpp"
#include "rtmt/pmf.hpp"

namespace rtmt {

// Estimate minimizing posterior expected distortion; ties go to the smallest
// estimate index.
inline int decode_tau(std::span<const double> psi, const Matrix& rho_t) {
  const std::size_t n_est = rho_t.empty() ? 0 : rho_t.front().size();
  int best = 0;
  double best_cost = 0.0;
  for (std::size_t s = 0; s < n_est; ++s) {
    double c = 0.0;
    for (std::size_t x = 0; x < psi.size(); ++x) {
      if (psi[x] != 0.0) c += psi[x] * rho_t[x][s];
    }
    if (s == 0 || c < best_cost) {
      best = static_cast<int>(s);
      best_cost = c;
    }
  }
  return best;
}

inline int decode_tau(const Pmf& psi, const Matrix& rho_t) { return decode_tau(std::span<const double>(psi.weights()), rho_t); }

// Applies the rule to an unnormalized joint slice q(x) = P(x, evidence):
// normalizes to the posterior, decodes, and returns the estimate together
// with the cost contribution sum_x q(x) rho(x, estimate). Zero slices decode
// to 0 at no cost.
struct TauChoice {
  int estimate = 0;
  double cost = 0.0;
  double mass = 0.0;
};

inline TauChoice tau_on_slice(std::span<const double> q, const Matrix& rho_t, std::vector<double>& scratch) {
  TauChoice out;
  for (double v : q) out.mass += v;
  if (!(out.mass > 0.0)) return out;
  scratch.assign(q.begin(), q.end());
  for (double& v : scratch) v /= out.mass;
  out.estimate = decode_tau(std::span<const double>(scratch), rho_t);
  for (std::size_t x = 0; x < q.size(); ++x) {
    if (q[x] != 0.0) out.cost += q[x] * rho_t[x][static_cast<std::size_t>(out.estimate)];
  }
  return out;
}

inline double slice_cost(std::span<const double> q, const Matrix& rho_t, int estimate) {
  double c = 0.0;
  for (std::size_t x = 0; x < q.size(); ++x) {
    if (q[x] != 0.0) c += q[x] * rho_t[x][static_cast<std::size_t>(estimate)];
  }
  return c;
}

}  // namespace rtmt
