#pragma once

// Reference implementations for tests. Everything here is written from the
// formulas directly and deliberately avoids calling the library's solvers.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "hfel/cost_model.hpp"

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline double device_time(const hfel::DeviceProfile& p, const hfel::Hyperparams& h, double b,
                          double f, double snr) {
  return h.S * h.I * p.mu / f + h.model_bits / (b * std::log2(1.0 + snr));
}

inline double device_energy(const hfel::DeviceProfile& p, const hfel::Hyperparams& h, double b,
                            double f, double snr) {
  const double t_com = h.model_bits / (b * std::log2(1.0 + snr));
  return p.power * t_com + 0.5 * p.alpha * h.S * h.I * p.mu * f * f;
}

struct GridResult {
  bool feasible = false;
  double round_time = std::numeric_limits<double>::infinity();
  std::vector<double> bandwidth, frequency;
  double grid_step = 0.0;  // objective change from one bandwidth step at the optimum
};

// Exhaustive search over a bandwidth simplex with `points` steps per device
// and `points` frequencies in [f_min, f_max].
inline GridResult grid_allocation(const std::vector<hfel::DeviceProfile>& devices,
                                  const hfel::Hyperparams& h, const std::vector<double>& snr,
                                  double budget, const std::vector<double>& caps, int points = 50) {
  const std::size_t n = devices.size();
  // best[i][k]: fastest time for device i with bandwidth k·budget/points.
  std::vector<std::vector<double>> best(n, std::vector<double>(std::size_t(points) + 1, INFINITY));
  std::vector<std::vector<double>> best_f(n, std::vector<double>(std::size_t(points) + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = devices[i];
    for (int k = 1; k <= points; ++k) {
      const double b = budget * k / points;
      for (int j = 0; j < points; ++j) {
        const double f = p.f_min + (p.f_max - p.f_min) * j / (points - 1);
        if (device_energy(p, h, b, f, snr[i]) > caps[i]) continue;
        const double t = device_time(p, h, b, f, snr[i]);
        if (t < best[i][std::size_t(k)]) {
          best[i][std::size_t(k)] = t;
          best_f[i][std::size_t(k)] = f;
        }
      }
    }
  }
  GridResult out;
  std::vector<int> ks(n, 1), best_ks;
  // Enumerate compositions with every k >= 1 and Σk <= points.
  auto recurse = [&](auto&& self, std::size_t i, int used) -> void {
    if (i == n) {
      double worst = 0.0;
      for (std::size_t d = 0; d < n; ++d) worst = std::max(worst, best[d][std::size_t(ks[d])]);
      if (worst < out.round_time) {
        out.round_time = worst;
        best_ks = ks;
      }
      return;
    }
    for (int k = 1; used + k + int(n - i - 1) <= points; ++k) {
      ks[i] = k;
      self(self, i + 1, used + k);
    }
  };
  recurse(recurse, 0, 0);
  out.feasible = std::isfinite(out.round_time);
  if (!out.feasible) return out;
  double step = 0.0;
  for (std::size_t d = 0; d < n; ++d) {
    const auto k = std::size_t(best_ks[d]);
    out.bandwidth.push_back(budget * double(k) / points);
    out.frequency.push_back(best_f[d][k]);
    if (k > 1 && std::isfinite(best[d][k - 1])) step = std::max(step, best[d][k - 1] - best[d][k]);
    if (k < std::size_t(points)) step = std::max(step, best[d][k] - best[d][k + 1]);
  }
  out.grid_step = step;
  return out;
}

inline bool connected_dfs(const Matrix& A) {
  const auto C = A.rows();
  if (C <= 1) return true;
  std::vector<bool> seen(std::size_t(C), false);
  std::vector<Eigen::Index> stack{0};
  seen[0] = true;
  Eigen::Index count = 1;
  while (!stack.empty()) {
    const auto v = stack.back();
    stack.pop_back();
    for (Eigen::Index w = 0; w < C; ++w)
      if (A(v, w) != 0.0 && !seen[std::size_t(w)]) {
        seen[std::size_t(w)] = true;
        ++count;
        stack.push_back(w);
      }
  }
  return count == C;
}

inline double eq26(const Matrix& A, const Matrix& U) {
  const double C = double(A.rows());
  double s = 0.0;
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) s += (1.0 - A(i, j)) * U(i, j);
  return s / (C * C);
}

struct SubgraphOptimum {
  double time = std::numeric_limits<double>::infinity();
  Matrix adjacency;
  int candidates = 0;
};

// Minimum over every connected spanning subgraph of `base` that meets the
// consensus threshold. `fixed` holds each cluster's past + last-round time.
inline SubgraphOptimum exhaustive_topology(const Matrix& base, const Matrix& B, const Vector& fixed,
                                           const Matrix& upsilon, double upsilon_max, int psi,
                                           double model_bits) {
  const auto C = base.rows();
  std::vector<std::pair<Eigen::Index, Eigen::Index>> edges;
  for (Eigen::Index i = 0; i < C; ++i)
    for (Eigen::Index j = i + 1; j < C; ++j)
      if (base(i, j) != 0.0) edges.emplace_back(i, j);
  SubgraphOptimum best;
  for (unsigned long mask = 0; mask < (1ul << edges.size()); ++mask) {
    Matrix A = Matrix::Zero(C, C);
    for (std::size_t e = 0; e < edges.size(); ++e)
      if (mask >> e & 1ul) A(edges[e].first, edges[e].second) = A(edges[e].second, edges[e].first) = 1;
    if (!connected_dfs(A) || eq26(A, upsilon) > upsilon_max) continue;
    ++best.candidates;
    double t = 0.0;
    for (Eigen::Index c = 0; c < C; ++c) {
      double slowest = INFINITY;
      for (Eigen::Index d = 0; d < C; ++d)
        if (A(c, d) != 0.0) slowest = std::min(slowest, B(c, d));
      t = std::max(t, fixed(c) + psi * model_bits / slowest);
    }
    if (t < best.time) {
      best.time = t;
      best.adjacency = A;
    }
  }
  return best;
}

}  // namespace oracle
