#pragma once

// Server-to-server backhaul graphs: Laplacian spectra, connectivity, gossip
// mixing matrices and the convergence constants derived from them.

#include <random>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "hfel/cost_model.hpp"

namespace hfel {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Eigenvalues below this are treated as zero when judging connectivity.
inline constexpr double kConnectivityTol = 1e-9;

struct Edge {
  int a = 0;
  int b = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

struct BackhaulGraph {
  Matrix base_adjacency;    // A_b, symmetric 0/1, zero diagonal
  Matrix active_adjacency;  // A^t, subset of A_b
  Matrix bandwidth;         // B^t in bits/s, zero off base edges

  int num_servers() const { return static_cast<int>(base_adjacency.rows()); }

  /// Throws DomainError if any structural invariant is broken.
  void validate() const;
};

struct ConvergenceConstants {
  double omega1 = 0.0;
  double omega2 = 0.0;
};

template <typename Derived>
Matrix laplacian(const Eigen::MatrixBase<Derived>& adjacency) {
  Matrix L = -adjacency.template cast<double>();
  L.diagonal() = adjacency.template cast<double>().rowwise().sum();
  return L;
}

/// Second-smallest eigenvalue of a symmetric Laplacian (0 for a single node).
double algebraic_connectivity(const Matrix& laplacian);

/// Spectral test λ₂ > kConnectivityTol.
bool is_connected(const Matrix& adjacency);

/// Breadth-first reachability from server 0; independent of the spectrum.
bool is_connected_traversal(const Matrix& adjacency);

/// Metropolis-Hastings weights on the edges of `adjacency`.
Matrix metropolis_mixing(const Matrix& adjacency);

/// I + (A - D)/C: every edge gets weight 1/C. Doubly stochastic for any
/// simple graph on C nodes.
Matrix uniform_edge_mixing(const Matrix& adjacency);

/// Second-largest eigenvalue magnitude of a symmetric mixing matrix.
double zeta(const Matrix& mixing);

ConvergenceConstants convergence_constants(double zeta, int psi);

/// Inputs for evaluating the error bound on the average squared gradient
/// norm. None of these are measured by the simulator.
struct BoundInputs {
  double lipschitz = 1.0;       // L
  double sigma = 0.0;           // stochastic gradient std bound
  double inter_div = 0.0;       // ε
  std::vector<double> intra_div;  // ε_c per cluster
  std::vector<int> cluster_sizes;  // N_c per cluster
  double initial_gap = 0.0;     // F(u¹) - F_inf
};

struct BoundValue {
  double value = 0.0;
  bool step_size_ok = false;  // η within the admissible range
};

BoundValue convergence_bound(const Hyperparams& h, double zeta,
                             const BoundInputs& in);

/// Upper-triangle edge list of an adjacency matrix, lexicographic order.
std::vector<Edge> edges_of(const Matrix& adjacency);

Matrix complete_adjacency(int num_servers);

/// G(C, p) resampled until connected. Throws after max_attempts.
Matrix erdos_renyi_connected(int num_servers, double p, std::mt19937_64& rng,
                             int max_attempts = 10000);

}  // namespace hfel
