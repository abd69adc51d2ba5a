#include "hfel/backhaul_graph.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include <Eigen/Eigenvalues>

namespace hfel {

namespace {

void require_square_symmetric(const Matrix& m, const char* what) {
  if (m.rows() != m.cols())
    throw DomainError(std::string(what) + " must be square");
  if (m.size() > 0 && (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw DomainError(std::string(what) + " must be symmetric");
}

void require_zero_one_adjacency(const Matrix& a, const char* what) {
  require_square_symmetric(a, what);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (a(i, i) != 0.0)
      throw DomainError(std::string(what) + " must have zero diagonal");
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (a(i, j) != 0.0 && a(i, j) != 1.0)
        throw DomainError(std::string(what) + " entries must be 0 or 1");
  }
}

}  // namespace

void BackhaulGraph::validate() const {
  require_zero_one_adjacency(base_adjacency, "base adjacency");
  require_zero_one_adjacency(active_adjacency, "active adjacency");
  require_square_symmetric(bandwidth, "bandwidth");
  const auto C = base_adjacency.rows();
  if (active_adjacency.rows() != C || bandwidth.rows() != C)
    throw DomainError("graph matrices disagree on server count");
  if ((active_adjacency.array() > base_adjacency.array()).any())
    throw DomainError("active edges must be a subset of base edges");
  if ((bandwidth.array() < 0.0).any())
    throw DomainError("bandwidth must be nonnegative");
  for (Eigen::Index i = 0; i < C; ++i)
    for (Eigen::Index j = 0; j < C; ++j)
      if (base_adjacency(i, j) == 0.0 && bandwidth(i, j) != 0.0)
        throw DomainError("bandwidth must be zero off base edges");
  if (!is_connected(base_adjacency))
    throw DomainError("base graph must be connected");
}

double algebraic_connectivity(const Matrix& laplacian) {
  require_square_symmetric(laplacian, "laplacian");
  if (laplacian.rows() < 2) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(laplacian, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(1);  // ascending order
}

bool is_connected(const Matrix& adjacency) {
  if (adjacency.rows() <= 1) return true;
  return algebraic_connectivity(laplacian(adjacency)) > kConnectivityTol;
}

bool is_connected_traversal(const Matrix& adjacency) {
  const auto n = adjacency.rows();
  if (n <= 1) return true;
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  std::queue<Eigen::Index> frontier;
  frontier.push(0);
  seen[0] = true;
  Eigen::Index reached = 1;
  while (!frontier.empty()) {
    const auto u = frontier.front();
    frontier.pop();
    for (Eigen::Index v = 0; v < n; ++v) {
      if (adjacency(u, v) != 0.0 && !seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = true;
        ++reached;
        frontier.push(v);
      }
    }
  }
  return reached == n;
}

Matrix metropolis_mixing(const Matrix& adjacency) {
  require_zero_one_adjacency(adjacency, "adjacency");
  const auto n = adjacency.rows();
  const Vector deg = adjacency.rowwise().sum();
  Matrix M = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j && adjacency(i, j) != 0.0)
        M(i, j) = 1.0 / (1.0 + std::max(deg(i), deg(j)));
  M.diagonal() = Vector::Ones(n) - M.rowwise().sum();
  return M;
}

Matrix uniform_edge_mixing(const Matrix& adjacency) {
  require_zero_one_adjacency(adjacency, "adjacency");
  const auto n = adjacency.rows();
  return Matrix::Identity(n, n) - laplacian(adjacency) / static_cast<double>(n);
}

double zeta(const Matrix& mixing) {
  require_square_symmetric(mixing, "mixing matrix");
  if (mixing.rows() < 2) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(mixing, Eigen::EigenvaluesOnly);
  Vector mags = es.eigenvalues().cwiseAbs();
  std::sort(mags.begin(), mags.end(), std::greater<>());
  return mags(1);
}

ConvergenceConstants convergence_constants(double zeta, int psi) {
  if (!(zeta >= 0.0) || zeta >= 1.0)
    throw DomainError("zeta must lie in [0, 1)");
  if (psi < 1) throw DomainError("psi must be >= 1");
  const double zp = std::pow(zeta, psi);
  const double z2p = zp * zp;
  ConvergenceConstants k;
  k.omega1 = z2p / (1.0 - z2p);
  k.omega2 = 1.0 / (1.0 - z2p) + 2.0 / (1.0 - zp) + zp / ((1.0 - zp) * (1.0 - zp));
  return k;
}

BoundValue convergence_bound(const Hyperparams& h, double zeta_value,
                             const BoundInputs& in) {
  if (in.intra_div.size() != in.cluster_sizes.size() || in.cluster_sizes.empty())
    throw DomainError("intra-cluster divergences must match cluster sizes");
  const auto k = convergence_constants(zeta_value, h.psi);
  const double C = static_cast<double>(in.cluster_sizes.size());
  double N = 0.0;
  for (int n : in.cluster_sizes) N += n;
  const double L = in.lipschitz, eta = h.eta, s2 = in.sigma * in.sigma;
  const double R = h.R, S = h.S, Phi = double(h.R) * h.T * h.S;
  const double e2L2 = eta * eta * L * L;

  double intra = 0.0;
  for (std::size_t c = 0; c < in.cluster_sizes.size(); ++c)
    intra += in.cluster_sizes[c] / N * in.intra_div[c] * in.intra_div[c];

  BoundValue out;
  out.value = 2.0 * in.initial_gap / (eta * Phi) + eta * L * s2 / N +
              8.0 * e2L2 * (k.omega1 * R * S + (C - 1.0) / N * R * S) * s2 +
              16.0 * e2L2 * R * R * S * S * k.omega2 * in.inter_div * in.inter_div +
              8.0 * (N - C) / N * e2L2 * S * s2 + 16.0 * e2L2 * S * S * intra;
  const double eta_max = std::min(1.0 / (2.0 * L * S),
                                  1.0 / (2.0 * std::sqrt(2.0 * k.omega2) * L * R * S));
  out.step_size_ok = eta <= eta_max;
  return out;
}

std::vector<Edge> edges_of(const Matrix& adjacency) {
  std::vector<Edge> out;
  for (int i = 0; i < adjacency.rows(); ++i)
    for (int j = i + 1; j < adjacency.cols(); ++j)
      if (adjacency(i, j) != 0.0) out.push_back({i, j});
  return out;
}

Matrix complete_adjacency(int num_servers) {
  return Matrix::Ones(num_servers, num_servers) -
         Matrix::Identity(num_servers, num_servers);
}

Matrix erdos_renyi_connected(int num_servers, double p, std::mt19937_64& rng,
                             int max_attempts) {
  if (num_servers < 1) throw DomainError("need at least one server");
  if (!(p > 0.0) || p > 1.0) throw DomainError("edge probability must be in (0, 1]");
  std::bernoulli_distribution coin(p);
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Matrix a = Matrix::Zero(num_servers, num_servers);
    for (int i = 0; i < num_servers; ++i)
      for (int j = i + 1; j < num_servers; ++j)
        if (coin(rng)) a(i, j) = a(j, i) = 1.0;
    if (is_connected(a)) return a;
  }
  throw DomainError("could not sample a connected graph; raise edge probability");
}

}  // namespace hfel
