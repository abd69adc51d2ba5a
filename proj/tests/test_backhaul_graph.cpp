#include <doctest.h>

#include <cmath>
#include <random>

#include "hfel/backhaul_graph.hpp"
#include "oracles.hpp"

using namespace hfel;
using doctest::Approx;

namespace {

Matrix path3() {
  Matrix A = Matrix::Zero(3, 3);
  A(0, 1) = A(1, 0) = A(1, 2) = A(2, 1) = 1;
  return A;
}

Matrix ring(int C) {
  Matrix A = Matrix::Zero(C, C);
  for (int i = 0; i < C; ++i) A(i, (i + 1) % C) = A((i + 1) % C, i) = 1;
  return A;
}

Matrix random_graph(int C, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  Matrix A = Matrix::Zero(C, C);
  for (int i = 0; i < C; ++i)
    for (int j = i + 1; j < C; ++j)
      if (coin(rng)) A(i, j) = A(j, i) = 1;
  return A;
}

}  // namespace

TEST_SUITE("backhaul_graph") {

TEST_CASE("laplacian") {
  const Matrix L = laplacian(path3());
  CHECK(L.diagonal() == Vector((Vector(3) << 1, 2, 1).finished()));
  CHECK(L(0, 1) == -1);
  CHECK(L.rowwise().sum().cwiseAbs().maxCoeff() == 0.0);

  const Matrix K = laplacian(complete_adjacency(4));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(K(i, j) == (i == j ? 3.0 : -1.0));

  std::mt19937_64 rng(1);
  for (int k = 0; k < 30; ++k) {
    const Matrix Lr = laplacian(random_graph(7, 0.4, rng));
    CHECK((Lr * Vector::Ones(7)).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<Matrix> es(Lr);
    CHECK(std::abs(es.eigenvalues()(0)) <= 1e-9);
  }
}

TEST_CASE("algebraic connectivity") {
  Matrix two = Matrix::Zero(2, 2);
  CHECK(algebraic_connectivity(laplacian(two)) == Approx(0.0));
  for (int C = 2; C <= 8; ++C)
    CHECK(algebraic_connectivity(laplacian(complete_adjacency(C))) == Approx(C).epsilon(1e-9));
  CHECK(algebraic_connectivity(laplacian(path3())) == Approx(1.0).epsilon(1e-9));
  Matrix asym = Matrix::Zero(2, 2);
  asym(0, 1) = 1;
  CHECK_THROWS_AS(algebraic_connectivity(asym), DomainError);
}

TEST_CASE("connectivity verdicts") {
  Matrix star = Matrix::Zero(5, 5);
  for (int i = 1; i < 5; ++i) star(0, i) = star(i, 0) = 1;
  CHECK(is_connected(star));
  CHECK(is_connected_traversal(star));
  Matrix iso = star;
  iso.row(4).setZero();
  iso.col(4).setZero();
  CHECK_FALSE(is_connected(iso));
  CHECK_FALSE(is_connected_traversal(iso));

  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> size(2, 12);
  std::uniform_real_distribution<double> prob(0.05, 0.8);
  for (int k = 0; k < 200; ++k) {
    const Matrix A = random_graph(size(rng), prob(rng), rng);
    const bool truth = oracle::connected_dfs(A);
    CHECK(is_connected(A) == truth);
    CHECK(is_connected_traversal(A) == truth);
  }
}

TEST_CASE("metropolis mixing") {
  const Matrix K2 = metropolis_mixing(complete_adjacency(2));
  CHECK(K2.isApprox(Matrix::Constant(2, 2, 0.5)));
  CHECK(metropolis_mixing(Matrix::Zero(4, 4)) == Matrix::Identity(4, 4));

  std::mt19937_64 rng(2);
  int tested = 0;
  while (tested < 100) {
    const Matrix A = random_graph(6, 0.5, rng);
    if (!oracle::connected_dfs(A)) continue;
    ++tested;
    const Matrix M = metropolis_mixing(A);
    CHECK((M * Vector::Ones(6) - Vector::Ones(6)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((M.transpose() * Vector::Ones(6) - Vector::Ones(6)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((M - M.transpose()).cwiseAbs().maxCoeff() == 0.0);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j)
        if (i != j && A(i, j) == 0) CHECK(M(i, j) == 0.0);
    CHECK(zeta(M) < 1.0);
  }
}

TEST_CASE("uniform edge mixing is doubly stochastic") {
  const Matrix M = uniform_edge_mixing(complete_adjacency(5));
  CHECK(M.isApprox(Matrix::Constant(5, 5, 0.2)));
  const Matrix P = uniform_edge_mixing(path3());
  CHECK((P.rowwise().sum() - Vector::Ones(3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zeta") {
  CHECK(zeta(Matrix::Identity(4, 4)) == Approx(1.0));
  CHECK(zeta(metropolis_mixing(complete_adjacency(2))) == Approx(0.0).scale(1.0));
  // Adding a chord to a ring raises λ₂, so ζ of I − L/C cannot grow.
  for (int C = 4; C <= 12; ++C) {
    const double z0 = zeta(uniform_edge_mixing(ring(C)));
    for (int j = 2; j < C - 1; ++j) {
      Matrix A = ring(C);
      A(0, j) = A(j, 0) = 1;
      CHECK(zeta(uniform_edge_mixing(A)) <= z0 + 1e-12);
      CHECK(algebraic_connectivity(laplacian(A)) >= algebraic_connectivity(laplacian(ring(C))) - 1e-12);
    }
  }
  // Metropolis weights shrink at the chord's endpoints, which slows mixing on
  // small rings.
  Matrix A = ring(4);
  A(0, 2) = A(2, 0) = 1;
  CHECK(zeta(metropolis_mixing(ring(4))) == Approx(1.0 / 3.0));
  CHECK(zeta(metropolis_mixing(A)) == Approx(0.5));
}

TEST_CASE("convergence constants") {
  auto k0 = convergence_constants(0.0, 10);
  CHECK(k0.omega1 == 0.0);
  CHECK(k0.omega2 == Approx(3.0));
  auto k = convergence_constants(0.5, 1);
  CHECK(k.omega1 == Approx(1.0 / 3.0));
  CHECK(k.omega2 == Approx(22.0 / 3.0));
  double p1 = -1, p2 = -1;
  for (int i = 0; i <= 9; ++i) {
    auto c = convergence_constants(i / 10.0, 2);
    CHECK(c.omega1 >= 0.0);
    CHECK(c.omega2 > 0.0);
    if (i > 0) {
      CHECK(c.omega1 > p1);
      CHECK(c.omega2 > p2);
    }
    p1 = c.omega1;
    p2 = c.omega2;
  }
  CHECK_THROWS_AS(convergence_constants(1.0, 1), DomainError);
}

TEST_CASE("convergence bound diagnostic") {
  Hyperparams h{10, 2, 5, 16, 4, 1e5, 0.001};
  BoundInputs in;
  in.lipschitz = 1.0;
  in.sigma = 0.5;
  in.inter_div = 0.1;
  in.intra_div = {0.1, 0.2};
  in.cluster_sizes = {3, 3};
  in.initial_gap = 2.0;
  const auto slow = convergence_bound(h, 0.9, in);
  const auto fast = convergence_bound(h, 0.1, in);
  CHECK(slow.value > fast.value);
  CHECK(fast.step_size_ok);
  h.eta = 10.0;
  CHECK_FALSE(convergence_bound(h, 0.1, in).step_size_ok);
}

TEST_CASE("graph value validation") {
  BackhaulGraph g{complete_adjacency(3), path3(), Matrix::Zero(3, 3)};
  CHECK_NOTHROW(g.validate());
  g.active_adjacency = complete_adjacency(3);
  g.base_adjacency = path3();
  CHECK_THROWS_AS(g.validate(), DomainError);
  g.base_adjacency = path3();
  g.active_adjacency = path3();
  g.bandwidth = Matrix::Constant(3, 3, 1.0);
  CHECK_THROWS_AS(g.validate(), DomainError);
}

TEST_CASE("erdos renyi sampling is connected and deterministic") {
  for (double p : {0.2, 0.5, 1.0}) {
    std::mt19937_64 a(9), b(9);
    const Matrix g1 = erdos_renyi_connected(8, p, a);
    const Matrix g2 = erdos_renyi_connected(8, p, b);
    CHECK(g1 == g2);
    CHECK(oracle::connected_dfs(g1));
    CHECK(edges_of(g1).size() == std::size_t(g1.sum() / 2));
  }
}

}
