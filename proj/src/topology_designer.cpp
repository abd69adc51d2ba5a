#include "hfel/topology_designer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hfel {

ConsensusMatrix ConsensusMatrix::zeros(int num_servers) {
  return {Matrix::Zero(num_servers, num_servers),
          Eigen::MatrixXi::Zero(num_servers, num_servers)};
}

void ConsensusMatrix::refresh(const Matrix& server_models, const Matrix& adjacency) {
  const auto C = upsilon.rows();
  if (server_models.rows() != C || adjacency.rows() != C)
    throw DomainError("consensus refresh: server count mismatch");
  for (Eigen::Index i = 0; i < C; ++i) {
    for (Eigen::Index j = 0; j < C; ++j) {
      if (i == j) continue;
      if (adjacency(i, j) != 0.0) {
        upsilon(i, j) = (server_models.row(i) - server_models.row(j)).norm();
        staleness(i, j) = 0;
      } else {
        ++staleness(i, j);
      }
    }
  }
}

int ConsensusMatrix::max_staleness() const {
  return staleness.size() == 0 ? 0 : staleness.maxCoeff();
}

double consensus_constraint_lhs(const Matrix& adjacency, const Matrix& upsilon) {
  if (adjacency.rows() != upsilon.rows() || adjacency.cols() != upsilon.cols())
    throw DomainError("adjacency and consensus matrices differ in shape");
  const double C = static_cast<double>(adjacency.rows());
  Matrix off = Matrix::Ones(adjacency.rows(), adjacency.cols()) - adjacency;
  return (off.array() * upsilon.array()).sum() / (C * C);
}

Vector sync_times(const Matrix& adjacency, const Matrix& bandwidth, const Hyperparams& h) {
  const auto C = adjacency.rows();
  Vector out(C);
  std::vector<double> links;
  for (Eigen::Index c = 0; c < C; ++c) {
    links.clear();
    for (Eigen::Index d = 0; d < C; ++d)
      if (d != c && adjacency(c, d) != 0.0) links.push_back(bandwidth(c, d));
    out(c) = server_sync_time<double>(h.psi, h.model_bits, links);
  }
  return out;
}

double predicted_global_time(const Vector& past_times, const Vector& last_round_times,
                             const Matrix& adjacency, const Matrix& bandwidth,
                             const Hyperparams& h) {
  return (past_times + last_round_times + sync_times(adjacency, bandwidth, h)).maxCoeff();
}

std::vector<Edge> select_slowest_links(const Matrix& adjacency, const Matrix& bandwidth,
                                       int e, const Matrix& upsilon, double upsilon_max) {
  std::vector<Edge> out;
  if (e <= 0) return out;
  std::vector<Edge> links = edges_of(adjacency);
  std::stable_sort(links.begin(), links.end(), [&](const Edge& x, const Edge& y) {
    return bandwidth(x.a, x.b) < bandwidth(y.a, y.b);
  });
  Matrix trial = adjacency;
  for (const Edge& link : links) {
    if (static_cast<int>(out.size()) == e) break;
    trial(link.a, link.b) = trial(link.b, link.a) = 0.0;
    if (consensus_constraint_lhs(trial, upsilon) <= upsilon_max) {
      out.push_back(link);
    } else {
      trial(link.a, link.b) = trial(link.b, link.a) = 1.0;
    }
  }
  return out;
}

int designer_iteration_bound(int num_edges) {
  const int seed = static_cast<int>(std::floor(std::sqrt(2.0 * num_edges)));
  const int halvings = seed > 0 ? static_cast<int>(std::floor(std::log2(seed))) + 1 : 1;
  return (num_edges + 1) * (halvings + 1);
}

namespace {

struct Evaluation {
  std::vector<ClusterAllocation> allocations;
  double time = 0.0;
};

}  // namespace

TopologyDecision solve_p22(const DesignInputs& in, const Hyperparams& h,
                           const ClusterAllocator& allocate) {
  const Matrix& base = *in.base_adjacency;
  const Matrix& B = *in.bandwidth;
  const auto C = static_cast<Eigen::Index>(in.clusters.size());
  if (base.rows() != C || B.rows() != C || in.upsilon->rows() != C)
    throw DomainError("designer inputs disagree on server count");
  if (!is_connected(base)) throw DomainError("base graph must be connected");

  TopologyDecision out;
  Vector past(C);
  for (Eigen::Index c = 0; c < C; ++c) past(c) = in.clusters[std::size_t(c)].past_time;

  auto evaluate = [&](const Matrix& adjacency) {
    Evaluation ev;
    Vector last(C);
    for (Eigen::Index c = 0; c < C; ++c) {
      ev.allocations.push_back(allocate(in.clusters[std::size_t(c)].last_round, h));
      ++out.allocator_calls;
      last(c) = ev.allocations.back().round_time;
    }
    ev.time = predicted_global_time(past, last, adjacency, B, h);
    return ev;
  };

  Matrix best_graph = base;
  Evaluation best = evaluate(best_graph);
  out.base_predicted_time = best.time;
  out.accepted_times.push_back(best.time);

  const int bound = designer_iteration_bound(static_cast<int>(edges_of(base).size()));
  bool improved = true;
  int e = 0;
  while (true) {
    if (++out.iterations > bound)
      throw std::logic_error("topology search exceeded its iteration bound");
    if (improved) {
      e = static_cast<int>(std::floor(std::sqrt(best_graph.sum())));
    } else {
      e /= 2;
    }

    Matrix candidate = best_graph;
    for (const Edge& link : select_slowest_links(best_graph, B, e, *in.upsilon, in.upsilon_max)) {
      candidate(link.a, link.b) = candidate(link.b, link.a) = 0.0;
      if (!is_connected(candidate))
        candidate(link.a, link.b) = candidate(link.b, link.a) = 1.0;
    }

    Evaluation trial = evaluate(candidate);
    if (trial.time < best.time) {
      best = std::move(trial);
      best_graph = std::move(candidate);
      out.accepted_times.push_back(best.time);
      improved = true;
    } else {
      improved = false;
    }
    if (!improved && e <= 1) break;
  }

  out.active_adjacency = std::move(best_graph);
  out.allocations = std::move(best.allocations);
  out.predicted_time = best.time;
  return out;
}

}  // namespace hfel
