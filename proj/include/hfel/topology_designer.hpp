#pragma once

// Joint last-edge-round allocation and backhaul topology selection by greedy
// removal of the slowest links.

#include <functional>
#include <vector>

#include "hfel/backhaul_graph.hpp"
#include "hfel/resource_allocator.hpp"

namespace hfel {

/// Pairwise edge-model distances with per-entry staleness (global rounds
/// since the entry was last measured).
struct ConsensusMatrix {
  Matrix upsilon;
  Eigen::MatrixXi staleness;

  static ConsensusMatrix zeros(int num_servers);

  /// Re-measure entries for pairs linked in `adjacency`; every other entry
  /// keeps its value and ages by one.
  void refresh(const Matrix& server_models, const Matrix& adjacency);

  int max_staleness() const;
};

/// (1/C²) Σ_c Σ_c' (1 - A_cc') Υ_cc'. Bounds the expected average consensus
/// distance after mixing over A with uniform weights.
double consensus_constraint_lhs(const Matrix& adjacency, const Matrix& upsilon);

/// ψΛ / (slowest active link) for every server.
Vector sync_times(const Matrix& adjacency, const Matrix& bandwidth, const Hyperparams& h);

/// max_c (past edge-round time + last edge-round time + sync time on A).
double predicted_global_time(const Vector& past_times, const Vector& last_round_times,
                             const Matrix& adjacency, const Matrix& bandwidth,
                             const Hyperparams& h);

/// Up to e active links, slowest first, such that removing all of them keeps
/// the consensus bound within upsilon_max. Links whose removal would breach
/// it are skipped. Ties go to the lexicographically smaller (c, c').
std::vector<Edge> select_slowest_links(const Matrix& adjacency, const Matrix& bandwidth,
                                       int e, const Matrix& upsilon, double upsilon_max);

struct ClusterState {
  ClusterRound last_round;  // caps already set for the final edge round
  double past_time = 0.0;   // sum of this cluster's earlier edge-round times
};

using ClusterAllocator =
    std::function<ClusterAllocation(const ClusterRound&, const Hyperparams&)>;

struct TopologyDecision {
  Matrix active_adjacency;
  std::vector<ClusterAllocation> allocations;
  double predicted_time = 0.0;
  double base_predicted_time = 0.0;
  std::vector<double> accepted_times;  // starts with the base-graph time
  int allocator_calls = 0;
  int iterations = 0;
};

struct DesignInputs {
  std::span<const ClusterState> clusters;
  const Matrix* base_adjacency = nullptr;
  const Matrix* bandwidth = nullptr;  // B^t
  const Matrix* upsilon = nullptr;
  double upsilon_max = 0.0;
};

/// Upper bound on while-loop iterations of solve_p22 for a graph with
/// `num_edges` links.
int designer_iteration_bound(int num_edges);

/// Greedy slow-link removal. Starts from the base graph and only accepts a
/// pruned graph when the predicted global time strictly drops.
TopologyDecision solve_p22(const DesignInputs& in, const Hyperparams& h,
                           const ClusterAllocator& allocate = solve_cluster_round);

}  // namespace hfel
