#pragma once

// End-to-end simulation of one scenario under FedRT or a baseline.

#include <string>
#include <vector>

#include "hfel/resource_allocator.hpp"
#include "hfel/scenario.hpp"
#include "hfel/topology_designer.hpp"

namespace hfel {

/// One record per (global round t, edge round r). Per-device and per-cluster
/// vectors are indexed by global device id / cluster id.
struct RoundTrace {
  std::string method;
  std::uint64_t seed = 0;
  int t = 0;
  int r = 0;
  Vector cluster_time;       // this edge round's time per cluster
  Vector sync_time;          // gossip time per cluster, zero before r = R-1
  double global_time = 0.0;  // time since the start of global round t
  double elapsed = 0.0;      // cumulative simulated time
  Vector snr;
  Vector bandwidth;
  Vector frequency;
  std::vector<int> local_iters;
  Vector energy_cap;
  Vector energy;             // spent this edge round
  Vector cumulative_energy;
  Matrix backhaul;           // B^t
  Matrix active_adjacency;   // topology used for this global round's sync
  double consensus_bound = 0.0;    // consensus constraint LHS on the chosen topology
  double upsilon_max = 0.0;
  double consensus_average = 0.0;  // realized spread of server models
  int max_staleness = 0;
  double predicted_time = 0.0;     // designer's forecast of global_time, r = R-1 only
  int allocator_calls = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;

  friend bool operator==(const RoundTrace&, const RoundTrace&) = default;
};

struct RunResult {
  ScenarioConfig config;
  std::vector<RoundTrace> traces;

  double total_time() const;
  double total_energy() const;
  double best_accuracy() const;
  double final_accuracy() const;
};

/// MLL-SGD iteration counts: each device runs as many steps as fit in the
/// time its cluster's slowest device needs for S steps at f_max (min 1).
std::vector<int> scaled_local_iterations(std::span<const DeviceProfile> cluster, int S);

/// Dispatches on cfg.method.
RunResult run_method(const ScenarioConfig& cfg);
RunResult run_fedrt(ScenarioConfig cfg);
RunResult run_baseline(ScenarioConfig cfg);

}  // namespace hfel
