#pragma once

// Per-edge-round bandwidth and CPU frequency allocation inside one cluster.
//
// The round time of a cluster is the slowest device's comp + comm time. For a
// target deadline τ each device has a minimum bandwidth demand; the cluster
// is feasible at τ iff the demands fit in the server's bandwidth budget.
// Demands are nonincreasing in τ, so the optimal τ is found by bisection.

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hfel/cost_model.hpp"

namespace hfel {

using Vector = Eigen::VectorXd;

/// Raised when no allocation can honor a device's energy cap.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(int device, const std::string& what)
      : std::runtime_error(what), device_(device) {}
  int device() const { return device_; }

 private:
  int device_;
};

struct Allocation {
  Vector bandwidth;  // Hz per device
  Vector frequency;  // Hz per device
};

class EnergyLedger {
 public:
  EnergyLedger() = default;
  explicit EnergyLedger(Vector budget);

  const Vector& spent() const { return spent_; }
  const Vector& budget() const { return budget_; }
  Vector remaining() const { return budget_ - spent_; }

  void charge(const Vector& energy);
  /// Throws InfeasibleError naming the first device over budget.
  void check() const;

 private:
  Vector spent_;
  Vector budget_;
};

enum class RoundPhase { mid_round, last_round };

/// Remaining budget divided by the number of rounds the current round's
/// energy is pre-committed for.
Vector energy_cap(const EnergyLedger& ledger, int t, int r, int T, int R,
                  RoundPhase phase);

/// Commitment multiplier used by energy_cap.
int commitment_multiplier(int t, int r, int T, int R, RoundPhase phase);

struct DeviceChoice {
  double frequency = 0.0;
  double bandwidth = 0.0;
};

/// Bandwidth at which comp + comm exactly fills τ. nullopt if computation
/// alone already takes τ or longer.
std::optional<double> min_bandwidth_for_deadline(const DeviceProfile& p,
                                                 const Hyperparams& h, double snr,
                                                 double tau, double f,
                                                 int local_iters = 0);

/// Largest f whose round energy, with communication stretched to fill τ,
/// stays within the cap. Paired with the minimal bandwidth for that f.
std::optional<DeviceChoice> best_frequency_for_deadline(const DeviceProfile& p,
                                                        const Hyperparams& h,
                                                        double snr, double tau,
                                                        double energy_cap,
                                                        int local_iters = 0);

/// Smallest bandwidth with which the device meets both τ and its energy cap.
/// Same as best_frequency_for_deadline when that succeeds; otherwise the
/// device runs at f_min and gets enough bandwidth to lower its upload energy
/// below the cap, finishing before τ.
std::optional<DeviceChoice> device_bandwidth_demand(const DeviceProfile& p,
                                                    const Hyperparams& h,
                                                    double snr, double tau,
                                                    double energy_cap,
                                                    int local_iters = 0);

/// One cluster's allocation problem for a single edge round.
struct ClusterRound {
  std::span<const DeviceProfile> profiles;
  Vector snr;                   // linear, per device
  double bandwidth_budget = 0;  // Hz
  Vector energy_caps;           // J, per device
  std::vector<int> local_iters; // empty means hyper.S for everyone
};

struct ClusterAllocation {
  Allocation allocation;
  double round_time = 0.0;   // realized max device time after redistribution
  double deadline = 0.0;     // bisection feasibility boundary
};

/// Minimizes the cluster's round time subject to the bandwidth budget,
/// frequency bounds and per-device energy caps.
ClusterAllocation solve_cluster_round(const ClusterRound& round, const Hyperparams& h);

/// solve_cluster_round with caps taken from the ledger for round (t, r).
ClusterAllocation solve_p21(std::span<const DeviceProfile> profiles,
                            const Hyperparams& h, const Vector& snr,
                            double bandwidth_budget, const EnergyLedger& ledger,
                            int t, int r,
                            RoundPhase phase = RoundPhase::mid_round,
                            const std::vector<int>& local_iters = {});

/// Largest feasible frequency when the bandwidth is fixed in advance.
std::optional<double> frequency_for_fixed_bandwidth(const DeviceProfile& p,
                                                    const Hyperparams& h, double snr,
                                                    double bandwidth,
                                                    double energy_cap,
                                                    int local_iters = 0);

/// Even bandwidth split; each device takes its fastest energy-feasible
/// frequency.
ClusterAllocation solve_uniform_bandwidth(const ClusterRound& round,
                                          const Hyperparams& h);

/// Per-device round times and energies of an allocation.
Vector allocation_times(const ClusterRound& round, const Hyperparams& h,
                        const Allocation& a);
Vector allocation_energies(const ClusterRound& round, const Hyperparams& h,
                           const Allocation& a);

}  // namespace hfel
