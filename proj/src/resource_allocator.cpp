#include "hfel/resource_allocator.hpp"

#include <cmath>
#include <limits>

namespace hfel {

namespace {

constexpr double kCapMargin = 1.0 - 1e-9;
constexpr double kFreqRelTol = 1e-10;
constexpr double kDeadlineRelTol = 1e-10;
constexpr int kMaxBisect = 200;

int iters_for(const Hyperparams& h, int local_iters) {
  return local_iters > 0 ? local_iters : h.S;
}

int iters_at(const ClusterRound& round, const Hyperparams& h, std::size_t n) {
  return round.local_iters.empty() ? h.S : round.local_iters.at(n);
}

// Round energy when comm time is stretched to exactly τ - comp(f).
double boundary_energy(const DeviceProfile& p, const Hyperparams& h, int S,
                       double tau, double f) {
  const double comp = device_comp_time(S, h.I, p.mu, f);
  return p.power * (tau - comp) + comp_energy(p.alpha, S, h.I, p.mu, f);
}

// Bandwidth needed so upload energy fits in what computation leaves of the cap.
double energy_bandwidth(const DeviceProfile& p, const Hyperparams& h, int S,
                        double snr, double f, double cap) {
  const double left = cap - comp_energy(p.alpha, S, h.I, p.mu, f);
  if (left <= 0.0) return std::numeric_limits<double>::infinity();
  return p.power * h.model_bits / (left * std::log2(1.0 + snr));
}

}  // namespace

EnergyLedger::EnergyLedger(Vector budget)
    : spent_(Vector::Zero(budget.size())), budget_(std::move(budget)) {}

void EnergyLedger::charge(const Vector& energy) {
  if (energy.size() != spent_.size())
    throw DomainError("energy vector does not match ledger size");
  if ((energy.array() < 0.0).any()) throw DomainError("negative energy charge");
  spent_ += energy;
}

void EnergyLedger::check() const {
  for (Eigen::Index n = 0; n < spent_.size(); ++n)
    if (spent_(n) > budget_(n))
      throw InfeasibleError(static_cast<int>(n),
                            "device " + std::to_string(n) + " exceeded its energy budget");
}

int commitment_multiplier(int t, int r, int T, int R, RoundPhase phase) {
  if (t < 0 || t >= T || r < 0 || r >= R) throw DomainError("round index out of range");
  return phase == RoundPhase::mid_round ? (T - t) * R + R - r : (T - t) * R + 1;
}

Vector energy_cap(const EnergyLedger& ledger, int t, int r, int T, int R,
                  RoundPhase phase) {
  ledger.check();
  return ledger.remaining() / static_cast<double>(commitment_multiplier(t, r, T, R, phase));
}

std::optional<double> min_bandwidth_for_deadline(const DeviceProfile& p,
                                                 const Hyperparams& h, double snr,
                                                 double tau, double f,
                                                 int local_iters) {
  const double comp = device_comp_time(iters_for(h, local_iters), h.I, p.mu, f);
  if (!(tau > comp)) return std::nullopt;
  return h.model_bits / ((tau - comp) * std::log2(1.0 + snr));
}

std::optional<DeviceChoice> best_frequency_for_deadline(const DeviceProfile& p,
                                                        const Hyperparams& h,
                                                        double snr, double tau,
                                                        double energy_cap,
                                                        int local_iters) {
  if (!(tau > 0.0) || energy_cap < 0.0) throw DomainError("need tau > 0 and cap >= 0");
  const int S = iters_for(h, local_iters);
  const double cap = energy_cap * kCapMargin;
  // Computation alone takes exactly τ at this frequency.
  const double f_tight = double(S) * h.I * p.mu / tau;
  if (f_tight >= p.f_max) return std::nullopt;

  auto pair_with = [&](double f) -> std::optional<DeviceChoice> {
    auto b = min_bandwidth_for_deadline(p, h, snr, tau, f, S);
    if (!b) return std::nullopt;
    return DeviceChoice{f, *b};
  };

  if (boundary_energy(p, h, S, tau, p.f_max) <= cap) return pair_with(p.f_max);

  // boundary_energy is increasing in f; find the largest f meeting the cap.
  double lo;
  if (f_tight < p.f_min) {
    lo = p.f_min;
    if (boundary_energy(p, h, S, tau, lo) > cap) return std::nullopt;
  } else {
    lo = f_tight;  // comm time zero here, so boundary energy is comp only
    if (comp_energy(p.alpha, S, h.I, p.mu, lo) >= cap) return std::nullopt;
  }
  double hi = p.f_max;
  for (int it = 0; it < kMaxBisect && hi - lo > kFreqRelTol * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (boundary_energy(p, h, S, tau, mid) <= cap) lo = mid;
    else hi = mid;
  }
  if (lo <= f_tight) return std::nullopt;
  return pair_with(lo);
}

std::optional<DeviceChoice> device_bandwidth_demand(const DeviceProfile& p,
                                                    const Hyperparams& h,
                                                    double snr, double tau,
                                                    double energy_cap,
                                                    int local_iters) {
  if (auto best = best_frequency_for_deadline(p, h, snr, tau, energy_cap, local_iters))
    return best;
  const int S = iters_for(h, local_iters);
  auto b_time = min_bandwidth_for_deadline(p, h, snr, tau, p.f_min, S);
  if (!b_time) return std::nullopt;
  const double b_energy = energy_bandwidth(p, h, S, snr, p.f_min, energy_cap * kCapMargin);
  if (!std::isfinite(b_energy)) return std::nullopt;
  return DeviceChoice{p.f_min, std::max(*b_time, b_energy)};
}

namespace {

struct Demand {
  bool feasible = false;
  double total = 0.0;
  std::vector<DeviceChoice> choices;
};

Demand demand_at(const ClusterRound& round, const Hyperparams& h, double tau) {
  Demand d;
  d.choices.reserve(round.profiles.size());
  for (std::size_t n = 0; n < round.profiles.size(); ++n) {
    auto c = device_bandwidth_demand(round.profiles[n], h, round.snr(Eigen::Index(n)), tau,
                                     round.energy_caps(Eigen::Index(n)),
                                     iters_at(round, h, n));
    if (!c) return d;
    d.total += c->bandwidth;
    d.choices.push_back(*c);
  }
  d.feasible = d.total <= round.bandwidth_budget;
  return d;
}

void validate_round(const ClusterRound& round) {
  const auto n = static_cast<Eigen::Index>(round.profiles.size());
  if (n == 0) throw DomainError("cluster has no devices");
  if (!(round.bandwidth_budget > 0.0)) throw DomainError("bandwidth budget must be positive");
  if (round.snr.size() != n || round.energy_caps.size() != n)
    throw DomainError("per-device vectors do not match device count");
  if (!round.local_iters.empty() && round.local_iters.size() != round.profiles.size())
    throw DomainError("local iteration counts do not match device count");
  if ((round.snr.array() <= 0.0).any()) throw DomainError("snr must be positive");
  if ((round.energy_caps.array() < 0.0).any()) throw DomainError("negative energy cap");
}

}  // namespace

ClusterAllocation solve_cluster_round(const ClusterRound& round, const Hyperparams& h) {
  validate_round(round);
  const auto n = static_cast<Eigen::Index>(round.profiles.size());

  // As τ → ∞ every device runs at f_min and only needs enough bandwidth to
  // keep its upload energy under the cap.
  double asymptotic = 0.0;
  int hungriest = 0;
  double hungriest_demand = -1.0;
  double tau_lo = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = round.profiles[std::size_t(i)];
    const int S = iters_at(round, h, std::size_t(i));
    const double b_inf =
        energy_bandwidth(p, h, S, round.snr(i), p.f_min, round.energy_caps(i) * kCapMargin);
    if (!std::isfinite(b_inf))
      throw InfeasibleError(int(i), "device " + std::to_string(i) +
                                        ": energy cap is below computation energy at f_min");
    asymptotic += b_inf;
    if (b_inf > hungriest_demand) {
      hungriest_demand = b_inf;
      hungriest = int(i);
    }
    tau_lo = std::max(tau_lo, device_comp_time(S, h.I, p.mu, p.f_max));
  }
  if (asymptotic >= round.bandwidth_budget)
    throw InfeasibleError(hungriest, "device " + std::to_string(hungriest) +
                                         ": cluster bandwidth cannot cover upload energy caps");

  double tau_hi = 2.0 * tau_lo;
  Demand best = demand_at(round, h, tau_hi);
  for (int it = 0; !best.feasible; ++it) {
    if (it > 2000) throw InfeasibleError(hungriest, "deadline search did not converge");
    tau_lo = tau_hi;
    tau_hi *= 2.0;
    best = demand_at(round, h, tau_hi);
  }
  for (int it = 0; it < kMaxBisect && tau_hi - tau_lo > kDeadlineRelTol * tau_hi; ++it) {
    const double mid = 0.5 * (tau_lo + tau_hi);
    Demand d = demand_at(round, h, mid);
    if (d.feasible) {
      tau_hi = mid;
      best = std::move(d);
    } else {
      tau_lo = mid;
    }
  }

  ClusterAllocation out;
  out.deadline = tau_hi;
  out.allocation.bandwidth.resize(n);
  out.allocation.frequency.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.allocation.bandwidth(i) = best.choices[std::size_t(i)].bandwidth;
    out.allocation.frequency(i) = best.choices[std::size_t(i)].frequency;
  }
  // Hand out the leftover budget in proportion to current shares.
  out.allocation.bandwidth *= round.bandwidth_budget / best.total;
  out.round_time = allocation_times(round, h, out.allocation).maxCoeff();
  return out;
}

ClusterAllocation solve_p21(std::span<const DeviceProfile> profiles,
                            const Hyperparams& h, const Vector& snr,
                            double bandwidth_budget, const EnergyLedger& ledger,
                            int t, int r, RoundPhase phase,
                            const std::vector<int>& local_iters) {
  ClusterRound round{profiles, snr, bandwidth_budget,
                     energy_cap(ledger, t, r, h.T, h.R, phase), local_iters};
  return solve_cluster_round(round, h);
}

std::optional<double> frequency_for_fixed_bandwidth(const DeviceProfile& p,
                                                    const Hyperparams& h, double snr,
                                                    double bandwidth,
                                                    double energy_cap,
                                                    int local_iters) {
  const int S = iters_for(h, local_iters);
  const double left = energy_cap * kCapMargin -
                      comm_energy(p.power, device_comm_time(h.model_bits, bandwidth, snr));
  if (left <= 0.0) return std::nullopt;
  const double f = std::sqrt(left / (p.alpha / 2.0 * S * h.I * p.mu));
  if (f < p.f_min) return std::nullopt;
  return std::min(f, p.f_max);
}

ClusterAllocation solve_uniform_bandwidth(const ClusterRound& round, const Hyperparams& h) {
  validate_round(round);
  const auto n = static_cast<Eigen::Index>(round.profiles.size());
  ClusterAllocation out;
  out.allocation.bandwidth = Vector::Constant(n, round.bandwidth_budget / double(n));
  out.allocation.frequency.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto f = frequency_for_fixed_bandwidth(round.profiles[std::size_t(i)], h, round.snr(i),
                                           out.allocation.bandwidth(i), round.energy_caps(i),
                                           iters_at(round, h, std::size_t(i)));
    if (!f)
      throw InfeasibleError(int(i), "device " + std::to_string(i) +
                                        ": no frequency meets the energy cap at an even bandwidth split");
    out.allocation.frequency(i) = *f;
  }
  out.round_time = allocation_times(round, h, out.allocation).maxCoeff();
  out.deadline = out.round_time;
  return out;
}

Vector allocation_times(const ClusterRound& round, const Hyperparams& h,
                        const Allocation& a) {
  const auto n = static_cast<Eigen::Index>(round.profiles.size());
  Vector t(n);
  for (Eigen::Index i = 0; i < n; ++i)
    t(i) = device_round_time(round.profiles[std::size_t(i)], h, a.bandwidth(i), a.frequency(i),
                             round.snr(i), iters_at(round, h, std::size_t(i)));
  return t;
}

Vector allocation_energies(const ClusterRound& round, const Hyperparams& h,
                           const Allocation& a) {
  const auto n = static_cast<Eigen::Index>(round.profiles.size());
  Vector e(n);
  for (Eigen::Index i = 0; i < n; ++i)
    e(i) = device_round_energy(round.profiles[std::size_t(i)], h, a.bandwidth(i),
                               a.frequency(i), round.snr(i),
                               iters_at(round, h, std::size_t(i)));
  return e;
}

}  // namespace hfel
