#pragma once

// Time and energy formulas of the two-tier edge learning system. All inputs
// are SI units (Hz, seconds, joules, watts, bits); SNR is a linear ratio.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace hfel {

class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DeviceProfile {
  double mu = 0.0;             // CPU cycles per training sample
  double alpha = 0.0;          // effective capacitance coefficient
  double power = 0.0;          // transmit power, W
  double f_min = 0.0;          // Hz
  double f_max = 0.0;          // Hz
  double energy_budget = 0.0;  // J

  void validate() const;
};

struct Hyperparams {
  int T = 1;              // global rounds
  int R = 1;              // edge rounds per global round
  int S = 1;              // local iterations per edge round
  int I = 1;              // batch size
  int psi = 1;            // gossip repetitions per global round
  double model_bits = 1;  // model size in bits
  double eta = 0.01;      // learning rate

  void validate() const;
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

namespace detail {
inline void require_positive(double v, const char* what) {
  if (!(v > 0.0)) throw DomainError(std::string(what) + " must be positive");
}
}  // namespace detail

template <typename Scalar>
Scalar comm_rate(Scalar bandwidth, Scalar snr) {
  detail::require_positive(bandwidth, "bandwidth");
  detail::require_positive(snr, "snr");
  return bandwidth * std::log2(Scalar(1) + snr);
}

/// Upload time of one model; the download leg is not charged.
template <typename Scalar>
Scalar device_comm_time(Scalar model_bits, Scalar bandwidth, Scalar snr) {
  return model_bits / comm_rate(bandwidth, snr);
}

template <typename Scalar>
Scalar device_comp_time(int S, int I, Scalar mu, Scalar f) {
  detail::require_positive(f, "cpu frequency");
  return Scalar(S) * Scalar(I) * mu / f;
}

template <typename Scalar>
Scalar comp_energy(Scalar alpha, int S, int I, Scalar mu, Scalar f) {
  detail::require_positive(alpha, "alpha");
  detail::require_positive(mu, "mu");
  detail::require_positive(f, "cpu frequency");
  if (S <= 0 || I <= 0) throw DomainError("S and I must be positive");
  return alpha / Scalar(2) * Scalar(S) * Scalar(I) * mu * f * f;
}

template <typename Scalar>
Scalar comm_energy(Scalar power, Scalar comm_time) {
  if (power < 0 || comm_time < 0) throw DomainError("negative power or time");
  return power * comm_time;
}

/// Energy of one edge round: upload plus local computation. `local_iters`
/// overrides hyper.S when a device runs a custom iteration count.
inline double device_round_energy(const DeviceProfile& p, const Hyperparams& h,
                                  double bandwidth, double f, double snr,
                                  int local_iters = 0) {
  const int S = local_iters > 0 ? local_iters : h.S;
  const double t_com = device_comm_time(h.model_bits, bandwidth, snr);
  return comm_energy(p.power, t_com) + comp_energy(p.alpha, S, h.I, p.mu, f);
}

inline double device_round_time(const DeviceProfile& p, const Hyperparams& h,
                                double bandwidth, double f, double snr,
                                int local_iters = 0) {
  const int S = local_iters > 0 ? local_iters : h.S;
  return device_comp_time(S, h.I, p.mu, f) +
         device_comm_time(h.model_bits, bandwidth, snr);
}

/// The slowest device sets the pace of an edge round.
template <typename Scalar>
Scalar cluster_round_time(std::span<const Scalar> device_times) {
  if (device_times.empty()) throw DomainError("cluster has no devices");
  return *std::max_element(device_times.begin(), device_times.end());
}

/// ψ gossip exchanges, each bottlenecked by the slowest neighbor link.
template <typename Scalar>
Scalar server_sync_time(int psi, Scalar model_bits,
                        std::span<const Scalar> neighbor_bandwidths) {
  if (neighbor_bandwidths.empty())
    throw DomainError("server has no neighbors to synchronize with");
  const Scalar slowest =
      *std::min_element(neighbor_bandwidths.begin(), neighbor_bandwidths.end());
  detail::require_positive(slowest, "backhaul bandwidth");
  return Scalar(psi) * model_bits / slowest;
}

/// max over clusters of (sum of its edge-round times + its sync time).
/// edge_times is C x R, sync is length C.
template <typename DerivedM, typename DerivedV>
typename DerivedM::Scalar global_round_time(
    const Eigen::MatrixBase<DerivedM>& edge_times,
    const Eigen::MatrixBase<DerivedV>& sync) {
  if (edge_times.rows() != sync.size() || edge_times.rows() == 0)
    throw DomainError("edge_times rows must match sync length");
  return (edge_times.rowwise().sum() + sync).maxCoeff();
}

inline void DeviceProfile::validate() const {
  detail::require_positive(mu, "mu");
  detail::require_positive(alpha, "alpha");
  detail::require_positive(power, "power");
  detail::require_positive(energy_budget, "energy_budget");
  detail::require_positive(f_min, "f_min");
  if (f_min > f_max) throw DomainError("f_min exceeds f_max");
}

inline void Hyperparams::validate() const {
  if (T < 1 || R < 1 || S < 1 || I < 1 || psi < 1)
    throw DomainError("round and iteration counts must be >= 1");
  detail::require_positive(model_bits, "model_bits");
  detail::require_positive(eta, "eta");
}

}  // namespace hfel
