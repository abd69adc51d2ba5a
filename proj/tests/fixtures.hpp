#pragma once

#include <random>
#include <vector>

#include "hfel/resource_allocator.hpp"

namespace fixture {

struct Instance {
  std::vector<hfel::DeviceProfile> profiles;
  hfel::Hyperparams hyper{1, 1, 10, 32, 10, 2e5, 0.01};
  hfel::Vector snr;
  double budget = 1e6;
  hfel::Vector caps;

  hfel::ClusterRound round() const { return {profiles, snr, budget, caps, {}}; }
};

// Heterogeneous devices drawn like the canonical scenario; caps range from
// tight (energy binds) to loose (f_max reachable).
inline Instance random_instance(std::mt19937_64& rng, int devices) {
  std::uniform_real_distribution<double> mu(5e4, 2e5), scale(0.01, 0.1), snr_db(0.0, 15.0),
      cap(0.004, 0.05), budget(5e5, 2e6);
  Instance in;
  in.snr.resize(devices);
  in.caps.resize(devices);
  in.budget = budget(rng);
  for (int n = 0; n < devices; ++n) {
    in.profiles.push_back({mu(rng), 2e-28 * scale(rng), 0.01, 2e9, 3e9, 1.0});
    in.snr(n) = hfel::db_to_linear(snr_db(rng));
    in.caps(n) = cap(rng);
  }
  return in;
}

}  // namespace fixture
