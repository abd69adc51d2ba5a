#pragma once

// Scenario configuration, device generation and per-round environment draws.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hfel/backhaul_graph.hpp"
#include "hfel/cost_model.hpp"
#include "hfel/trainer.hpp"

namespace hfel {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Method { FedRT, StaticR, StaticT, CEFedAvg, MLLSGD };

std::string to_string(Method m);
Method parse_method(const std::string& name);
inline constexpr Method kAllMethods[] = {Method::FedRT, Method::StaticR, Method::StaticT,
                                         Method::CEFedAvg, Method::MLLSGD};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct DeviceDistribution {
  Range mu{5e4, 2e5};             // cycles/sample, uniform
  double alpha_base = 2e-28;
  Range alpha_scale{0.01, 0.1};   // α = alpha_base × U(scale)
  double power = 0.01;            // W
  double f_min = 2e9;
  double f_max = 3e9;
  double energy_budget = 1.0;     // J
};

struct BaseGraphSpec {
  enum class Kind { complete, erdos_renyi, explicit_adjacency };
  Kind kind = Kind::complete;
  double p = 1.0;
  Matrix adjacency;  // explicit_adjacency only
};

struct DatasetSpec {
  enum class Kind { synthetic, file };
  Kind kind = Kind::synthetic;
  int classes = 10;
  int dim = 32;
  int samples_per_class = 200;
  int test_samples_per_class = 100;
  double separation = 3.0;
  std::string train_path;
  std::string test_path;
  char delimiter = ',';
};

struct UpsilonSchedule {
  enum class Kind { relative, constant, linear_decay };
  Kind kind = Kind::relative;
  double gamma = 1.0;  // relative: γ × reference spread
  double value = 0.0;  // constant
  double start = 0.0;  // linear_decay
  double end = 0.0;

  /// Threshold for global round t. `reference` is the mean pairwise
  /// consensus distance at the first decision that saw any spread.
  double at(int t, int T, std::optional<double> reference) const;
};

struct ScenarioConfig {
  int servers = 4;
  int devices_per_cluster = 3;
  Hyperparams hyper{50, 2, 10, 32, 10, 2e5, 0.01};
  double momentum = 0.9;
  DeviceDistribution devices;
  Range snr_db{0.0, 15.0};
  double server_bandwidth = 1e6;  // Hz per cluster
  Range backhaul_bps{1e5, 1e7};
  BaseGraphSpec base_graph;
  PartitionSpec partition{PartitionSpec::Scheme::dirichlet, 1.0, 0, 0};
  DatasetSpec dataset;
  int hidden = 0;
  UpsilonSchedule upsilon_max;
  Method method = Method::FedRT;
  std::uint64_t seed = 1;

  int num_devices() const { return servers * devices_per_cluster; }
  void validate() const;
};

ScenarioConfig parse_config(const std::string& json_text);
ScenarioConfig load_config(const std::filesystem::path& path);
std::string dump_config(const ScenarioConfig& cfg);

/// The desk-scale heterogeneous scenario used for method comparisons.
ScenarioConfig canonical_scenario();

std::vector<DeviceProfile> draw_device_profiles(const ScenarioConfig& cfg);

Matrix build_base_graph(const ScenarioConfig& cfg);

struct ChannelState {
  Vector snr;                     // linear, per device
  Vector server_bandwidth;        // Hz, per cluster
};

struct RoundEnvironment {
  ChannelState channel;
  Matrix backhaul;  // B^t in bits/s; constant within a global round
};

/// Draws depend only on (seed, t, r), so every method sees the same
/// environment for a given seed.
RoundEnvironment draw_round_environment(const ScenarioConfig& cfg, const Matrix& base, int t,
                                        int r);

struct DataBundle {
  Dataset train;
  Dataset test;
  std::vector<DataShard> shards;
};

DataBundle prepare_data(const ScenarioConfig& cfg);

/// Seed for the shared initial server model.
std::uint64_t model_init_seed(const ScenarioConfig& cfg);

}  // namespace hfel
