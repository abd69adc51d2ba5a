#pragma once

// Learner, local SGD, intra-cluster averaging, inter-server gossip and the
// data partitioning used to drive the simulator.

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hfel/cost_model.hpp"

namespace hfel {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Dataset {
  Matrix features;          // one sample per row
  std::vector<int> labels;  // in [0, num_classes)
  int num_classes = 0;

  Eigen::Index size() const { return features.rows(); }
  void validate() const;
};

struct DataShard {
  Matrix features;
  std::vector<int> labels;
  int owner = 0;  // device id
};

struct PartitionSpec {
  enum class Scheme { iid, dirichlet, cluster_pathological };
  Scheme scheme = Scheme::iid;
  double beta = 1.0;           // Dirichlet concentration
  int labels_per_cluster = 0;  // LC for the cluster-pathological scheme
  std::uint64_t seed = 0;
};

/// Softmax regression, or a single tanh hidden layer when hidden > 0.
struct ModelShape {
  int dim = 0;
  int num_classes = 0;
  int hidden = 0;

  Eigen::Index num_params() const;
};

struct LossGrad {
  double loss = 0.0;
  Vector grad;
};

/// Mean softmax cross-entropy and its gradient over the given samples.
LossGrad loss_and_gradient(const ModelShape& shape, const Vector& params,
                           const Matrix& features, std::span<const int> labels);

double mean_loss(const ModelShape& shape, const Vector& params, const Matrix& features,
                 std::span<const int> labels);
double accuracy(const ModelShape& shape, const Vector& params, const Matrix& features,
                std::span<const int> labels);

/// Zero weights for softmax regression; small Gaussian first layer otherwise.
Vector initial_params(const ModelShape& shape, std::uint64_t seed);

/// Independent RNG stream for one device in one edge round.
std::mt19937_64 device_stream(std::uint64_t master_seed, int device, int t, int r);

/// S steps of heavy-ball SGD. Batches are drawn with replacement; a batch
/// size at least the shard size uses the whole shard every step.
Vector local_sgd(const ModelShape& shape, const Vector& params, const DataShard& shard,
                 int S, int I, double eta, double momentum, std::mt19937_64& rng);

/// Plain average, reduced in the given order.
Vector edge_aggregate(std::span<const Vector> models);

/// u <- M u applied psi times; server models are rows of `models`.
Matrix inter_server_mix(const Matrix& models, const Matrix& mixing, int psi);

double consensus_pairwise(const Vector& a, const Vector& b);

/// (1/C) Σ_c ‖ū − u_c‖ over the rows of `models`.
double consensus_average(const Matrix& models);

/// Bound on the average consensus distance after mixing over `adjacency`
/// when every mixing weight takes its largest admissible uniform value.
double estimate_consensus_after_mix(const Matrix& adjacency, const Matrix& upsilon);

/// Device n belongs to the cluster whose block of devices_per_cluster
/// covers n (cluster-major numbering).
std::vector<DataShard> partition(const Dataset& data, const PartitionSpec& spec,
                                 std::span<const int> devices_per_cluster);

/// Gaussian classes with identity covariance; each class mean sits at
/// distance `separation` from every pairwise decision boundary. Requires
/// dim >= num_classes.
Dataset make_synthetic_dataset(int num_classes, int dim, int samples_per_class,
                               double separation, std::uint64_t seed);

/// Rows of numbers; the last column is an integer class label.
Dataset load_delimited_dataset(const std::filesystem::path& path, char delimiter = ',');

}  // namespace hfel
