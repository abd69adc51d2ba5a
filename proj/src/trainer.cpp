#include "hfel/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hfel/topology_designer.hpp"

namespace hfel {

namespace {

using ConstMap = Eigen::Map<const Matrix>;

// Row-wise softmax in place.
void softmax_rows(Matrix& z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    z.row(i).array() -= z.row(i).maxCoeff();
    z.row(i) = z.row(i).array().exp();
    z.row(i) /= z.row(i).sum();
  }
}

Matrix gather_rows(const Matrix& x, std::span<const Eigen::Index> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(Eigen::Index(i)) = x.row(rows[i]);
  return out;
}

struct Forward {
  Matrix hidden;  // activations, empty for softmax regression
  Matrix probs;
};

Forward forward(const ModelShape& s, const Vector& p, const Matrix& x) {
  if (p.size() != s.num_params()) throw DomainError("parameter vector has wrong size");
  if (x.cols() != s.dim) throw DomainError("feature width does not match model");
  Forward f;
  const double* ptr = p.data();
  if (s.hidden == 0) {
    ConstMap W(ptr, s.num_classes, s.dim);
    Eigen::Map<const Vector> b(ptr + W.size(), s.num_classes);
    f.probs = (x * W.transpose()).rowwise() + b.transpose();
  } else {
    ConstMap W1(ptr, s.hidden, s.dim);
    Eigen::Map<const Vector> b1(ptr + W1.size(), s.hidden);
    ptr += W1.size() + b1.size();
    ConstMap W2(ptr, s.num_classes, s.hidden);
    Eigen::Map<const Vector> b2(ptr + W2.size(), s.num_classes);
    f.hidden = ((x * W1.transpose()).rowwise() + b1.transpose()).array().tanh();
    f.probs = (f.hidden * W2.transpose()).rowwise() + b2.transpose();
  }
  softmax_rows(f.probs);
  return f;
}

double cross_entropy(const Matrix& probs, std::span<const int> labels) {
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    loss -= std::log(std::max(probs(Eigen::Index(i), labels[i]), 1e-300));
  return loss / static_cast<double>(labels.size());
}

}  // namespace

void Dataset::validate() const {
  if (features.rows() == 0) throw DomainError("dataset is empty");
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw DomainError("feature and label counts differ");
  if (num_classes < 1) throw DomainError("dataset needs at least one class");
  for (int y : labels)
    if (y < 0 || y >= num_classes) throw DomainError("label out of range");
}

Eigen::Index ModelShape::num_params() const {
  if (hidden == 0) return Eigen::Index(num_classes) * dim + num_classes;
  return Eigen::Index(hidden) * dim + hidden + Eigen::Index(num_classes) * hidden + num_classes;
}

LossGrad loss_and_gradient(const ModelShape& s, const Vector& p, const Matrix& x,
                           std::span<const int> labels) {
  if (labels.empty() || static_cast<std::size_t>(x.rows()) != labels.size())
    throw DomainError("batch is empty or mislabeled");
  Forward f = forward(s, p, x);
  LossGrad out;
  out.loss = cross_entropy(f.probs, labels);

  Matrix dz = f.probs;
  for (std::size_t i = 0; i < labels.size(); ++i) dz(Eigen::Index(i), labels[i]) -= 1.0;
  dz /= static_cast<double>(labels.size());

  out.grad.resize(s.num_params());
  double* g = out.grad.data();
  if (s.hidden == 0) {
    Eigen::Map<Matrix>(g, s.num_classes, s.dim) = dz.transpose() * x;
    Eigen::Map<Vector>(g + Eigen::Index(s.num_classes) * s.dim, s.num_classes) =
        dz.colwise().sum().transpose();
  } else {
    ConstMap W2(p.data() + Eigen::Index(s.hidden) * s.dim + s.hidden, s.num_classes, s.hidden);
    Matrix dh = (dz * W2).array() * (1.0 - f.hidden.array().square());
    Eigen::Map<Matrix>(g, s.hidden, s.dim) = dh.transpose() * x;
    g += Eigen::Index(s.hidden) * s.dim;
    Eigen::Map<Vector>(g, s.hidden) = dh.colwise().sum().transpose();
    g += s.hidden;
    Eigen::Map<Matrix>(g, s.num_classes, s.hidden) = dz.transpose() * f.hidden;
    g += Eigen::Index(s.num_classes) * s.hidden;
    Eigen::Map<Vector>(g, s.num_classes) = dz.colwise().sum().transpose();
  }
  return out;
}

double mean_loss(const ModelShape& s, const Vector& p, const Matrix& x,
                 std::span<const int> labels) {
  return cross_entropy(forward(s, p, x).probs, labels);
}

double accuracy(const ModelShape& s, const Vector& p, const Matrix& x,
                std::span<const int> labels) {
  if (labels.empty()) throw DomainError("no samples to score");
  const Matrix probs = forward(s, p, x).probs;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Eigen::Index arg;
    probs.row(Eigen::Index(i)).maxCoeff(&arg);
    if (arg == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

Vector initial_params(const ModelShape& s, std::uint64_t seed) {
  Vector p = Vector::Zero(s.num_params());
  if (s.hidden > 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(s.dim)));
    for (Eigen::Index i = 0; i < Eigen::Index(s.hidden) * s.dim; ++i) p(i) = normal(rng);
    std::normal_distribution<double> out(0.0, 1.0 / std::sqrt(double(s.hidden)));
    const Eigen::Index w2 = Eigen::Index(s.hidden) * s.dim + s.hidden;
    for (Eigen::Index i = 0; i < Eigen::Index(s.num_classes) * s.hidden; ++i)
      p(w2 + i) = out(rng);
  }
  return p;
}

std::mt19937_64 device_stream(std::uint64_t master_seed, int device, int t, int r) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(device), static_cast<std::uint32_t>(t),
                    static_cast<std::uint32_t>(r), 0x5eedu};
  return std::mt19937_64(seq);
}

Vector local_sgd(const ModelShape& s, const Vector& params, const DataShard& shard, int S,
                 int I, double eta, double momentum, std::mt19937_64& rng) {
  const auto n = static_cast<Eigen::Index>(shard.labels.size());
  if (n == 0) throw DomainError("device " + std::to_string(shard.owner) + " has an empty shard");
  if (S < 1 || I < 1) throw DomainError("S and I must be >= 1");

  Vector w = params;
  Vector velocity = Vector::Zero(w.size());
  const bool full_batch = I >= n;
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(full_batch ? n : I));
  std::vector<int> batch_labels(rows.size());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  if (full_batch) std::iota(rows.begin(), rows.end(), Eigen::Index{0});

  for (int step = 0; step < S; ++step) {
    if (!full_batch)
      for (auto& r : rows) r = pick(rng);
    for (std::size_t i = 0; i < rows.size(); ++i)
      batch_labels[i] = shard.labels[std::size_t(rows[i])];
    const LossGrad lg = loss_and_gradient(s, w, gather_rows(shard.features, rows), batch_labels);
    velocity = momentum * velocity + lg.grad;
    w -= eta * velocity;
  }
  if (!w.allFinite())
    throw DomainError("device " + std::to_string(shard.owner) + " model diverged");
  return w;
}

Vector edge_aggregate(std::span<const Vector> models) {
  if (models.empty()) throw DomainError("nothing to aggregate");
  Vector sum = Vector::Zero(models.front().size());
  for (const Vector& m : models) sum += m;
  return sum / static_cast<double>(models.size());
}

Matrix inter_server_mix(const Matrix& models, const Matrix& mixing, int psi) {
  if (mixing.rows() != models.rows()) throw DomainError("mixing matrix size mismatch");
  Matrix u = models;
  for (int k = 0; k < psi; ++k) u = mixing * u;
  return u;
}

double consensus_pairwise(const Vector& a, const Vector& b) { return (a - b).norm(); }

double consensus_average(const Matrix& models) {
  if (models.rows() == 0) throw DomainError("no server models");
  const Eigen::RowVectorXd mean = models.colwise().mean();
  return (models.rowwise() - mean).rowwise().norm().mean();
}

double estimate_consensus_after_mix(const Matrix& adjacency, const Matrix& upsilon) {
  return consensus_constraint_lhs(adjacency, upsilon);
}

namespace {

std::vector<std::vector<Eigen::Index>> split_even(std::vector<Eigen::Index> pool, int parts) {
  std::vector<std::vector<Eigen::Index>> out(static_cast<std::size_t>(parts));
  const std::size_t base = pool.size() / std::size_t(parts);
  const std::size_t extra = pool.size() % std::size_t(parts);
  std::size_t pos = 0;
  for (std::size_t p = 0; p < out.size(); ++p) {
    const std::size_t take = base + (p < extra ? 1 : 0);
    out[p].assign(pool.begin() + std::ptrdiff_t(pos), pool.begin() + std::ptrdiff_t(pos + take));
    pos += take;
  }
  return out;
}

std::vector<Eigen::Index> shuffled_range(Eigen::Index n, std::mt19937_64& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

std::vector<double> dirichlet(int k, double beta, std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(beta, 1.0);
  std::vector<double> p(static_cast<std::size_t>(k));
  double total = 0.0;
  for (auto& v : p) total += (v = gamma(rng));
  if (total <= 0.0) {  // every draw underflowed at tiny beta
    std::fill(p.begin(), p.end(), 0.0);
    p[std::uniform_int_distribution<std::size_t>(0, p.size() - 1)(rng)] = 1.0;
    return p;
  }
  for (auto& v : p) v /= total;
  return p;
}

// Guarantee no empty shard by moving samples from the largest ones.
void fill_empty(std::vector<std::vector<Eigen::Index>>& shards) {
  for (auto& s : shards) {
    if (!s.empty()) continue;
    auto donor = std::max_element(shards.begin(), shards.end(),
                                  [](const auto& a, const auto& b) { return a.size() < b.size(); });
    s.push_back(donor->back());
    donor->pop_back();
  }
}

}  // namespace

std::vector<DataShard> partition(const Dataset& data, const PartitionSpec& spec,
                                 std::span<const int> devices_per_cluster) {
  data.validate();
  const int clusters = static_cast<int>(devices_per_cluster.size());
  if (clusters == 0) throw DomainError("need at least one cluster");
  int devices = 0;
  for (int d : devices_per_cluster) {
    if (d < 1) throw DomainError("every cluster needs at least one device");
    devices += d;
  }
  if (data.size() < devices) throw DomainError("dataset has fewer samples than devices");

  std::mt19937_64 rng(spec.seed);
  std::vector<std::vector<Eigen::Index>> assigned(static_cast<std::size_t>(devices));

  std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(data.num_classes));
  for (Eigen::Index i : shuffled_range(data.size(), rng))
    by_class[std::size_t(data.labels[std::size_t(i)])].push_back(i);

  switch (spec.scheme) {
    case PartitionSpec::Scheme::iid:
      assigned = split_even(shuffled_range(data.size(), rng), devices);
      break;
    case PartitionSpec::Scheme::dirichlet: {
      if (!(spec.beta > 0.0)) throw DomainError("dirichlet beta must be positive");
      for (const auto& pool : by_class) {
        const auto share = dirichlet(devices, spec.beta, rng);
        double cumulative = 0.0;
        std::size_t start = 0;
        for (std::size_t d = 0; d < share.size(); ++d) {
          cumulative += share[d];
          const std::size_t stop =
              d + 1 == share.size()
                  ? pool.size()
                  : std::min(pool.size(), std::size_t(std::llround(cumulative * double(pool.size()))));
          for (std::size_t j = start; j < stop; ++j) assigned[d].push_back(pool[j]);
          start = std::max(start, stop);
        }
      }
      fill_empty(assigned);
      break;
    }
    case PartitionSpec::Scheme::cluster_pathological: {
      const int lc = spec.labels_per_cluster;
      if (lc < 1 || lc > data.num_classes)
        throw DomainError("labels per cluster must be in [1, num_classes]");
      if (clusters * lc < data.num_classes)
        throw DomainError("clusters x labels-per-cluster must cover every label");
      std::vector<std::vector<int>> owners(static_cast<std::size_t>(data.num_classes));
      for (int c = 0; c < clusters; ++c)
        for (int j = 0; j < lc; ++j) {
          auto& o = owners[std::size_t((c * lc + j) % data.num_classes)];
          if (std::find(o.begin(), o.end(), c) == o.end()) o.push_back(c);
        }
      std::vector<std::vector<Eigen::Index>> cluster_pool(static_cast<std::size_t>(clusters));
      for (std::size_t k = 0; k < by_class.size(); ++k) {
        auto parts = split_even(by_class[k], static_cast<int>(owners[k].size()));
        for (std::size_t o = 0; o < owners[k].size(); ++o)
          cluster_pool[std::size_t(owners[k][o])].insert(
              cluster_pool[std::size_t(owners[k][o])].end(), parts[o].begin(), parts[o].end());
      }
      int first = 0;
      for (int c = 0; c < clusters; ++c) {
        auto& pool = cluster_pool[std::size_t(c)];
        std::shuffle(pool.begin(), pool.end(), rng);
        if (pool.size() < std::size_t(devices_per_cluster[std::size_t(c)]))
          throw DomainError("cluster " + std::to_string(c) + " has fewer samples than devices");
        auto parts = split_even(pool, devices_per_cluster[std::size_t(c)]);
        for (std::size_t d = 0; d < parts.size(); ++d) assigned[std::size_t(first) + d] = parts[d];
        first += devices_per_cluster[std::size_t(c)];
      }
      break;
    }
  }

  std::vector<DataShard> shards(static_cast<std::size_t>(devices));
  for (int d = 0; d < devices; ++d) {
    auto& rows = assigned[std::size_t(d)];
    std::sort(rows.begin(), rows.end());
    shards[std::size_t(d)].owner = d;
    shards[std::size_t(d)].features = gather_rows(data.features, rows);
    for (Eigen::Index i : rows) shards[std::size_t(d)].labels.push_back(data.labels[std::size_t(i)]);
  }
  return shards;
}

Dataset make_synthetic_dataset(int num_classes, int dim, int samples_per_class,
                               double separation, std::uint64_t seed) {
  if (num_classes < 1 || samples_per_class < 1) throw DomainError("empty synthetic dataset");
  if (dim < num_classes) throw DomainError("synthetic data needs dim >= num_classes");
  if (separation < 0.0) throw DomainError("separation must be nonnegative");
  // Orthogonal means at radius √2·sep are 2·sep apart, so each sits sep away
  // from every pairwise bisector.
  const double radius = std::sqrt(2.0) * separation;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset d;
  d.num_classes = num_classes;
  d.features.resize(Eigen::Index(num_classes) * samples_per_class, dim);
  d.labels.reserve(std::size_t(num_classes) * std::size_t(samples_per_class));
  Eigen::Index row = 0;
  for (int k = 0; k < num_classes; ++k) {
    for (int i = 0; i < samples_per_class; ++i, ++row) {
      for (int j = 0; j < dim; ++j) d.features(row, j) = noise(rng);
      d.features(row, k) += radius;
      d.labels.push_back(k);
    }
  }
  return d;
}

Dataset load_delimited_dataset(const std::filesystem::path& path, char delimiter) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, delimiter)) values.push_back(std::stod(cell));
    if (values.size() < 2) throw DomainError("dataset row needs features and a label");
    if (!rows.empty() && values.size() != rows.front().size())
      throw DomainError("ragged dataset row in " + path.string());
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw DomainError("dataset file has no rows: " + path.string());
  const auto width = static_cast<Eigen::Index>(rows.front().size()) - 1;
  Dataset d;
  d.features.resize(static_cast<Eigen::Index>(rows.size()), width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index j = 0; j < width; ++j) d.features(Eigen::Index(i), j) = rows[i][std::size_t(j)];
    const double y = rows[i].back();
    if (y < 0 || y != std::floor(y)) throw DomainError("labels must be nonnegative integers");
    d.labels.push_back(static_cast<int>(y));
  }
  d.num_classes = *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  return d;
}

}  // namespace hfel
