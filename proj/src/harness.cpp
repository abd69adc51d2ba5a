#include "hfel/harness.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hfel {

namespace {

bool optimizes_topology(Method m) { return m == Method::FedRT || m == Method::StaticR; }
bool optimizes_bandwidth(Method m) { return m == Method::FedRT || m == Method::StaticT; }

double mean_pairwise(const Matrix& upsilon) {
  const auto C = upsilon.rows();
  return C < 2 ? 0.0 : upsilon.sum() / double(C * (C - 1));
}

void expect(bool ok, const std::string& what) {
  if (!ok) throw std::logic_error("invariant violated: " + what);
}

class Simulation {
 public:
  explicit Simulation(ScenarioConfig cfg)
      : cfg_(std::move(cfg)),
        h_(cfg_.hyper),
        profiles_(draw_device_profiles(cfg_)),
        base_(build_base_graph(cfg_)),
        data_(prepare_data(cfg_)),
        shape_{static_cast<int>(data_.train.features.cols()), data_.train.num_classes, cfg_.hidden},
        ledger_(Vector::Constant(cfg_.num_devices(), cfg_.devices.energy_budget)),
        consensus_(ConsensusMatrix::zeros(cfg_.servers)),
        active_(base_) {
    const Vector init = initial_params(shape_, model_init_seed(cfg_));
    models_ = init.transpose().replicate(cfg_.servers, 1);
    iters_.assign(std::size_t(cfg_.num_devices()), h_.S);
    if (cfg_.method == Method::MLLSGD) {
      for (int c = 0; c < cfg_.servers; ++c) {
        auto scaled = scaled_local_iterations(cluster_profiles(c), h_.S);
        std::copy(scaled.begin(), scaled.end(), iters_.begin() + first_device(c));
      }
    }
  }

  RunResult run() {
    RunResult out;
    out.config = cfg_;
    double clock = 0.0;
    for (int t = 0; t < h_.T; ++t) {
      Vector cluster_elapsed = Vector::Zero(cfg_.servers);
      for (int r = 0; r < h_.R; ++r) {
        RoundTrace rec = step(t, r, cluster_elapsed);
        rec.elapsed = clock + rec.global_time;
        if (r == h_.R - 1) clock = rec.elapsed;
        out.traces.push_back(std::move(rec));
      }
    }
    return out;
  }

 private:
  int first_device(int c) const { return c * cfg_.devices_per_cluster; }

  std::span<const DeviceProfile> cluster_profiles(int c) const {
    return std::span<const DeviceProfile>(profiles_).subspan(std::size_t(first_device(c)),
                                                              std::size_t(cfg_.devices_per_cluster));
  }

  ClusterRound cluster_round(int c, const ChannelState& ch, const Vector& caps) const {
    const int n0 = first_device(c), k = cfg_.devices_per_cluster;
    ClusterRound round{cluster_profiles(c), ch.snr.segment(n0, k), ch.server_bandwidth(c),
                       caps.segment(n0, k), {}};
    if (cfg_.method == Method::MLLSGD)
      round.local_iters.assign(iters_.begin() + n0, iters_.begin() + n0 + k);
    return round;
  }

  ClusterAllocator allocator_for(int& cluster_cursor) const {
    const bool optimized = optimizes_bandwidth(cfg_.method);
    return [this, optimized, &cluster_cursor](const ClusterRound& round, const Hyperparams& h) {
      try {
        return optimized ? solve_cluster_round(round, h) : solve_uniform_bandwidth(round, h);
      } catch (const InfeasibleError& e) {
        const int device = first_device(cluster_cursor) + e.device();
        std::string what = e.what();
        const std::string local = "device " + std::to_string(e.device()) + ": ";
        if (what.starts_with(local)) what.erase(0, local.size());
        throw InfeasibleError(device, "device " + std::to_string(device) + " (cluster " +
                                          std::to_string(cluster_cursor) + "): " + what);
      }
    };
  }

  RoundTrace step(int t, int r, Vector& cluster_elapsed) {
    const int C = cfg_.servers;
    const bool last = r == h_.R - 1;
    const RoundEnvironment env = draw_round_environment(cfg_, base_, t, r);
    const Vector caps = energy_cap(ledger_, t, r, h_.T, h_.R,
                                   last ? RoundPhase::last_round : RoundPhase::mid_round);

    std::vector<ClusterRound> rounds;
    for (int c = 0; c < C; ++c) rounds.push_back(cluster_round(c, env.channel, caps));

    RoundTrace rec;
    rec.method = to_string(cfg_.method);
    rec.seed = cfg_.seed;
    rec.t = t;
    rec.r = r;

    std::vector<ClusterAllocation> allocs;
    if (last) {
      consensus_.refresh(models_, active_);
      if (!reference_ && mean_pairwise(consensus_.upsilon) > 0.0)
        reference_ = mean_pairwise(consensus_.upsilon);
      rec.upsilon_max = cfg_.upsilon_max.at(t, h_.T, reference_);
      rec.max_staleness = consensus_.max_staleness();

      std::vector<ClusterState> states;
      for (int c = 0; c < C; ++c) states.push_back({rounds[std::size_t(c)], cluster_elapsed(c)});

      if (optimizes_topology(cfg_.method)) {
        TopologyDecision d = design(states, env.backhaul, rec.upsilon_max);
        allocs = std::move(d.allocations);
        active_ = std::move(d.active_adjacency);
        rec.predicted_time = d.predicted_time;
        rec.allocator_calls = d.allocator_calls;
      } else {
        allocs = allocate_all(rounds);
        active_ = base_;
        rec.allocator_calls = C;
      }
      expect(is_connected(active_) && is_connected_traversal(active_), "active topology connected");
    } else {
      allocs = allocate_all(rounds);
      rec.allocator_calls = C;
    }

    // Realized cost, recomputed from the allocation through the cost model.
    const int N = cfg_.num_devices(), k = cfg_.devices_per_cluster;
    rec.snr = env.channel.snr;
    rec.energy_cap = caps;
    rec.bandwidth.resize(N);
    rec.frequency.resize(N);
    rec.energy.resize(N);
    rec.cluster_time.resize(C);
    for (int c = 0; c < C; ++c) {
      const auto& a = allocs[std::size_t(c)].allocation;
      const auto& round = rounds[std::size_t(c)];
      expect(a.bandwidth.sum() <= round.bandwidth_budget * (1.0 + 1e-9), "bandwidth budget");
      rec.bandwidth.segment(c * k, k) = a.bandwidth;
      rec.frequency.segment(c * k, k) = a.frequency;
      rec.energy.segment(c * k, k) = allocation_energies(round, h_, a);
      rec.cluster_time(c) = allocation_times(round, h_, a).maxCoeff();
    }
    for (int n = 0; n < N; ++n)
      expect(rec.frequency(n) >= profiles_[std::size_t(n)].f_min &&
                 rec.frequency(n) <= profiles_[std::size_t(n)].f_max,
             "frequency bounds");
    ledger_.charge(rec.energy);
    ledger_.check();
    rec.cumulative_energy = ledger_.spent();
    rec.local_iters = iters_;

    train_edge_round(t, r);

    rec.sync_time = Vector::Zero(C);
    rec.backhaul = env.backhaul;
    rec.active_adjacency = active_;
    if (last) {
      rec.sync_time = sync_times(active_, env.backhaul, h_);
      rec.global_time = (cluster_elapsed + rec.cluster_time + rec.sync_time).maxCoeff();
      if (optimizes_topology(cfg_.method))
        expect(rec.global_time == rec.predicted_time, "realized time equals designer forecast");
      else
        rec.predicted_time = rec.global_time;
      rec.consensus_bound = consensus_constraint_lhs(active_, consensus_.upsilon);
      models_ = inter_server_mix(models_, metropolis_mixing(active_), h_.psi);
    } else {
      rec.global_time = (cluster_elapsed + rec.cluster_time).maxCoeff();
    }
    cluster_elapsed += rec.cluster_time;
    if (!models_.allFinite()) throw DomainError("server models diverged");

    rec.consensus_average = consensus_average(models_);
    evaluate(rec);
    return rec;
  }

  std::vector<ClusterAllocation> allocate_all(const std::vector<ClusterRound>& rounds) const {
    std::vector<ClusterAllocation> out;
    for (int c = 0; c < cfg_.servers; ++c) {
      int cursor = c;
      out.push_back(allocator_for(cursor)(rounds[std::size_t(c)], h_));
    }
    return out;
  }

  TopologyDecision design(const std::vector<ClusterState>& states, const Matrix& backhaul,
                          double upsilon_max) const {
    int cursor = 0;
    ClusterAllocator inner = allocator_for(cursor);
    ClusterAllocator tracked = [&](const ClusterRound& round, const Hyperparams& h) {
      for (std::size_t c = 0; c < states.size(); ++c)
        if (&states[c].last_round == &round) cursor = static_cast<int>(c);
      return inner(round, h);
    };
    DesignInputs in{states, &base_, &backhaul, &consensus_.upsilon, upsilon_max};
    TopologyDecision d = solve_p22(in, h_, tracked);
    if (consensus_constraint_lhs(base_, consensus_.upsilon) <= upsilon_max)
      expect(consensus_constraint_lhs(d.active_adjacency, consensus_.upsilon) <= upsilon_max,
             "consensus constraint on chosen topology");
    expect(d.predicted_time <= d.base_predicted_time, "designer never worse than base graph");
    return d;
  }

  void train_edge_round(int t, int r) {
    const int k = cfg_.devices_per_cluster;
    std::vector<Vector> local(static_cast<std::size_t>(k));
    for (int c = 0; c < cfg_.servers; ++c) {
      const Vector server = models_.row(c).transpose();
      for (int i = 0; i < k; ++i) {
        const int n = first_device(c) + i;
        auto rng = device_stream(cfg_.seed, n, t, r);
        local[std::size_t(i)] = local_sgd(shape_, server, data_.shards[std::size_t(n)],
                                          iters_[std::size_t(n)], h_.I, h_.eta, cfg_.momentum, rng);
      }
      models_.row(c) = edge_aggregate(local).transpose();
    }
  }

  void evaluate(RoundTrace& rec) const {
    double loss = 0.0, samples = 0.0, acc = 0.0;
    for (int c = 0; c < cfg_.servers; ++c) {
      const Vector u = models_.row(c).transpose();
      for (int i = 0; i < cfg_.devices_per_cluster; ++i) {
        const auto& shard = data_.shards[std::size_t(first_device(c) + i)];
        const double m = double(shard.labels.size());
        loss += m * mean_loss(shape_, u, shard.features, shard.labels);
        samples += m;
      }
      acc += accuracy(shape_, u, data_.test.features, data_.test.labels);
    }
    rec.train_loss = loss / samples;
    rec.test_accuracy = acc / cfg_.servers;
  }

  ScenarioConfig cfg_;
  Hyperparams h_;
  std::vector<DeviceProfile> profiles_;
  Matrix base_;
  DataBundle data_;
  ModelShape shape_;
  EnergyLedger ledger_;
  ConsensusMatrix consensus_;
  Matrix active_;
  Matrix models_;
  std::vector<int> iters_;
  std::optional<double> reference_;
};

}  // namespace

double RunResult::total_time() const { return traces.empty() ? 0.0 : traces.back().elapsed; }

double RunResult::total_energy() const {
  return traces.empty() ? 0.0 : traces.back().cumulative_energy.sum();
}

double RunResult::best_accuracy() const {
  double best = 0.0;
  for (const auto& tr : traces) best = std::max(best, tr.test_accuracy);
  return best;
}

double RunResult::final_accuracy() const {
  return traces.empty() ? 0.0 : traces.back().test_accuracy;
}

std::vector<int> scaled_local_iterations(std::span<const DeviceProfile> cluster, int S) {
  if (cluster.empty()) throw DomainError("cluster has no devices");
  double slowest = 0.0;
  for (const auto& p : cluster) slowest = std::max(slowest, p.mu / p.f_max);
  std::vector<int> out;
  for (const auto& p : cluster)
    out.push_back(std::max(1, static_cast<int>(std::floor(S * slowest / (p.mu / p.f_max) + 1e-9))));
  return out;
}

RunResult run_method(const ScenarioConfig& cfg) {
  cfg.validate();
  return Simulation(cfg).run();
}

RunResult run_fedrt(ScenarioConfig cfg) {
  cfg.method = Method::FedRT;
  return run_method(cfg);
}

RunResult run_baseline(ScenarioConfig cfg) {
  if (cfg.method == Method::FedRT) throw ConfigError("run_baseline needs a baseline method");
  return run_method(cfg);
}

}  // namespace hfel
