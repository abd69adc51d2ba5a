#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hfel/harness.hpp"
#include "hfel/trace_io.hpp"

using namespace hfel;
using doctest::Approx;

namespace {

ScenarioConfig small(Method m, std::uint64_t seed = 1) {
  ScenarioConfig cfg = canonical_scenario();
  cfg.hyper.T = 6;
  cfg.method = m;
  cfg.seed = seed;
  return cfg;
}

ScenarioConfig homogeneous(Method m) {
  ScenarioConfig cfg = small(m);
  cfg.devices.mu = {1e5, 1e5};
  cfg.devices.alpha_scale = {0.05, 0.05};
  cfg.snr_db = {8.0, 8.0};
  cfg.backhaul_bps = {1e6, 1e6};
  return cfg;
}

// Global time of every last edge round, recomputed from the logged
// allocation and fresh device profiles.
void check_recomputed_times(const ScenarioConfig& cfg, const RunResult& run) {
  const auto profiles = draw_device_profiles(cfg);
  const int C = cfg.servers, k = cfg.devices_per_cluster, R = cfg.hyper.R;
  Eigen::MatrixXd edge(C, R);
  for (const auto& rec : run.traces) {
    for (int c = 0; c < C; ++c) {
      double worst = 0.0;
      for (int i = 0; i < k; ++i) {
        const int n = c * k + i;
        worst = std::max(worst, device_round_time(profiles[std::size_t(n)], cfg.hyper,
                                                  rec.bandwidth(n), rec.frequency(n), rec.snr(n),
                                                  rec.local_iters[std::size_t(n)]));
        CHECK(rec.energy(n) == device_round_energy(profiles[std::size_t(n)], cfg.hyper,
                                                   rec.bandwidth(n), rec.frequency(n), rec.snr(n),
                                                   rec.local_iters[std::size_t(n)]));
      }
      CHECK(worst == rec.cluster_time(c));
      edge(c, rec.r) = worst;
    }
    if (rec.r == R - 1) CHECK(rec.global_time == global_round_time(edge, rec.sync_time));
  }
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("environment draws") {
  ScenarioConfig cfg = canonical_scenario();
  const Matrix base = build_base_graph(cfg);
  const auto a = draw_round_environment(cfg, base, 3, 1);
  const auto b = draw_round_environment(cfg, base, 3, 1);
  CHECK(a.channel.snr == b.channel.snr);
  CHECK(a.backhaul == b.backhaul);
  CHECK(draw_round_environment(cfg, base, 3, 0).backhaul == a.backhaul);
  CHECK(draw_round_environment(cfg, base, 4, 0).backhaul != a.backhaul);

  cfg.servers = 50;
  cfg.devices_per_cluster = 20;
  cfg.base_graph.kind = BaseGraphSpec::Kind::erdos_renyi;
  cfg.base_graph.p = 0.3;
  const Matrix sparse = build_base_graph(cfg);
  double sum_db = 0.0;
  int count = 0;
  for (int t = 0; t < 10; ++t) {
    const auto env = draw_round_environment(cfg, sparse, t, 0);
    for (double s : env.channel.snr) {
      sum_db += 10.0 * std::log10(s);
      ++count;
    }
    CHECK((env.backhaul - env.backhaul.transpose()).cwiseAbs().maxCoeff() == 0.0);
    for (int i = 0; i < cfg.servers; ++i)
      for (int j = 0; j < cfg.servers; ++j) {
        if (sparse(i, j) == 0.0) CHECK(env.backhaul(i, j) == 0.0);
        else CHECK((env.backhaul(i, j) >= 1e5 && env.backhaul(i, j) <= 1e7));
      }
  }
  CHECK(count == 10000);
  CHECK(std::abs(sum_db / count - 7.5) <= 0.2);
}

TEST_CASE("one global round on two servers") {
  ScenarioConfig cfg = canonical_scenario();
  cfg.servers = 2;
  cfg.hyper.T = 1;
  cfg.hyper.R = 1;
  const auto run = run_fedrt(cfg);
  REQUIRE(run.traces.size() == 1);
  CHECK(run.traces[0].active_adjacency == complete_adjacency(2));
  CHECK(run.total_time() == run.traces[0].global_time);
}

TEST_CASE("traces are consistent with the cost model for every method") {
  for (Method m : kAllMethods) {
    const ScenarioConfig cfg = small(m, 3);
    const auto run = run_method(cfg);
    REQUIRE(run.traces.size() == std::size_t(cfg.hyper.T * cfg.hyper.R));
    check_recomputed_times(cfg, run);
    double prev_time = 0.0;
    Vector prev_energy = Vector::Zero(cfg.num_devices());
    for (const auto& rec : run.traces) {
      CHECK(rec.elapsed >= prev_time);
      CHECK((rec.cumulative_energy.array() >= prev_energy.array()).all());
      CHECK((rec.cumulative_energy.array() <= cfg.devices.energy_budget).all());
      prev_time = rec.elapsed;
      prev_energy = rec.cumulative_energy;
      if (rec.r == cfg.hyper.R - 1) {
        CHECK(is_connected(rec.active_adjacency));
        CHECK(rec.predicted_time == rec.global_time);
        CHECK(rec.consensus_bound <= rec.upsilon_max + 1e-12);
      }
    }
  }
}

TEST_CASE("static topology baselines keep the base graph") {
  for (Method m : {Method::StaticT, Method::CEFedAvg, Method::MLLSGD}) {
    const auto run = run_method(small(m));
    for (const auto& rec : run.traces) CHECK(rec.active_adjacency == complete_adjacency(4));
  }
}

TEST_CASE("homogeneous scenario gives matching traces across methods") {
  const auto ref = run_method(homogeneous(Method::CEFedAvg));
  for (Method m : kAllMethods) {
    const auto run = run_method(homogeneous(m));
    REQUIRE(run.traces.size() == ref.traces.size());
    for (std::size_t i = 0; i < ref.traces.size(); ++i) {
      CHECK(run.traces[i].test_accuracy == ref.traces[i].test_accuracy);
      CHECK(run.traces[i].train_loss == ref.traces[i].train_loss);
      CHECK(run.traces[i].elapsed == Approx(ref.traces[i].elapsed).epsilon(1e-6));
      CHECK(run.traces[i].local_iters == ref.traces[i].local_iters);
    }
  }
}

TEST_CASE("MLL-SGD iteration counts") {
  std::vector<DeviceProfile> devs{{2e5, 1e-29, 0.01, 2e9, 3e9, 1},
                                  {1e5, 1e-29, 0.01, 2e9, 3e9, 1},
                                  {5e4, 1e-29, 0.01, 2e9, 2e9, 1},
                                  {1.9e5, 1e-29, 0.01, 2e9, 3e9, 1}};
  const auto s = scaled_local_iterations(devs, 10);
  CHECK(s[0] == 10);
  CHECK(s[1] == 20);
  CHECK(s[2] == 26);
  CHECK(s[3] == 10);
  for (std::size_t i = 0; i < devs.size(); ++i)
    for (std::size_t j = 0; j < devs.size(); ++j)
      if (devs[i].mu / devs[i].f_max < devs[j].mu / devs[j].f_max) CHECK(s[i] >= s[j]);
}

TEST_CASE("infeasible energy budget aborts with a device id") {
  ScenarioConfig cfg = small(Method::FedRT);
  cfg.devices.energy_budget = 1e-4;
  try {
    run_method(cfg);
    FAIL("expected infeasibility");
  } catch (const InfeasibleError& e) {
    CHECK(e.device() >= 0);
    CHECK(e.device() < cfg.num_devices());
  }
}

TEST_CASE("config round trip and validation") {
  ScenarioConfig cfg = canonical_scenario();
  cfg.method = Method::MLLSGD;
  cfg.seed = 42;
  cfg.base_graph.kind = BaseGraphSpec::Kind::erdos_renyi;
  cfg.base_graph.p = 0.6;
  const ScenarioConfig back = parse_config(dump_config(cfg));
  CHECK(dump_config(back) == dump_config(cfg));
  CHECK(back.method == Method::MLLSGD);
  CHECK(back.seed == 42);

  CHECK_THROWS_AS(parse_config(R"({"servers": 4, "bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"hyper": {"T": 5, "Q": 1}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"method": "FedProx"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"snr_db": [10, 5]})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"servers": "four"})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{"), ConfigError);
  CHECK(parse_config(R"({"partition": {"beta": 2.0}})").partition.scheme ==
        PartitionSpec::Scheme::dirichlet);
  for (Method m : kAllMethods) CHECK(parse_method(to_string(m)) == m);
}

TEST_CASE("csv round trip") {
  const auto run = run_method(small(Method::FedRT));
  const std::string csv = traces_to_csv(run.traces);
  const auto back = parse_traces(csv);
  CHECK(back == run.traces);
  CHECK(traces_to_csv(back) == csv);
  CHECK(trace_columns().size() == 26);
  CHECK(summarize(run.traces).time == run.traces.back().elapsed);
  CHECK(summarize(run.traces).energy == run.total_energy());
  CHECK(summarize(run.traces).best_accuracy == run.best_accuracy());
  CHECK_THROWS_AS(parse_traces(std::string("t,r\n1,2\n")), IoError);
}

TEST_CASE("identical configs give identical csv bytes") {
  const auto a = traces_to_csv(run_method(small(Method::StaticR, 5)).traces);
  const auto b = traces_to_csv(run_method(small(Method::StaticR, 5)).traces);
  CHECK(a == b);
}

TEST_CASE("emitted files") {
  const auto dir = std::filesystem::temp_directory_path() / "hfel_emit_test";
  std::filesystem::remove_all(dir);
  const auto run = run_method(small(Method::FedRT));
  emit_outputs(run.traces, dir, "FedRT_seed1");
  for (const char* f : {"FedRT_seed1.csv", "FedRT_seed1_summary.csv",
                        "FedRT_seed1_accuracy_vs_time.svg", "FedRT_seed1_loss_vs_time.svg",
                        "FedRT_seed1_energy_vs_round.svg"})
    CHECK(std::filesystem::exists(dir / f));
  const auto rows = build_report(dir);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].time == run.total_time());
  CHECK(std::filesystem::exists(dir / "summary.csv"));
  CHECK(std::filesystem::exists(dir / "report_accuracy_vs_time.svg"));
  std::filesystem::remove_all(dir);

  CHECK_THROWS_AS(emit_outputs(run.traces, "/proc/hfel_no_such_dir", "x"), IoError);
}

}
