// hfel_sim: run, sweep and report HFEL simulations.
//
//   hfel_sim run    [--config cfg.json] [--seed N] [--method FedRT] [--out dir]
//   hfel_sim sweep  [--config cfg.json] [--seed N] [--seeds K] [--method M]... [--jobs J] [--out dir]
//   hfel_sim report [--out dir]
//
// Exit codes: 0 success, 2 infeasible scenario, 3 invalid config.

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <iostream>
#include <thread>

#include "hfel/harness.hpp"
#include "hfel/trace_io.hpp"

extern char** environ;

namespace {

constexpr int kInfeasible = 2;
constexpr int kInvalidConfig = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> methods;
  std::string out = "out";
  int seeds = 1;
  int jobs = 0;
};

hfel::ScenarioConfig resolve_config(const Options& o, std::optional<std::string> method) {
  hfel::ScenarioConfig cfg = o.config.empty() ? hfel::canonical_scenario() : hfel::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (method) cfg.method = hfel::parse_method(*method);
  cfg.validate();
  return cfg;
}

std::string run_stem(const hfel::ScenarioConfig& cfg) {
  return hfel::to_string(cfg.method) + "_seed" + std::to_string(cfg.seed);
}

int cmd_run(const Options& o) {
  if (o.methods.size() > 1) throw hfel::ConfigError("run takes a single --method");
  auto cfg = resolve_config(o, o.methods.empty() ? std::nullopt : std::optional(o.methods.front()));
  const auto result = hfel::run_method(cfg);
  hfel::emit_outputs(result.traces, o.out, run_stem(cfg));
  const auto s = hfel::summarize(result.traces);
  std::printf("%s seed %llu: time %.6g s, energy %.6g J, final accuracy %.4f\n", s.method.c_str(),
              static_cast<unsigned long long>(s.seed), s.time, s.energy, s.final_accuracy);
  return 0;
}

// Each (method, seed) cell is a separate process of this binary.
int cmd_sweep(const Options& o, const std::string& self) {
  std::vector<std::string> methods = o.methods;
  if (methods.empty())
    for (auto m : hfel::kAllMethods) methods.push_back(hfel::to_string(m));
  const auto base = resolve_config(o, std::nullopt);
  for (const auto& m : methods) hfel::parse_method(m);
  if (o.seeds < 1) throw hfel::ConfigError("--seeds must be positive");

  std::vector<std::vector<std::string>> jobs;
  for (int k = 0; k < o.seeds; ++k)
    for (const auto& m : methods) {
      std::vector<std::string> args{self, "run", "--seed", std::to_string(base.seed + std::uint64_t(k)),
                                    "--method", m, "--out", o.out};
      if (!o.config.empty()) args.insert(args.end(), {"--config", o.config});
      jobs.push_back(std::move(args));
    }

  const int width = o.jobs > 0 ? o.jobs : std::max(1, int(std::thread::hardware_concurrency()));
  int worst = 0;
  std::size_t next = 0, running = 0;
  auto reap = [&] {
    int status = 0;
    if (wait(&status) > 0) {
      --running;
      const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 1;
      worst = std::max(worst, code);
    }
  };
  while (next < jobs.size() || running > 0) {
    if (next < jobs.size() && running < std::size_t(width)) {
      std::vector<char*> argv;
      for (auto& a : jobs[next]) argv.push_back(a.data());
      argv.push_back(nullptr);
      pid_t pid = 0;
      if (posix_spawn(&pid, self.c_str(), nullptr, nullptr, argv.data(), environ) != 0) {
        std::perror("posix_spawn");
        return 1;
      }
      ++next;
      ++running;
    } else {
      reap();
    }
  }
  if (worst == 0) hfel::build_report(o.out);
  return worst;
}

int cmd_report(const Options& o) {
  const auto rows = hfel::build_report(o.out);
  std::cout << hfel::summary_csv(rows);
  return 0;
}

std::string self_path(const char* argv0) {
  std::error_code ec;
  auto p = std::filesystem::read_symlink("/proc/self/exe", ec);
  return ec ? std::string(argv0) : p.string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical federated edge learning simulator"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool many_methods) {
    sub->add_option("--config", o.config, "scenario JSON (defaults to the canonical scenario)");
    sub->add_option("--seed", o.seed, "master seed");
    if (many_methods)
      sub->add_option("--method", o.methods, "methods to run (repeatable, default all)");
    else
      sub->add_option("--method", o.methods, "FedRT, Static-R, Static-T, CE-FedAvg or MLL-SGD")
          ->expected(1);
    sub->add_option("--out", o.out, "output directory");
  };
  auto* run = app.add_subcommand("run", "run one scenario");
  common(run, false);
  auto* sweep = app.add_subcommand("sweep", "method x seed grid, one process per cell");
  common(sweep, true);
  sweep->add_option("--seeds", o.seeds, "number of consecutive seeds starting at --seed");
  sweep->add_option("--jobs", o.jobs, "concurrent processes");
  auto* report = app.add_subcommand("report", "aggregate trace CSVs into a summary and plots");
  report->add_option("--out", o.out, "directory holding trace CSVs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(o);
    if (*sweep) return cmd_sweep(o, self_path(argv[0]));
    return cmd_report(o);
  } catch (const hfel::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kInfeasible;
  } catch (const hfel::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kInvalidConfig;
  } catch (const hfel::DomainError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kInvalidConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
