#include "hfel/scenario.hpp"

#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace hfel {

using nlohmann::json;

namespace {

void require_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

void read_range(const json& j, const char* key, Range& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError(std::string("'") + key + "' must be a [lo, hi] pair");
  out = {v[0].get<double>(), v[1].get<double>()};
}

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

std::mt19937_64 tagged_stream(std::uint64_t seed, std::uint32_t tag, int a = 0, int b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag,
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

enum StreamTag : std::uint32_t {
  kDevices = 11,
  kGraph = 12,
  kSnr = 13,
  kBackhaul = 14,
  kTrainData = 15,
  kTestData = 16,
  kPartition = 17,
  kInit = 18
};

void check_range(const Range& r, const char* what, bool allow_zero = false) {
  if (!(r.lo <= r.hi) || (allow_zero ? r.lo < 0.0 : !(r.lo > 0.0)))
    throw ConfigError(std::string(what) + " range must be nonempty and positive");
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::FedRT: return "FedRT";
    case Method::StaticR: return "Static-R";
    case Method::StaticT: return "Static-T";
    case Method::CEFedAvg: return "CE-FedAvg";
    case Method::MLLSGD: return "MLL-SGD";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : kAllMethods)
    if (to_string(m) == name) return m;
  throw ConfigError("unknown method '" + name + "'");
}

double UpsilonSchedule::at(int t, int T, std::optional<double> reference) const {
  switch (kind) {
    case Kind::relative: return reference ? gamma * *reference : 0.0;
    case Kind::constant: return value;
    case Kind::linear_decay:
      return T <= 1 ? start : start + (end - start) * double(t) / double(T - 1);
  }
  return 0.0;
}

void ScenarioConfig::validate() const {
  if (servers < 2) throw ConfigError("need at least two servers");
  if (devices_per_cluster < 1) throw ConfigError("need at least one device per cluster");
  try {
    hyper.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  check_range(devices.mu, "mu");
  check_range(devices.alpha_scale, "alpha_scale");
  if (!(devices.alpha_base > 0.0) || !(devices.power > 0.0) || !(devices.energy_budget > 0.0))
    throw ConfigError("alpha_base, power and energy_budget must be positive");
  if (!(devices.f_min > 0.0) || devices.f_min > devices.f_max)
    throw ConfigError("need 0 < f_min <= f_max");
  if (!(snr_db.lo <= snr_db.hi)) throw ConfigError("snr_db range must be nonempty");
  if (!(server_bandwidth > 0.0)) throw ConfigError("server_bandwidth must be positive");
  check_range(backhaul_bps, "backhaul_bps");
  if (base_graph.kind == BaseGraphSpec::Kind::erdos_renyi &&
      (!(base_graph.p > 0.0) || base_graph.p > 1.0))
    throw ConfigError("edge probability must be in (0, 1]");
  if (base_graph.kind == BaseGraphSpec::Kind::explicit_adjacency) {
    const auto& a = base_graph.adjacency;
    if (a.rows() != servers || a.cols() != servers)
      throw ConfigError("explicit adjacency must be servers x servers");
    if ((a - a.transpose()).cwiseAbs().maxCoeff() != 0.0 || a.diagonal().cwiseAbs().maxCoeff() != 0.0 ||
        ((a.array() != 0.0) && (a.array() != 1.0)).any())
      throw ConfigError("explicit adjacency must be symmetric 0/1 with zero diagonal");
    if (!is_connected(a)) throw ConfigError("explicit base graph is not connected");
  }
  if (partition.scheme == PartitionSpec::Scheme::dirichlet && !(partition.beta > 0.0))
    throw ConfigError("dirichlet beta must be positive");
  if (partition.scheme == PartitionSpec::Scheme::cluster_pathological &&
      partition.labels_per_cluster < 1)
    throw ConfigError("labels_per_cluster must be >= 1");
  if (dataset.kind == DatasetSpec::Kind::synthetic) {
    if (dataset.classes < 2 || dataset.dim < dataset.classes || dataset.samples_per_class < 1 ||
        dataset.test_samples_per_class < 1 || dataset.separation < 0.0)
      throw ConfigError("synthetic dataset needs classes >= 2, dim >= classes, positive sizes");
  } else if (dataset.train_path.empty() || dataset.test_path.empty()) {
    throw ConfigError("file dataset needs train and test paths");
  }
  if (hidden < 0) throw ConfigError("hidden units must be >= 0");
  if (upsilon_max.kind == UpsilonSchedule::Kind::relative && !(upsilon_max.gamma >= 0.0))
    throw ConfigError("upsilon gamma must be nonnegative");
}

namespace {

ScenarioConfig parse_document(const json& j) {
  require_keys(j, "config", {"servers", "devices_per_cluster", "hyper", "momentum", "devices",
                             "snr_db", "server_bandwidth", "backhaul_bps", "base_graph",
                             "partition", "dataset", "hidden", "upsilon_max", "method", "seed"});
  ScenarioConfig c;
  read(j, "servers", c.servers);
  read(j, "devices_per_cluster", c.devices_per_cluster);
  read(j, "momentum", c.momentum);
  read(j, "server_bandwidth", c.server_bandwidth);
  read(j, "hidden", c.hidden);
  read(j, "seed", c.seed);
  read_range(j, "snr_db", c.snr_db);
  read_range(j, "backhaul_bps", c.backhaul_bps);
  if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());

  if (j.contains("hyper")) {
    const auto& h = j.at("hyper");
    require_keys(h, "hyper", {"T", "R", "S", "I", "psi", "model_bits", "eta"});
    read(h, "T", c.hyper.T);
    read(h, "R", c.hyper.R);
    read(h, "S", c.hyper.S);
    read(h, "I", c.hyper.I);
    read(h, "psi", c.hyper.psi);
    read(h, "model_bits", c.hyper.model_bits);
    read(h, "eta", c.hyper.eta);
  }
  if (j.contains("devices")) {
    const auto& d = j.at("devices");
    require_keys(d, "devices", {"mu", "alpha_base", "alpha_scale", "power", "f_min", "f_max",
                                "energy_budget"});
    read_range(d, "mu", c.devices.mu);
    read(d, "alpha_base", c.devices.alpha_base);
    read_range(d, "alpha_scale", c.devices.alpha_scale);
    read(d, "power", c.devices.power);
    read(d, "f_min", c.devices.f_min);
    read(d, "f_max", c.devices.f_max);
    read(d, "energy_budget", c.devices.energy_budget);
  }
  if (j.contains("base_graph")) {
    const auto& g = j.at("base_graph");
    require_keys(g, "base_graph", {"kind", "p", "adjacency"});
    const std::string kind = g.value("kind", "complete");
    if (kind == "complete") {
      c.base_graph.kind = BaseGraphSpec::Kind::complete;
    } else if (kind == "erdos_renyi") {
      c.base_graph.kind = BaseGraphSpec::Kind::erdos_renyi;
      read(g, "p", c.base_graph.p);
    } else if (kind == "explicit") {
      c.base_graph.kind = BaseGraphSpec::Kind::explicit_adjacency;
      std::vector<std::vector<double>> rows;
      read(g, "adjacency", rows);
      c.base_graph.adjacency.resize(Eigen::Index(rows.size()), Eigen::Index(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.size()) throw ConfigError("adjacency must be square");
        for (std::size_t k = 0; k < rows.size(); ++k)
          c.base_graph.adjacency(Eigen::Index(i), Eigen::Index(k)) = rows[i][k];
      }
    } else {
      throw ConfigError("unknown base_graph kind '" + kind + "'");
    }
  }
  if (j.contains("partition")) {
    const auto& p = j.at("partition");
    require_keys(p, "partition", {"scheme", "beta", "labels_per_cluster"});
    if (p.contains("scheme")) {
      const std::string scheme = p.at("scheme").get<std::string>();
      if (scheme == "iid") c.partition.scheme = PartitionSpec::Scheme::iid;
      else if (scheme == "dirichlet") c.partition.scheme = PartitionSpec::Scheme::dirichlet;
      else if (scheme == "cluster_pathological")
        c.partition.scheme = PartitionSpec::Scheme::cluster_pathological;
      else throw ConfigError("unknown partition scheme '" + scheme + "'");
    }
    read(p, "beta", c.partition.beta);
    read(p, "labels_per_cluster", c.partition.labels_per_cluster);
  }
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    require_keys(d, "dataset", {"kind", "classes", "dim", "samples_per_class",
                                "test_samples_per_class", "separation", "train", "test",
                                "delimiter"});
    const std::string kind = d.value("kind", "synthetic");
    if (kind == "synthetic") c.dataset.kind = DatasetSpec::Kind::synthetic;
    else if (kind == "file") c.dataset.kind = DatasetSpec::Kind::file;
    else throw ConfigError("unknown dataset kind '" + kind + "'");
    read(d, "classes", c.dataset.classes);
    read(d, "dim", c.dataset.dim);
    read(d, "samples_per_class", c.dataset.samples_per_class);
    read(d, "test_samples_per_class", c.dataset.test_samples_per_class);
    read(d, "separation", c.dataset.separation);
    read(d, "train", c.dataset.train_path);
    read(d, "test", c.dataset.test_path);
    std::string delim;
    read(d, "delimiter", delim);
    if (delim.size() > 1) throw ConfigError("delimiter must be one character");
    if (delim.size() == 1) c.dataset.delimiter = delim[0];
  }
  if (j.contains("upsilon_max")) {
    const auto& u = j.at("upsilon_max");
    require_keys(u, "upsilon_max", {"kind", "gamma", "value", "start", "end"});
    const std::string kind = u.value("kind", "relative");
    if (kind == "relative") c.upsilon_max.kind = UpsilonSchedule::Kind::relative;
    else if (kind == "constant") c.upsilon_max.kind = UpsilonSchedule::Kind::constant;
    else if (kind == "linear_decay") c.upsilon_max.kind = UpsilonSchedule::Kind::linear_decay;
    else throw ConfigError("unknown upsilon_max kind '" + kind + "'");
    read(u, "gamma", c.upsilon_max.gamma);
    read(u, "value", c.upsilon_max.value);
    read(u, "start", c.upsilon_max.start);
    read(u, "end", c.upsilon_max.end);
  }
  return c;
}

}  // namespace

ScenarioConfig parse_config(const std::string& text) {
  ScenarioConfig c;
  try {
    c = parse_document(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  c.validate();
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ScenarioConfig& c) {
  json j;
  j["servers"] = c.servers;
  j["devices_per_cluster"] = c.devices_per_cluster;
  j["hyper"] = {{"T", c.hyper.T},     {"R", c.hyper.R},     {"S", c.hyper.S},
                {"I", c.hyper.I},     {"psi", c.hyper.psi}, {"model_bits", c.hyper.model_bits},
                {"eta", c.hyper.eta}};
  j["momentum"] = c.momentum;
  j["devices"] = {{"mu", range_json(c.devices.mu)},
                  {"alpha_base", c.devices.alpha_base},
                  {"alpha_scale", range_json(c.devices.alpha_scale)},
                  {"power", c.devices.power},
                  {"f_min", c.devices.f_min},
                  {"f_max", c.devices.f_max},
                  {"energy_budget", c.devices.energy_budget}};
  j["snr_db"] = range_json(c.snr_db);
  j["server_bandwidth"] = c.server_bandwidth;
  j["backhaul_bps"] = range_json(c.backhaul_bps);
  switch (c.base_graph.kind) {
    case BaseGraphSpec::Kind::complete: j["base_graph"] = {{"kind", "complete"}}; break;
    case BaseGraphSpec::Kind::erdos_renyi:
      j["base_graph"] = {{"kind", "erdos_renyi"}, {"p", c.base_graph.p}};
      break;
    case BaseGraphSpec::Kind::explicit_adjacency: {
      json rows = json::array();
      for (Eigen::Index i = 0; i < c.base_graph.adjacency.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < c.base_graph.adjacency.cols(); ++k)
          row.push_back(c.base_graph.adjacency(i, k));
        rows.push_back(row);
      }
      j["base_graph"] = {{"kind", "explicit"}, {"adjacency", rows}};
      break;
    }
  }
  const char* scheme = c.partition.scheme == PartitionSpec::Scheme::iid         ? "iid"
                       : c.partition.scheme == PartitionSpec::Scheme::dirichlet ? "dirichlet"
                                                                                : "cluster_pathological";
  j["partition"] = {{"scheme", scheme},
                    {"beta", c.partition.beta},
                    {"labels_per_cluster", c.partition.labels_per_cluster}};
  if (c.dataset.kind == DatasetSpec::Kind::synthetic) {
    j["dataset"] = {{"kind", "synthetic"},
                    {"classes", c.dataset.classes},
                    {"dim", c.dataset.dim},
                    {"samples_per_class", c.dataset.samples_per_class},
                    {"test_samples_per_class", c.dataset.test_samples_per_class},
                    {"separation", c.dataset.separation}};
  } else {
    j["dataset"] = {{"kind", "file"},
                    {"train", c.dataset.train_path},
                    {"test", c.dataset.test_path},
                    {"delimiter", std::string(1, c.dataset.delimiter)}};
  }
  j["hidden"] = c.hidden;
  switch (c.upsilon_max.kind) {
    case UpsilonSchedule::Kind::relative:
      j["upsilon_max"] = {{"kind", "relative"}, {"gamma", c.upsilon_max.gamma}};
      break;
    case UpsilonSchedule::Kind::constant:
      j["upsilon_max"] = {{"kind", "constant"}, {"value", c.upsilon_max.value}};
      break;
    case UpsilonSchedule::Kind::linear_decay:
      j["upsilon_max"] = {{"kind", "linear_decay"},
                          {"start", c.upsilon_max.start},
                          {"end", c.upsilon_max.end}};
      break;
  }
  j["method"] = to_string(c.method);
  j["seed"] = c.seed;
  return j.dump(2);
}

ScenarioConfig canonical_scenario() { return ScenarioConfig{}; }

std::vector<DeviceProfile> draw_device_profiles(const ScenarioConfig& cfg) {
  auto rng = tagged_stream(cfg.seed, kDevices);
  std::uniform_real_distribution<double> mu(cfg.devices.mu.lo, cfg.devices.mu.hi);
  std::uniform_real_distribution<double> scale(cfg.devices.alpha_scale.lo,
                                               cfg.devices.alpha_scale.hi);
  std::vector<DeviceProfile> out;
  out.reserve(std::size_t(cfg.num_devices()));
  for (int n = 0; n < cfg.num_devices(); ++n) {
    DeviceProfile p;
    p.mu = mu(rng);
    p.alpha = cfg.devices.alpha_base * scale(rng);
    p.power = cfg.devices.power;
    p.f_min = cfg.devices.f_min;
    p.f_max = cfg.devices.f_max;
    p.energy_budget = cfg.devices.energy_budget;
    p.validate();
    out.push_back(p);
  }
  return out;
}

Matrix build_base_graph(const ScenarioConfig& cfg) {
  switch (cfg.base_graph.kind) {
    case BaseGraphSpec::Kind::complete: return complete_adjacency(cfg.servers);
    case BaseGraphSpec::Kind::erdos_renyi: {
      auto rng = tagged_stream(cfg.seed, kGraph);
      return erdos_renyi_connected(cfg.servers, cfg.base_graph.p, rng);
    }
    case BaseGraphSpec::Kind::explicit_adjacency: return cfg.base_graph.adjacency;
  }
  return {};
}

RoundEnvironment draw_round_environment(const ScenarioConfig& cfg, const Matrix& base, int t,
                                        int r) {
  RoundEnvironment env;
  auto snr_rng = tagged_stream(cfg.seed, kSnr, t, r);
  std::uniform_real_distribution<double> snr_db(cfg.snr_db.lo, cfg.snr_db.hi);
  env.channel.snr.resize(cfg.num_devices());
  for (int n = 0; n < cfg.num_devices(); ++n) env.channel.snr(n) = db_to_linear(snr_db(snr_rng));
  env.channel.server_bandwidth = Vector::Constant(cfg.servers, cfg.server_bandwidth);

  auto link_rng = tagged_stream(cfg.seed, kBackhaul, t);
  std::uniform_real_distribution<double> bps(cfg.backhaul_bps.lo, cfg.backhaul_bps.hi);
  env.backhaul = Matrix::Zero(cfg.servers, cfg.servers);
  for (int c = 0; c < cfg.servers; ++c)
    for (int d = c + 1; d < cfg.servers; ++d) {
      const double draw = bps(link_rng);
      if (base(c, d) != 0.0) env.backhaul(c, d) = env.backhaul(d, c) = draw;
    }
  return env;
}

DataBundle prepare_data(const ScenarioConfig& cfg) {
  DataBundle b;
  if (cfg.dataset.kind == DatasetSpec::Kind::synthetic) {
    b.train = make_synthetic_dataset(cfg.dataset.classes, cfg.dataset.dim,
                                     cfg.dataset.samples_per_class, cfg.dataset.separation,
                                     tagged_stream(cfg.seed, kTrainData)());
    b.test = make_synthetic_dataset(cfg.dataset.classes, cfg.dataset.dim,
                                    cfg.dataset.test_samples_per_class, cfg.dataset.separation,
                                    tagged_stream(cfg.seed, kTestData)());
  } else {
    b.train = load_delimited_dataset(cfg.dataset.train_path, cfg.dataset.delimiter);
    b.test = load_delimited_dataset(cfg.dataset.test_path, cfg.dataset.delimiter);
    if (b.train.features.cols() != b.test.features.cols())
      throw ConfigError("train and test files differ in feature width");
    const int k = std::max(b.train.num_classes, b.test.num_classes);
    b.train.num_classes = b.test.num_classes = k;
  }
  PartitionSpec spec = cfg.partition;
  spec.seed = tagged_stream(cfg.seed, kPartition)();
  const std::vector<int> sizes(std::size_t(cfg.servers), cfg.devices_per_cluster);
  b.shards = partition(b.train, spec, sizes);
  return b;
}

std::uint64_t model_init_seed(const ScenarioConfig& cfg) { return tagged_stream(cfg.seed, kInit)(); }

}  // namespace hfel
