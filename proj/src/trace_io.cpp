#include "hfel/trace_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace hfel {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class Range>
std::string join(const Range& values) {
  std::string out;
  bool first = true;
  for (auto v : values) {
    if (!first) out += ';';
    first = false;
    if constexpr (std::is_integral_v<decltype(v)>)
      out += std::to_string(v);
    else
      out += fmt(v);
  }
  return out;
}

std::string join_vector(const Vector& v) { return join(std::vector<double>(v.data(), v.data() + v.size())); }

std::string join_matrix(const Matrix& m) {
  std::vector<double> flat;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) flat.push_back(m(i, j));
  return join(flat);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double to_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw IoError("bad number in trace: '" + s + "'");
  return v;
}

template <class Int>
Int to_int(const std::string& s) {
  Int v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw IoError("bad integer in trace: '" + s + "'");
  return v;
}

Vector parse_vector(const std::string& s) {
  if (s.empty()) return Vector();
  const auto parts = split(s, ';');
  Vector v(Eigen::Index(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) v(Eigen::Index(i)) = to_double(parts[i]);
  return v;
}

Matrix parse_matrix(const std::string& s, Eigen::Index side) {
  const Vector flat = parse_vector(s);
  if (flat.size() != side * side) throw IoError("matrix field has wrong length");
  Matrix m(side, side);
  for (Eigen::Index i = 0; i < side; ++i)
    for (Eigen::Index j = 0; j < side; ++j) m(i, j) = flat(i * side + j);
  return m;
}

const char* const kColumns[] = {
    "schema_version", "method",          "seed",           "t",
    "r",              "global_time",     "elapsed",        "predicted_time",
    "consensus_bound", "upsilon_max",    "consensus_average", "max_staleness",
    "allocator_calls", "train_loss",     "test_accuracy",  "cluster_time",
    "sync_time",      "snr",             "bandwidth",      "frequency",
    "local_iters",    "energy_cap",      "energy",         "cumulative_energy",
    "backhaul",       "active_adjacency"};

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed for " + path.string());
}

std::string csv_escape(const std::string& s) {
  return s.find_first_of(",\"\n") == std::string::npos ? s : "\"" + s + "\"";
}

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += ch;
    }
  }
  return out;
}

Series curve(const std::vector<RoundTrace>& tr, const std::string& label, int which) {
  Series s{label, {}, {}};
  double round = 0;
  for (const auto& rec : tr) {
    switch (which) {
      case 0: s.x.push_back(rec.elapsed); s.y.push_back(rec.test_accuracy); break;
      case 1: s.x.push_back(rec.elapsed); s.y.push_back(rec.train_loss); break;
      default: s.x.push_back(++round); s.y.push_back(rec.cumulative_energy.sum()); break;
    }
  }
  return s;
}

void write_plots(const std::vector<std::pair<std::string, std::vector<RoundTrace>>>& runs,
                 const std::filesystem::path& dir, const std::string& prefix) {
  std::vector<Series> acc, loss, energy;
  for (const auto& [label, tr] : runs) {
    acc.push_back(curve(tr, label, 0));
    loss.push_back(curve(tr, label, 1));
    energy.push_back(curve(tr, label, 2));
  }
  write_file(dir / (prefix + "accuracy_vs_time.svg"),
             svg_line_plot(acc, "Test accuracy", "simulated time (s)", "accuracy"));
  write_file(dir / (prefix + "loss_vs_time.svg"),
             svg_line_plot(loss, "Training loss", "simulated time (s)", "loss"));
  write_file(dir / (prefix + "energy_vs_round.svg"),
             svg_line_plot(energy, "Cumulative device energy", "edge round", "energy (J)"));
}

}  // namespace

const std::vector<std::string>& trace_columns() {
  static const std::vector<std::string> cols(std::begin(kColumns), std::end(kColumns));
  return cols;
}

void write_traces(std::ostream& out, const std::vector<RoundTrace>& traces) {
  const auto& cols = trace_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& t : traces) {
    out << kTraceSchemaVersion << ',' << t.method << ',' << t.seed << ',' << t.t << ',' << t.r << ','
        << fmt(t.global_time) << ',' << fmt(t.elapsed) << ',' << fmt(t.predicted_time) << ','
        << fmt(t.consensus_bound) << ',' << fmt(t.upsilon_max) << ',' << fmt(t.consensus_average)
        << ',' << t.max_staleness << ',' << t.allocator_calls << ',' << fmt(t.train_loss) << ','
        << fmt(t.test_accuracy) << ',' << join_vector(t.cluster_time) << ','
        << join_vector(t.sync_time) << ',' << join_vector(t.snr) << ',' << join_vector(t.bandwidth)
        << ',' << join_vector(t.frequency) << ',' << join(t.local_iters) << ','
        << join_vector(t.energy_cap) << ',' << join_vector(t.energy) << ','
        << join_vector(t.cumulative_energy) << ',' << join_matrix(t.backhaul) << ','
        << join_matrix(t.active_adjacency) << '\n';
  }
}

std::string traces_to_csv(const std::vector<RoundTrace>& traces) {
  std::ostringstream out;
  write_traces(out, traces);
  return out.str();
}

std::vector<RoundTrace> parse_traces(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty trace file");
  if (split(line, ',') != trace_columns()) throw IoError("trace header does not match schema");
  std::vector<RoundTrace> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != trace_columns().size()) throw IoError("trace row has wrong field count");
    if (to_int<int>(f[0]) != kTraceSchemaVersion) throw IoError("unsupported trace schema version");
    RoundTrace t;
    t.method = f[1];
    t.seed = to_int<std::uint64_t>(f[2]);
    t.t = to_int<int>(f[3]);
    t.r = to_int<int>(f[4]);
    t.global_time = to_double(f[5]);
    t.elapsed = to_double(f[6]);
    t.predicted_time = to_double(f[7]);
    t.consensus_bound = to_double(f[8]);
    t.upsilon_max = to_double(f[9]);
    t.consensus_average = to_double(f[10]);
    t.max_staleness = to_int<int>(f[11]);
    t.allocator_calls = to_int<int>(f[12]);
    t.train_loss = to_double(f[13]);
    t.test_accuracy = to_double(f[14]);
    t.cluster_time = parse_vector(f[15]);
    t.sync_time = parse_vector(f[16]);
    t.snr = parse_vector(f[17]);
    t.bandwidth = parse_vector(f[18]);
    t.frequency = parse_vector(f[19]);
    if (!f[20].empty())
      for (const auto& s : split(f[20], ';')) t.local_iters.push_back(to_int<int>(s));
    t.energy_cap = parse_vector(f[21]);
    t.energy = parse_vector(f[22]);
    t.cumulative_energy = parse_vector(f[23]);
    t.backhaul = parse_matrix(f[24], t.cluster_time.size());
    t.active_adjacency = parse_matrix(f[25], t.cluster_time.size());
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<RoundTrace> parse_traces(const std::string& csv) {
  std::istringstream in(csv);
  return parse_traces(in);
}

SummaryRow summarize(const std::vector<RoundTrace>& traces) {
  SummaryRow row;
  if (traces.empty()) return row;
  row.method = traces.front().method;
  row.seed = traces.front().seed;
  row.rounds = traces.back().t + 1;
  row.time = traces.back().elapsed;
  row.energy = traces.back().cumulative_energy.sum();
  for (const auto& t : traces) row.best_accuracy = std::max(row.best_accuracy, t.test_accuracy);
  row.final_accuracy = traces.back().test_accuracy;
  return row;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "method,seed,rounds,time,energy,best_accuracy,final_accuracy\n";
  for (const auto& r : rows)
    out += csv_escape(r.method) + ',' + std::to_string(r.seed) + ',' + std::to_string(r.rounds) +
           ',' + fmt(r.time) + ',' + fmt(r.energy) + ',' + fmt(r.best_accuracy) + ',' +
           fmt(r.final_accuracy) + '\n';
  return out;
}

void emit_outputs(const std::vector<RoundTrace>& traces, const std::filesystem::path& out_dir,
                  const std::string& stem) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  write_file(out_dir / (stem + ".csv"), traces_to_csv(traces));
  write_file(out_dir / (stem + "_summary.csv"), summary_csv({summarize(traces)}));
  write_plots({{stem, traces}}, out_dir, stem + "_");
}

std::vector<SummaryRow> build_report(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto& p = entry.path();
    const std::string name = p.filename().string();
    if (p.extension() != ".csv" || name.ends_with("_summary.csv") || name == "summary.csv" ||
        name == "methods.csv")
      continue;
    files.push_back(p);
  }
  std::sort(files.begin(), files.end());

  std::vector<SummaryRow> rows;
  std::vector<std::pair<std::string, std::vector<RoundTrace>>> runs;
  for (const auto& p : files) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    auto tr = parse_traces(in);
    if (tr.empty()) continue;
    rows.push_back(summarize(tr));
    runs.emplace_back(tr.front().method + " seed " + std::to_string(tr.front().seed), std::move(tr));
  }
  write_file(dir / "summary.csv", summary_csv(rows));

  // Per-method means over seeds.
  std::map<std::string, std::vector<const SummaryRow*>> by_method;
  for (const auto& r : rows) by_method[r.method].push_back(&r);
  std::string methods = "method,runs,mean_time,mean_energy,mean_best_accuracy,mean_final_accuracy\n";
  for (const auto& [name, group] : by_method) {
    double time = 0, energy = 0, best = 0, fin = 0;
    for (const auto* r : group) {
      time += r->time;
      energy += r->energy;
      best += r->best_accuracy;
      fin += r->final_accuracy;
    }
    const double n = double(group.size());
    methods += csv_escape(name) + ',' + std::to_string(group.size()) + ',' + fmt(time / n) + ',' +
               fmt(energy / n) + ',' + fmt(best / n) + ',' + fmt(fin / n) + '\n';
  }
  write_file(dir / "methods.csv", methods);
  if (!runs.empty()) write_plots(runs, dir, "report_");
  return rows;
}

std::string svg_line_plot(const std::vector<Series>& series, const std::string& title,
                          const std::string& xlabel, const std::string& ylabel) {
  const double W = 720, H = 440, left = 70, right = 180, top = 40, bottom = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!(x0 < x1)) x0 = 0, x1 = std::isfinite(x1) && x1 > 0 ? x1 : 1;
  if (!(y0 < y1)) y0 = std::isfinite(y0) ? y0 - 1 : 0, y1 = y0 + 2;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << left + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << xml_escape(title) << "</text>\n"
    << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4, yv = y0 + (y1 - y0) * k / 4;
    char xl[32], yl[32];
    std::snprintf(xl, sizeof xl, "%.3g", xv);
    std::snprintf(yl, sizeof yl, "%.3g", yv);
    o << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">" << xl
      << "</text>\n"
      << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << yl
      << "</text>\n";
  }
  o << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">"
    << xml_escape(xlabel) << "</text>\n"
    << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << xml_escape(ylabel) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % std::size(kPalette)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i)
      if (std::isfinite(series[s].x[i]) && std::isfinite(series[s].y[i]))
        o << px(series[s].x[i]) << ',' << py(series[s].y[i]) << ' ';
    o << "\"/>\n";
    const double ly = top + 14 + 16 * double(s);
    o << "<line x1=\"" << left + pw + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << left + pw + 30
      << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << left + pw + 34 << "\" y=\"" << ly << "\">" << xml_escape(series[s].label)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace hfel
