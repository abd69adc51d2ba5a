#pragma once

// Per-round CSV traces, the summary table and SVG plots.
//
// Trace schema (version 1): one header row, then one row per (t, r).
// Vectors are ';'-joined, matrices are ';'-joined in row-major order with
// their side length taken from cluster_time. Floats use 17 significant digits.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hfel/harness.hpp"

namespace hfel {

inline constexpr int kTraceSchemaVersion = 1;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const std::vector<std::string>& trace_columns();

void write_traces(std::ostream& out, const std::vector<RoundTrace>& traces);
std::string traces_to_csv(const std::vector<RoundTrace>& traces);
std::vector<RoundTrace> parse_traces(std::istream& in);
std::vector<RoundTrace> parse_traces(const std::string& csv);

struct SummaryRow {
  std::string method;
  std::uint64_t seed = 0;
  int rounds = 0;
  double time = 0.0;
  double energy = 0.0;
  double best_accuracy = 0.0;
  double final_accuracy = 0.0;
};

SummaryRow summarize(const std::vector<RoundTrace>& traces);
std::string summary_csv(const std::vector<SummaryRow>& rows);

/// Writes `<stem>.csv`, `<stem>_summary.csv` and the plots for one run.
void emit_outputs(const std::vector<RoundTrace>& traces, const std::filesystem::path& out_dir,
                  const std::string& stem);

/// Reads every trace CSV in `dir` (skipping summaries), writes summary.csv,
/// per-method means in methods.csv, and the comparison plots.
std::vector<SummaryRow> build_report(const std::filesystem::path& dir);

struct Series {
  std::string label;
  std::vector<double> x, y;
};

std::string svg_line_plot(const std::vector<Series>& series, const std::string& title,
                          const std::string& xlabel, const std::string& ylabel);

}  // namespace hfel
