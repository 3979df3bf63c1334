#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace yolo {

/// One CSV row: suite, param, location, rep, value, unit.
struct BenchRow {
  std::string suite;
  std::string param;
  std::string location;
  int rep = 0;
  double value = 0;
  std::string unit;
};

struct BenchResult {
  std::string suite;
  std::vector<BenchRow> rows;
  /// Derived figures such as throughput ratios, slopes and fit quality.
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::string> notes;
  bool base_intact = true;
  std::string skipped;

  double metric(const std::string& name) const;
  /// Median of the rows matching param and location.
  double median(const std::string& param, const std::string& location) const;
};

struct BenchConfig {
  std::string workdir = "/tmp/yolo-bench";
  std::uint64_t seed = 1;
  int reps = 5;

  std::uint64_t io_file_size = 1ull << 30;
  std::size_t io_request = 4096;
  bool io_cold = true;

  std::size_t meta_iterations = 10000;

  std::vector<int> snap_counts = {1, 2, 4, 8, 16, 32, 64, 128, 256, 512};
  std::size_t snap_samples = 200;
  std::size_t snap_untouched = 1000;

  std::vector<std::size_t> commit_records = {1000,  2000,  5000, 10000,
                                             20000, 50000, 100000};
  std::vector<int> commit_snapshots = {1, 2, 4, 8, 16, 32, 64, 128, 256, 512};

  std::function<void(const std::string&)> progress;
};

BenchResult bench_io(const BenchConfig& config);
BenchResult bench_meta(const BenchConfig& config);
BenchResult bench_snap(const BenchConfig& config);
BenchResult bench_commit(const BenchConfig& config);

void write_csv(std::ostream& out, const std::vector<BenchResult>& results,
               bool header = true);
/// Medians with coefficient of variation per cell, then the metrics.
std::string render_summary(const BenchResult& result);

double median_of(std::vector<double> values);
double coefficient_of_variation(const std::vector<double>& values);
/// Least-squares line through the points; returns {slope, intercept, r²}.
struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
};
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace yolo
