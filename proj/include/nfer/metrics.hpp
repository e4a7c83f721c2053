#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace nfer {

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t support = 0;
};

/// Precision with no predictions, recall with no support and F1 with
/// precision + recall = 0 are all 0. Every configured class enters the macro
/// average, including classes absent from both predictions and labels.
struct MetricsReport {
  double accuracy = 0;
  double macro_f1 = 0;
  std::vector<ClassMetrics> per_class;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
  std::size_t count = 0;
};

/// Throws std::invalid_argument on length mismatch, empty input or a label
/// outside [0, classes).
MetricsReport compute_metrics(std::span<const std::size_t> predicted, std::span<const std::size_t> truth, std::size_t classes);

/// Aligned human-readable summary.
void print_metrics(std::ostream& out, const MetricsReport& r, const std::vector<std::string>& class_names);
/// Long format: metric,class,value (class empty for aggregate metrics).
void write_metrics_csv(std::ostream& out, const MetricsReport& r, const std::vector<std::string>& class_names);

struct Summary {
  double mean = 0;
  double stddev = 0;  // sample standard deviation (n - 1), 0 for n = 1
};

Summary summarize(std::span<const double> values);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace nfer
