#include "nfer/metrics.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace nfer {

MetricsReport compute_metrics(std::span<const std::size_t> predicted, std::span<const std::size_t> truth, std::size_t classes) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("compute_metrics: prediction and label counts differ");
  if (truth.empty()) throw std::invalid_argument("compute_metrics: no samples");
  if (classes == 0) throw std::invalid_argument("compute_metrics: no classes");
  MetricsReport r;
  r.count = truth.size();
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= classes || predicted[i] >= classes) throw std::invalid_argument("compute_metrics: label out of range at sample " + std::to_string(i));
    ++r.confusion[truth[i]][predicted[i]];
  }
  std::size_t correct = 0;
  for (std::size_t c = 0; c < classes; ++c) correct += r.confusion[c][c];
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.count);

  double f1_sum = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t predicted_c = 0, support = 0;
    for (std::size_t k = 0; k < classes; ++k) {
      predicted_c += r.confusion[k][c];
      support += r.confusion[c][k];
    }
    ClassMetrics m;
    m.support = support;
    const double tp = static_cast<double>(r.confusion[c][c]);
    m.precision = predicted_c ? tp / static_cast<double>(predicted_c) : 0.0;
    m.recall = support ? tp / static_cast<double>(support) : 0.0;
    m.f1 = (m.precision + m.recall) > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    f1_sum += m.f1;
    r.per_class.push_back(m);
  }
  r.macro_f1 = f1_sum / static_cast<double>(classes);
  return r;
}

void print_metrics(std::ostream& out, const MetricsReport& r, const std::vector<std::string>& names) {
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %9s %9s %9s %8s\n", "class", "precision", "recall", "f1", "support");
  out << line;
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    const std::string name = c < names.size() ? names[c] : std::to_string(c);
    std::snprintf(line, sizeof line, "%-12s %9.4f %9.4f %9.4f %8zu\n", name.c_str(), m.precision, m.recall, m.f1, m.support);
    out << line;
  }
  std::snprintf(line, sizeof line, "accuracy %.4f  macro-F1 %.4f  (n = %zu)\n", r.accuracy, r.macro_f1, r.count);
  out << line;
}

void write_metrics_csv(std::ostream& out, const MetricsReport& r, const std::vector<std::string>& names) {
  out << "metric,class,value\n";
  out << "accuracy,," << format_double(r.accuracy) << "\n";
  out << "macro_f1,," << format_double(r.macro_f1) << "\n";
  out << "count,," << r.count << "\n";
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    const std::string name = c < names.size() ? names[c] : std::to_string(c);
    out << "precision," << name << "," << format_double(m.precision) << "\n";
    out << "recall," << name << "," << format_double(m.recall) << "\n";
    out << "f1," << name << "," << format_double(m.f1) << "\n";
    out << "support," << name << "," << m.support << "\n";
  }
}

Summary summarize(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("summarize: no values");
  Summary s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace nfer
