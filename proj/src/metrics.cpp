#include "mnv2/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "mnv2/error.hpp"

namespace mnv2 {

int argmax(std::span<const float> values) {
  if (values.empty()) throw ShapeError("argmax of empty row");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<int>(best);
}

Metrics::Metrics(std::size_t num_classes) : k_(num_classes), confusion_(num_classes * num_classes, 0) {}

Metrics Metrics::from_counts(std::size_t num_classes, std::vector<std::uint64_t> counts) {
  if (counts.size() != num_classes * num_classes) {
    throw ShapeError("confusion counts do not form a square matrix");
  }
  Metrics m(num_classes);
  m.confusion_ = std::move(counts);
  m.total_ = std::accumulate(m.confusion_.begin(), m.confusion_.end(), std::uint64_t{0});
  return m;
}

void Metrics::add(int truth, int predicted) {
  if (truth < 0 || predicted < 0 || static_cast<std::size_t>(truth) >= k_ ||
      static_cast<std::size_t>(predicted) >= k_) {
    throw ShapeError("confusion entry (" + std::to_string(truth) + ", " + std::to_string(predicted) +
                     ") outside " + std::to_string(k_) + " classes");
  }
  ++confusion_[static_cast<std::size_t>(truth) * k_ + static_cast<std::size_t>(predicted)];
  ++total_;
}

void Metrics::merge(const Metrics& other) {
  if (other.k_ != k_) throw ShapeError("cannot merge confusion matrices of different sizes");
  for (std::size_t i = 0; i < confusion_.size(); ++i) confusion_[i] += other.confusion_[i];
  total_ += other.total_;
}

std::uint64_t Metrics::row_total(std::size_t truth) const {
  return std::accumulate(confusion_.begin() + static_cast<long>(truth * k_),
                         confusion_.begin() + static_cast<long>((truth + 1) * k_), std::uint64_t{0});
}

std::uint64_t Metrics::correct() const {
  std::uint64_t n = 0;
  for (std::size_t i = 0; i < k_; ++i) n += count(i, i);
  return n;
}

double Metrics::accuracy() const {
  return total_ == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(total_);
}

Metrics::Normalized Metrics::normalized() const {
  Normalized out{std::vector<double>(k_ * k_, 0.0), std::vector<bool>(k_, false)};
  for (std::size_t r = 0; r < k_; ++r) {
    const std::uint64_t n = row_total(r);
    if (n == 0) {
      out.empty_rows[r] = true;
      continue;
    }
    for (std::size_t c = 0; c < k_; ++c) {
      out.values[r * k_ + c] = static_cast<double>(count(r, c)) / static_cast<double>(n);
    }
  }
  return out;
}

std::vector<double> Metrics::per_class_accuracy() const {
  const Normalized norm = normalized();
  std::vector<double> out(k_);
  for (std::size_t i = 0; i < k_; ++i) {
    out[i] = norm.empty_rows[i] ? std::numeric_limits<double>::quiet_NaN() : norm.at(i, i);
  }
  return out;
}

RunSummary summarize_runs(std::vector<double> accuracies, std::vector<double> throughputs) {
  if (accuracies.empty()) throw ConfigError("summarize_runs needs at least one run");
  RunSummary s;
  const auto [lo, hi] = std::minmax_element(accuracies.begin(), accuracies.end());
  s.min_accuracy = *lo;
  s.max_accuracy = *hi;
  s.disparity = s.max_accuracy - s.min_accuracy;
  const double mean = std::accumulate(accuracies.begin(), accuracies.end(), 0.0) /
                      static_cast<double>(accuracies.size());
  s.mean_accuracy = std::clamp(mean, s.min_accuracy, s.max_accuracy);
  if (!throughputs.empty()) {
    s.mean_throughput = std::accumulate(throughputs.begin(), throughputs.end(), 0.0) /
                        static_cast<double>(throughputs.size());
  }
  s.accuracies = std::move(accuracies);
  s.throughputs = std::move(throughputs);
  return s;
}

} // namespace mnv2
