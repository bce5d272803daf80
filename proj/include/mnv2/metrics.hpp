#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mnv2 {

/// Index of the largest value; ties go to the lowest index.
int argmax(std::span<const float> values);

/// k x k confusion counts, rows = true class, columns = predicted class.
class Metrics {
public:
  Metrics() = default;
  explicit Metrics(std::size_t num_classes);
  // Throws ShapeError unless counts has num_classes^2 entries.
  static Metrics from_counts(std::size_t num_classes, std::vector<std::uint64_t> counts);

  void add(int truth, int predicted);
  void merge(const Metrics& other);

  std::size_t num_classes() const { return k_; }
  std::uint64_t total() const { return total_; }
  std::uint64_t count(std::size_t truth, std::size_t predicted) const {
    return confusion_[truth * k_ + predicted];
  }
  std::uint64_t row_total(std::size_t truth) const;
  std::uint64_t correct() const;

  /// trace / total; 0 when empty.
  double accuracy() const;

  /// Row-normalized matrix. Rows with no samples stay zero and are flagged
  /// in `empty_rows` instead of being divided.
  struct Normalized {
    std::vector<double> values;
    std::vector<bool> empty_rows;
    double at(std::size_t truth, std::size_t predicted) const {
      return values[truth * empty_rows.size() + predicted];
    }
  };
  Normalized normalized() const;

  // Diagonal of the normalized matrix; NaN for empty rows.
  std::vector<double> per_class_accuracy() const;

  const std::vector<std::uint64_t>& confusion() const { return confusion_; }
  bool operator==(const Metrics&) const = default;

private:
  std::size_t k_ = 0;
  std::uint64_t total_ = 0;
  std::vector<std::uint64_t> confusion_;
};

/// Summary of k repeated runs at one setting.
struct RunSummary {
  std::vector<double> accuracies;
  std::vector<double> throughputs; // images per second
  double mean_accuracy = 0.0;
  double mean_throughput = 0.0;
  double min_accuracy = 0.0;
  double max_accuracy = 0.0;
  double disparity = 0.0; // max - min accuracy
};

RunSummary summarize_runs(std::vector<double> accuracies, std::vector<double> throughputs = {});

} // namespace mnv2
