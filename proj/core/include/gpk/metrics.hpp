#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "gpk/phase.hpp"

namespace gpk {

struct MetricReport {
  double rmse = 0.0;
  double accuracy = 0.0;  // percent
  std::size_t n_samples = 0;
};

/// sqrt(mean((p - t)^2)); throws ContractError on empty or mismatched inputs.
[[nodiscard]] double rmse(std::span<const double> predictions, std::span<const double> targets);

/// Percentage of matching labels.
[[nodiscard]] double accuracy(std::span<const PhaseLabel> predicted, std::span<const PhaseLabel> targets);

[[nodiscard]] MetricReport evaluate(std::span<const double> predictions, std::span<const double> targets,
                                    std::span<const PhaseLabel> predicted_labels,
                                    std::span<const PhaseLabel> target_labels);

/// RMSE between `segment` and its copy sorted in decreasing order; 0 iff non-increasing.
[[nodiscard]] double monotonicity_deviation(std::span<const double> segment);

struct SegmentRange {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  bool ascending = false;  // true when the target climbs; the signal is negated before scoring
};

/// Quarter-cycle stretches of a stepwise target phase. A half cycle runs from the middle of
/// a +1 run to the middle of the next -1 run (descending) or from a -1 run to a +1 run
/// (ascending); it is cut in two at the middle of the 0 run in between. Half cycles without
/// an intervening 0 run are skipped.
[[nodiscard]] std::vector<SegmentRange> quarter_cycle_segments(std::span<const double> target);

/// Mean monotonicity deviation of `signal` over the given segments (ascending ones negated).
/// Returns 0 when `segments` is empty.
[[nodiscard]] double mean_monotonicity_deviation(std::span<const double> signal,
                                                 std::span<const SegmentRange> segments);

struct WindowedPoint {
  double t = 0.0;
  double acc_window = 0.0;
  double acc_cumulative = 0.0;
  double rmse_window = 0.0;
  double rmse_cumulative = 0.0;
};

/// Streaming accuracy / RMSE over a trailing time window and over the whole prefix.
class WindowedMetrics {
 public:
  WindowedMetrics(double window_s, double sample_rate);

  /// Adds one tick and returns the metrics including it.
  WindowedPoint push(double prediction, double target, PhaseLabel predicted, PhaseLabel truth);

  [[nodiscard]] std::size_t window_samples() const noexcept { return capacity_; }
  [[nodiscard]] std::size_t count() const noexcept { return count_; }

 private:
  struct Entry {
    double squared_error;
    bool correct;
  };

  std::size_t capacity_;
  double sample_rate_;
  std::vector<Entry> ring_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
  double window_sq_ = 0.0;
  std::size_t window_correct_ = 0;
  double total_sq_ = 0.0;
  std::size_t total_correct_ = 0;
};

[[nodiscard]] std::vector<WindowedPoint> windowed_metrics(std::span<const double> predictions,
                                                          std::span<const double> targets,
                                                          std::span<const PhaseLabel> predicted_labels,
                                                          std::span<const PhaseLabel> target_labels,
                                                          double window_s, double sample_rate);

/// Mean windowed accuracy over the points with t >= `after_s`; NaN when none qualify.
[[nodiscard]] double mean_window_accuracy_after(std::span<const WindowedPoint> series, double after_s);

void save_windowed_csv(std::span<const WindowedPoint> series, const std::filesystem::path& path);

}  // namespace gpk
