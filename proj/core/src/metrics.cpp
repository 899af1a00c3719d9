#include "gpk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <string>

#include "gpk/csv.hpp"
#include "gpk/error.hpp"

namespace gpk {

double rmse(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) {
    throw ContractError("rmse: length mismatch (" + std::to_string(predictions.size()) + " vs " +
                        std::to_string(targets.size()) + ")");
  }
  if (predictions.empty()) throw ContractError("rmse: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(predictions.size()));
}

double accuracy(std::span<const PhaseLabel> predicted, std::span<const PhaseLabel> targets) {
  if (predicted.size() != targets.size()) throw ContractError("accuracy: length mismatch");
  if (predicted.empty()) throw ContractError("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == targets[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(predicted.size());
}

MetricReport evaluate(std::span<const double> predictions, std::span<const double> targets,
                      std::span<const PhaseLabel> predicted_labels,
                      std::span<const PhaseLabel> target_labels) {
  return {rmse(predictions, targets), accuracy(predicted_labels, target_labels), predictions.size()};
}

double monotonicity_deviation(std::span<const double> segment) {
  if (segment.size() < 2) throw ContractError("monotonicity_deviation needs >= 2 samples");
  std::vector<double> sorted(segment.begin(), segment.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  return rmse(segment, sorted);
}

std::vector<SegmentRange> quarter_cycle_segments(std::span<const double> target) {
  struct Run {
    double value;
    std::size_t begin;
    std::size_t end;
    [[nodiscard]] std::size_t mid() const { return (begin + end - 1) / 2; }
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (runs.empty() || runs.back().value != target[i]) {
      runs.push_back({target[i], i, i + 1});
    } else {
      runs.back().end = i + 1;
    }
  }

  std::vector<SegmentRange> out;
  for (std::size_t r = 0; r + 2 < runs.size(); ++r) {
    const Run& a = runs[r];
    const Run& b = runs[r + 1];
    const Run& c = runs[r + 2];
    if (b.value != 0.0) continue;
    const bool descending = a.value == 1.0 && c.value == -1.0;
    const bool ascending = a.value == -1.0 && c.value == 1.0;
    if (!descending && !ascending) continue;
    const SegmentRange first{a.mid(), b.mid() + 1, ascending};
    const SegmentRange second{b.mid(), c.mid() + 1, ascending};
    if (first.end - first.begin >= 2) out.push_back(first);
    if (second.end - second.begin >= 2) out.push_back(second);
  }
  return out;
}

double mean_monotonicity_deviation(std::span<const double> signal,
                                   std::span<const SegmentRange> segments) {
  if (segments.empty()) return 0.0;
  double sum = 0.0;
  std::vector<double> buf;
  for (const auto& s : segments) {
    if (s.end > signal.size() || s.end - s.begin < 2) throw ContractError("segment out of range");
    buf.assign(signal.begin() + static_cast<std::ptrdiff_t>(s.begin),
               signal.begin() + static_cast<std::ptrdiff_t>(s.end));
    if (s.ascending) {
      for (auto& v : buf) v = -v;
    }
    sum += monotonicity_deviation(buf);
  }
  return sum / static_cast<double>(segments.size());
}

// ---------------------------------------------------------------------------

WindowedMetrics::WindowedMetrics(double window_s, double sample_rate)
    : capacity_(static_cast<std::size_t>(std::llround(window_s * sample_rate))),
      sample_rate_(sample_rate) {
  if (!(sample_rate > 0.0) || capacity_ < 1) {
    throw ContractError("window * sample_rate must be >= 1");
  }
  ring_.resize(capacity_);
}

WindowedPoint WindowedMetrics::push(double prediction, double target, PhaseLabel predicted,
                                    PhaseLabel truth) {
  const double d = prediction - target;
  const Entry e{d * d, predicted == truth};
  if (count_ >= capacity_) {
    const Entry& old = ring_[head_];
    window_sq_ -= old.squared_error;
    window_correct_ -= old.correct;
  }
  ring_[head_] = e;
  head_ = (head_ + 1) % capacity_;
  window_sq_ += e.squared_error;
  window_correct_ += e.correct;
  total_sq_ += e.squared_error;
  total_correct_ += e.correct;
  ++count_;

  const auto in_window = static_cast<double>(std::min(count_, capacity_));
  const auto total = static_cast<double>(count_);
  WindowedPoint p;
  p.t = static_cast<double>(count_ - 1) / sample_rate_;
  p.acc_window = 100.0 * static_cast<double>(window_correct_) / in_window;
  p.acc_cumulative = 100.0 * static_cast<double>(total_correct_) / total;
  p.rmse_window = std::sqrt(std::max(window_sq_, 0.0) / in_window);
  p.rmse_cumulative = std::sqrt(total_sq_ / total);
  return p;
}

std::vector<WindowedPoint> windowed_metrics(std::span<const double> predictions,
                                            std::span<const double> targets,
                                            std::span<const PhaseLabel> predicted_labels,
                                            std::span<const PhaseLabel> target_labels,
                                            double window_s, double sample_rate) {
  const std::size_t n = predictions.size();
  if (targets.size() != n || predicted_labels.size() != n || target_labels.size() != n) {
    throw ContractError("windowed_metrics: length mismatch");
  }
  WindowedMetrics wm(window_s, sample_rate);
  std::vector<WindowedPoint> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(wm.push(predictions[i], targets[i], predicted_labels[i], target_labels[i]));
  }
  return out;
}

double mean_window_accuracy_after(std::span<const WindowedPoint> series, double after_s) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : series) {
    if (p.t >= after_s) {
      sum += p.acc_window;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

void save_windowed_csv(std::span<const WindowedPoint> series, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << "t,acc_window,acc_cum,rmse_window,rmse_cum\n";
  for (const auto& p : series) {
    f << csv::join({p.t, p.acc_window, p.acc_cumulative, p.rmse_window, p.rmse_cumulative}) << '\n';
  }
}

}  // namespace gpk
