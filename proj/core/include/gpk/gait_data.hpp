#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <vector>

#include "gpk/phase.hpp"

namespace gpk {

inline constexpr std::size_t kNumJoints = 6;

/// Joint order used throughout: left hip, knee, ankle, then right hip, knee, ankle.
enum class Joint : std::size_t {
  LeftHip = 0,
  LeftKnee = 1,
  LeftAnkle = 2,
  RightHip = 3,
  RightKnee = 4,
  RightAnkle = 5
};

using JointAngles = std::array<double, kNumJoints>;

struct JointRange {
  double min;
  double max;
};

/// Sagittal ranges of motion of the exoskeleton, radians, indexed by `Joint`.
[[nodiscard]] std::array<JointRange, kNumJoints> joint_rom() noexcept;

[[nodiscard]] bool within_rom(const JointAngles& angles, double slack_fraction = 0.0) noexcept;

struct GaitSample {
  double t = 0.0;  // seconds
  JointAngles angles{};
  PhaseLabel phase = PhaseLabel::Double;

  friend bool operator==(const GaitSample&, const GaitSample&) = default;
};

struct GaitDataset {
  std::vector<GaitSample> samples;
  double sample_rate = 100.0;

  [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }
  [[nodiscard]] bool empty() const noexcept { return samples.empty(); }

  /// Contiguous sub-range [begin, end), timestamps kept as recorded.
  [[nodiscard]] GaitDataset slice(std::size_t begin, std::size_t end) const;

  friend bool operator==(const GaitDataset&, const GaitDataset&) = default;
};

struct SpeedSegment {
  double speed_kmh;
  double duration_s;
};

/// Treadmill speed schedule. Segment i > 0 opens with a linear ramp from the previous
/// speed that lasts `transition_duration` seconds (clipped to the segment length).
struct SpeedProfile {
  std::vector<SpeedSegment> segments;
  double transition_duration = 2.0;

  /// 1, 2, 3, 3.5, 3, 2, 1 km/h, 30 s each.
  [[nodiscard]] static SpeedProfile calibration();
  [[nodiscard]] static SpeedProfile constant(double speed_kmh, double duration_s);
  /// Overground walking: roughly one-cycle segments jittered +-15 % around 2.5 km/h.
  [[nodiscard]] static SpeedProfile free_walk(std::uint64_t seed, double duration_s = 10.0);

  [[nodiscard]] double total_duration() const noexcept;
  /// Instantaneous speed including transition ramps.
  [[nodiscard]] double speed_at(double t) const noexcept;

  /// Throws ConfigError when the profile is empty or holds negative speeds or
  /// non-positive durations.
  void validate() const;
};

/// Gait template parameters as functions of treadmill speed.
namespace gait_model {
/// Stride (full gait cycle) frequency in Hz; 0 when standing.
[[nodiscard]] double cycle_frequency(double speed_kmh) noexcept;
/// Fraction of the cycle spent in double stance.
[[nodiscard]] double double_stance_fraction(double speed_kmh) noexcept;
/// Scale of the oscillating part of the joint waveforms; 0 when standing.
[[nodiscard]] double amplitude_scale(double speed_kmh) noexcept;
/// Noise-free joint angles of one leg (hip, knee, ankle) at leg-local cycle position
/// `s` in [0, 1), with heel strike at s = 0.
[[nodiscard]] std::array<double, 3> leg_angles(double s, double amplitude) noexcept;
/// Contact-schedule label at cycle position `u` in [0, 1) (left heel strike at u = 0).
[[nodiscard]] PhaseLabel label_at(double u, double double_fraction) noexcept;
}  // namespace gait_model

/// Deterministic synthetic walking recording sampled at `sample_rate`. Additive Gaussian
/// noise of `noise_std` radians is applied to the angles only.
[[nodiscard]] GaitDataset generate_gait(const SpeedProfile& profile, std::uint64_t seed,
                                        double noise_std, double sample_rate = 100.0);

/// CSV with header `t,lh,lk,la,rh,rk,ra,phase`; phase written as -1, 0 or 1.
void save_csv(const GaitDataset& dataset, const std::filesystem::path& path);
[[nodiscard]] GaitDataset load_csv(const std::filesystem::path& path);

struct LabelCounts {
  std::size_t left = 0;
  std::size_t double_stance = 0;
  std::size_t right = 0;
};

[[nodiscard]] LabelCounts count_labels(const GaitDataset& dataset) noexcept;

}  // namespace gpk
