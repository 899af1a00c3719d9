#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gpk/gait_data.hpp"

namespace gpk {

/// Link lengths (m) and masses (kg) of the exoskeleton; a1..a4 / m1..m4 are the foot
/// (ankle height), shank, thigh and pelvis links.
struct ExoParams {
  std::array<double, 4> lengths{0.095, 0.402, 0.407, 0.474};
  std::array<double, 4> masses{0.2, 2.9, 4.1, 1.2};
  double gravity = 9.81;

  void validate() const;
};

using TorqueCommand = std::array<double, kNumJoints>;

enum class GroundedModel { LGF, RGF };

/// One link of a planar serial chain; `direction` is the unit vector from the proximal
/// joint to the distal end in the sagittal (x forward, y up) plane.
struct ChainLink {
  std::array<double, 2> direction{0.0, 1.0};
  double length = 0.0;
  double mass = 0.0;
};

/// Static gravity torque at the proximal joint of every link: g times the summed
/// horizontal moment arm of all distal link masses (point masses at link midpoints).
[[nodiscard]] std::vector<double> chain_gravity_torques(std::span<const ChainLink> links,
                                                        double gravity);

/// Gravity compensation torques of the chain rooted at the grounded ankle. The pelvis link
/// runs laterally, so it has no sagittal extent and its mass sits at the hip joints.
[[nodiscard]] TorqueCommand gravity_torques(const ExoParams& params, const JointAngles& angles,
                                            GroundedModel grounded);

struct BlendWeights {
  double w_lgf = 0.5;
  double w_rgf = 0.5;
};

/// (1 - phi) / 2 and (1 + phi) / 2 after clamping phi to [-1, 1]; `clamped` reports whether
/// the input was outside.
[[nodiscard]] BlendWeights phase_to_blend(double phi, bool* clamped = nullptr);

enum class Strategy { FSM, SFSM, Blend };

[[nodiscard]] std::string to_string(Strategy s);
[[nodiscard]] Strategy parse_strategy(const std::string& name);

struct ControllerConfig {
  Strategy strategy = Strategy::Blend;
  double theta = 0.1;  // switching threshold applied to the phase for FSM / sFSM
  double tau = 0.2;    // sFSM time constant, seconds; 0 reduces to FSM
  ExoParams params{};
};

struct ControllerState {
  GroundedModel selected = GroundedModel::LGF;
  double filtered_rgf = 0.0;  // sFSM low-pass state, weight of the RGF model
  bool initialised = false;
};

struct ControllerOutput {
  TorqueCommand torque{};
  BlendWeights weights{};
};

/// One control tick. FSM selects LGF/RGF from the thresholded phase and holds the previous
/// model through double stance; sFSM low-pass filters that selection with time constant
/// tau; Blend mixes both models with `phase_to_blend(phi)`.
[[nodiscard]] ControllerOutput controller_step(const ControllerConfig& config, ControllerState& state,
                                               double phi, const JointAngles& angles, double dt);

struct DiscontinuityReport {
  double max_jump = 0.0;
  double mean_jump = 0.0;
};

/// Max and mean over ticks of the infinity-norm torque change between consecutive ticks.
[[nodiscard]] DiscontinuityReport discontinuity_metric(std::span<const TorqueCommand> trace);

struct TorqueTraceRow {
  double t = 0.0;
  TorqueCommand torque{};
  Strategy strategy = Strategy::Blend;
  double phi = 0.0;
};

/// CSV: t, six torques, strategy tag, phi.
void save_torque_csv(std::span<const TorqueTraceRow> rows, const std::filesystem::path& path);

}  // namespace gpk
