#include "gpk/control_blend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gpk/csv.hpp"
#include "gpk/error.hpp"
#include "gpk/estimators.hpp"

namespace gpk {

void ExoParams::validate() const {
  for (double l : lengths) {
    if (!(l > 0.0)) throw ConfigError("link lengths must be > 0");
  }
  for (double m : masses) {
    if (!(m > 0.0)) throw ConfigError("link masses must be > 0");
  }
  if (!(gravity > 0.0)) throw ConfigError("gravity must be > 0");
}

std::vector<double> chain_gravity_torques(std::span<const ChainLink> links, double gravity) {
  const std::size_t n = links.size();
  std::vector<double> joint_x(n);
  std::vector<double> mid_x(n);
  double x = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    joint_x[i] = x;
    mid_x[i] = x + 0.5 * links[i].length * links[i].direction[0];
    x += links[i].length * links[i].direction[0];
  }
  // Suffix sums of mass and mass-weighted x give each joint's distal moment in O(n).
  std::vector<double> torque(n);
  double mass = 0.0;
  double moment = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    mass += links[i].mass;
    moment += links[i].mass * mid_x[i];
    torque[i] = gravity * (moment - mass * joint_x[i]);
  }
  return torque;
}

TorqueCommand gravity_torques(const ExoParams& params, const JointAngles& angles,
                              GroundedModel grounded) {
  const std::size_t st = grounded == GroundedModel::LGF ? 0 : 3;
  const std::size_t sw = grounded == GroundedModel::LGF ? 3 : 0;
  const double hip_st = angles[st];
  const double knee_st = angles[st + 1];
  const double ankle_st = angles[st + 2];
  const double hip_sw = angles[sw];
  const double knee_sw = angles[sw + 1];
  const double ankle_sw = angles[sw + 2];

  // Stance side climbs from the ankle: angles from the upward vertical, forward positive.
  const double shank_up = ankle_st;
  const double thigh_up = shank_up - knee_st;
  const double pelvis_up = thigh_up + hip_st;
  // Swing side hangs from the hip: angles from the downward vertical, forward positive.
  const double thigh_down = -pelvis_up + hip_sw;
  const double shank_down = thigh_down - knee_sw;
  const double foot_down = shank_down + ankle_sw;

  const auto up = [](double a) { return std::array<double, 2>{std::sin(a), std::cos(a)}; };
  const auto down = [](double a) { return std::array<double, 2>{std::sin(a), -std::cos(a)}; };
  const auto& len = params.lengths;
  const auto& m = params.masses;

  const std::array<ChainLink, 6> chain{{
      {up(shank_up), len[1], m[1]},
      {up(thigh_up), len[2], m[2]},
      {up(pelvis_up), 0.0, m[3]},
      {down(thigh_down), len[2], m[2]},
      {down(shank_down), len[1], m[1]},
      {down(foot_down), len[0], m[0]},
  }};
  const auto tau = chain_gravity_torques(chain, params.gravity);

  TorqueCommand out{};
  out[st + 2] = tau[0];  // stance ankle
  out[st + 1] = tau[1];  // stance knee
  out[st] = tau[2];      // stance hip
  out[sw] = tau[3];      // swing hip
  out[sw + 1] = tau[4];  // swing knee
  out[sw + 2] = tau[5];  // swing ankle
  return out;
}

BlendWeights phase_to_blend(double phi, bool* clamped) {
  const double c = std::clamp(phi, -1.0, 1.0);
  if (clamped) *clamped = c != phi;
  return {(1.0 - c) / 2.0, (1.0 + c) / 2.0};
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::FSM:
      return "fsm";
    case Strategy::SFSM:
      return "sfsm";
    case Strategy::Blend:
      return "blend";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "fsm" || name == "FSM") return Strategy::FSM;
  if (name == "sfsm" || name == "sFSM" || name == "SFSM") return Strategy::SFSM;
  if (name == "blend" || name == "Blend") return Strategy::Blend;
  throw ConfigError("unknown strategy '" + name + "' (expected fsm, sfsm or blend)");
}

namespace {

TorqueCommand mix(const BlendWeights& w, const TorqueCommand& lgf, const TorqueCommand& rgf) {
  TorqueCommand out{};
  for (std::size_t j = 0; j < kNumJoints; ++j) out[j] = w.w_lgf * lgf[j] + w.w_rgf * rgf[j];
  return out;
}

}  // namespace

ControllerOutput controller_step(const ControllerConfig& config, ControllerState& state, double phi,
                                 const JointAngles& angles, double dt) {
  if (!(dt > 0.0)) throw ContractError("dt must be > 0");
  ControllerOutput out;

  if (config.strategy == Strategy::Blend) {
    out.weights = phase_to_blend(phi);
    out.torque = mix(out.weights, gravity_torques(config.params, angles, GroundedModel::LGF),
                     gravity_torques(config.params, angles, GroundedModel::RGF));
    state.initialised = true;
    return out;
  }

  const PhaseLabel label = threshold_classify(phi, config.theta).label;
  if (label == PhaseLabel::Left) state.selected = GroundedModel::LGF;
  if (label == PhaseLabel::Right) state.selected = GroundedModel::RGF;
  const double target_rgf = state.selected == GroundedModel::RGF ? 1.0 : 0.0;

  if (config.strategy == Strategy::FSM) {
    state.filtered_rgf = target_rgf;
    state.initialised = true;
    out.weights = {1.0 - target_rgf, target_rgf};
    out.torque = gravity_torques(config.params, angles, state.selected);
    return out;
  }

  if (!state.initialised) {
    state.filtered_rgf = target_rgf;
  } else {
    const double alpha = config.tau > 0.0 ? 1.0 - std::exp(-dt / config.tau) : 1.0;
    state.filtered_rgf += alpha * (target_rgf - state.filtered_rgf);
  }
  state.initialised = true;
  out.weights = {1.0 - state.filtered_rgf, state.filtered_rgf};
  out.torque = mix(out.weights, gravity_torques(config.params, angles, GroundedModel::LGF),
                   gravity_torques(config.params, angles, GroundedModel::RGF));
  return out;
}

DiscontinuityReport discontinuity_metric(std::span<const TorqueCommand> trace) {
  if (trace.size() < 2) throw ContractError("discontinuity_metric needs >= 2 ticks");
  DiscontinuityReport r;
  double sum = 0.0;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    double jump = 0.0;
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      jump = std::max(jump, std::abs(trace[i][j] - trace[i - 1][j]));
    }
    r.max_jump = std::max(r.max_jump, jump);
    sum += jump;
  }
  r.mean_jump = sum / static_cast<double>(trace.size() - 1);
  return r;
}

void save_torque_csv(std::span<const TorqueTraceRow> rows, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << "t,tau_lh,tau_lk,tau_la,tau_rh,tau_rk,tau_ra,strategy,phi\n";
  for (const auto& r : rows) {
    f << csv::format_double(r.t);
    for (double v : r.torque) f << ',' << csv::format_double(v);
    f << ',' << to_string(r.strategy) << ',' << csv::format_double(r.phi) << '\n';
  }
}

}  // namespace gpk
