#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gpk/control_blend.hpp"
#include "gpk/error.hpp"
#include "test_support.hpp"

using namespace gpk;

namespace {

double max_abs(const TorqueCommand& t) {
  double m = 0.0;
  for (double v : t) m = std::max(m, std::abs(v));
  return m;
}

double jump(const TorqueCommand& a, const TorqueCommand& b) {
  double m = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) m = std::max(m, std::abs(a[j] - b[j]));
  return m;
}

const JointAngles kStride{0.35, 0.25, -0.05, -0.10, 0.60, 0.15};

}  // namespace

TEST_CASE("vertical chain produces zero gravity torque") {
  const JointAngles zero{};
  for (auto g : {GroundedModel::LGF, GroundedModel::RGF}) {
    CHECK(max_abs(gravity_torques(ExoParams{}, zero, g)) < 1e-12);
  }
}

TEST_CASE("single horizontal link: m g a / 2") {
  const ChainLink link{{1.0, 0.0}, 0.407, 4.1};
  const auto t = chain_gravity_torques(std::span(&link, 1), 9.81);
  REQUIRE(t.size() == 1);
  const double expected = 4.1 * 9.81 * 0.407 / 2.0;
  CHECK(std::abs(t[0] - expected) <= 1e-6 * expected);
  CHECK(t[0] == doctest::Approx(8.186).epsilon(1e-3));
}

TEST_CASE("two-link chain against hand statics") {
  // Upper link horizontal, lower link vertical: root carries both masses.
  const std::array<ChainLink, 2> links{ChainLink{{1.0, 0.0}, 1.0, 2.0}, ChainLink{{0.0, -1.0}, 0.5, 3.0}};
  const auto t = chain_gravity_torques(links, 10.0);
  CHECK(t[0] == doctest::Approx(10.0 * (2.0 * 0.5 + 3.0 * 1.0)));
  CHECK(t[1] == doctest::Approx(0.0));
}

TEST_CASE("mirrored configuration swaps the torque blocks") {
  const JointAngles mirrored{kStride[3], kStride[4], kStride[5], kStride[0], kStride[1], kStride[2]};
  const auto l = gravity_torques(ExoParams{}, kStride, GroundedModel::LGF);
  const auto r = gravity_torques(ExoParams{}, mirrored, GroundedModel::RGF);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(l[j] == doctest::Approx(r[j + 3]).epsilon(1e-12));
    CHECK(l[j + 3] == doctest::Approx(r[j]).epsilon(1e-12));
  }
}

TEST_CASE("blend weights examples and partition of unity") {
  auto w = phase_to_blend(-1.0);
  CHECK(w.w_lgf == 1.0);
  CHECK(w.w_rgf == 0.0);
  w = phase_to_blend(0.0);
  CHECK(w.w_lgf == 0.5);
  CHECK(w.w_rgf == 0.5);
  w = phase_to_blend(1.0);
  CHECK(w.w_lgf == 0.0);
  CHECK(w.w_rgf == 1.0);
  bool clamped = false;
  w = phase_to_blend(1.7, &clamped);
  CHECK(clamped);
  CHECK(w.w_rgf == 1.0);
  for (int i = -150; i <= 150; ++i) {
    const auto b = phase_to_blend(i * 0.01);
    CHECK(std::abs(b.w_lgf + b.w_rgf - 1.0) < 1e-12);
    CHECK(b.w_lgf >= 0.0);
    CHECK(b.w_rgf >= 0.0);
  }
}

TEST_CASE("blend pinned at -1 equals FSM locked on LGF") {
  ControllerConfig blend;
  blend.strategy = Strategy::Blend;
  ControllerConfig fsm;
  fsm.strategy = Strategy::FSM;
  ControllerState sb, sf;
  for (int i = 0; i < 50; ++i) {
    JointAngles a = kStride;
    a[0] += 0.01 * i;
    const auto tb = controller_step(blend, sb, -1.0, a, 0.01).torque;
    const auto tf = controller_step(fsm, sf, -1.0, a, 0.01).torque;
    CHECK(jump(tb, tf) < 1e-12);
  }
}

TEST_CASE("blend torque is the weighted sum of both model outputs") {
  ControllerConfig cfg;
  ControllerState st;
  for (double phi : {-0.8, -0.2, 0.0, 0.35, 0.9}) {
    const auto o = controller_step(cfg, st, phi, kStride, 0.01);
    const auto l = gravity_torques(cfg.params, kStride, GroundedModel::LGF);
    const auto r = gravity_torques(cfg.params, kStride, GroundedModel::RGF);
    for (std::size_t j = 0; j < 6; ++j) CHECK(o.torque[j] == o.weights.w_lgf * l[j] + o.weights.w_rgf * r[j]);
  }
}

TEST_CASE("FSM holds its model through double stance") {
  ControllerConfig cfg;
  cfg.strategy = Strategy::FSM;
  ControllerState st;
  (void)controller_step(cfg, st, 1.0, kStride, 0.01);
  CHECK(st.selected == GroundedModel::RGF);
  (void)controller_step(cfg, st, 0.0, kStride, 0.01);
  CHECK(st.selected == GroundedModel::RGF);
  (void)controller_step(cfg, st, -1.0, kStride, 0.01);
  CHECK(st.selected == GroundedModel::LGF);
}

TEST_CASE("sFSM bounds the per-tick change by the filter gain") {
  const double dt = 0.01;
  ControllerConfig f;
  f.strategy = Strategy::FSM;
  ControllerConfig s;
  s.strategy = Strategy::SFSM;
  ControllerState sf, ss;
  (void)controller_step(f, sf, -1.0, kStride, dt);
  (void)controller_step(s, ss, -1.0, kStride, dt);
  const auto before = controller_step(f, sf, -1.0, kStride, dt).torque;
  const auto after = controller_step(f, sf, 1.0, kStride, dt).torque;
  const double delta = jump(before, after);
  REQUIRE(delta > 0.0);
  auto prev = controller_step(s, ss, -1.0, kStride, dt).torque;
  const double gain = 1.0 - std::exp(-dt / s.tau);
  for (int i = 0; i < 200; ++i) {
    const auto now = controller_step(s, ss, 1.0, kStride, dt).torque;
    CHECK(jump(prev, now) <= delta * gain + 1e-9);
    prev = now;
  }
}

TEST_CASE("sFSM with tau 0 reproduces FSM") {
  ControllerConfig f;
  f.strategy = Strategy::FSM;
  ControllerConfig s;
  s.strategy = Strategy::SFSM;
  s.tau = 0.0;
  ControllerState sf, ss;
  const auto data = generate_gait(SpeedProfile::constant(3.5, 5.0), 1, 0.0);
  for (const auto& smp : data.samples) {
    const double phi = phase_to_value(smp.phase);
    CHECK(jump(controller_step(f, sf, phi, smp.angles, 0.01).torque,
               controller_step(s, ss, phi, smp.angles, 0.01).torque) < 1e-12);
  }
}

TEST_CASE("controller is deterministic and rejects non-positive dt") {
  ControllerConfig cfg;
  cfg.strategy = Strategy::SFSM;
  ControllerState a, b;
  for (double phi : {-1.0, 0.0, 1.0, 1.0, 0.0}) {
    CHECK(controller_step(cfg, a, phi, kStride, 0.01).torque == controller_step(cfg, b, phi, kStride, 0.01).torque);
  }
  CHECK_THROWS((void)controller_step(cfg, a, 0.0, kStride, 0.0));
}

TEST_CASE("discontinuity metric examples") {
  const std::vector<TorqueCommand> flat(5, TorqueCommand{1, 2, 3, 4, 5, 6});
  auto d = discontinuity_metric(flat);
  CHECK(d.max_jump == 0.0);
  CHECK(d.mean_jump == 0.0);
  std::vector<TorqueCommand> step(3, TorqueCommand{});
  step[2][1] = 2.0;
  d = discontinuity_metric(step);
  CHECK(d.max_jump == 2.0);
  CHECK(d.mean_jump == 1.0);
  CHECK_THROWS_AS((void)discontinuity_metric(std::vector<TorqueCommand>(1)), ContractError);
}

TEST_CASE("invalid exoskeleton parameters are rejected") {
  ExoParams p;
  p.masses[2] = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("strategy names round-trip") {
  for (auto s : {Strategy::FSM, Strategy::SFSM, Strategy::Blend}) CHECK(parse_strategy(to_string(s)) == s);
  CHECK_THROWS_AS((void)parse_strategy("pid"), ConfigError);
}

TEST_CASE("torque csv has the documented header") {
  const auto dir = test::scratch_dir("torque_csv");
  std::vector<TorqueTraceRow> rows{{0.0, {}, Strategy::FSM, 1.0}};
  save_torque_csv(rows, dir / "t.csv");
  CHECK(test::read_text(dir / "t.csv").rfind("t,tau_lh,tau_lk,tau_la,tau_rh,tau_rk,tau_ra,strategy,phi\n", 0) == 0);
}
