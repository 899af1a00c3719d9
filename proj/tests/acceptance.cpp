// Standalone acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "gpk/control_blend.hpp"
#include "gpk/estimators.hpp"
#include "gpk/gait_data.hpp"
#include "gpk/lm_training.hpp"
#include "gpk/metrics.hpp"
#include "gpk/online_loop.hpp"
#include "gpk/wire.hpp"

using namespace gpk;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

// Central differences of e = t - y, rows sample-major.
Eigen::MatrixXd fd_jacobian(const FeedforwardNet& net, const Eigen::MatrixXd& x, double h) {
  const auto p0 = net.parameters();
  const Eigen::Index n = x.rows();
  const Eigen::Index m = net.output_size();
  Eigen::MatrixXd j(n * m, p0.size());
  auto probe = net;
  for (Eigen::Index c = 0; c < p0.size(); ++c) {
    Eigen::VectorXd p = p0;
    p(c) += h;
    probe.set_parameters(p);
    const Eigen::MatrixXd up = probe.forward_batch(x);
    p(c) = p0(c) - h;
    probe.set_parameters(p);
    const Eigen::MatrixXd down = probe.forward_batch(x);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < m; ++k) j(i * m + k, c) = -(up(i, k) - down(i, k)) / (2.0 * h);
    }
  }
  return j;
}

Verdict jacobian_check() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  int nets = 0;
  double worst = 0.0;  // largest error relative to the allowed tolerance
  while (nets < 100) {
    const bool cls = nets % 3 == 0;
    std::vector<int> sizes{1 + static_cast<int>(rng() % 8)};
    const int hidden = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < hidden; ++i) sizes.push_back(1 + static_cast<int>(rng() % 10));
    sizes.push_back(cls ? 3 : 1 + static_cast<int>(rng() % 2));
    auto net = FeedforwardNet::random(sizes, Activation::Tanh, cls ? Activation::Softmax : Activation::Linear, rng());
    if (net.parameter_count() > 200) continue;
    Eigen::MatrixXd x(8, sizes.front());
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = u(rng);
    const auto ja = jacobian(net, x);
    const auto jf = fd_jacobian(net, x, 1e-6);
    for (Eigen::Index i = 0; i < ja.size(); ++i) {
      const double tol = std::max(1e-6, 1e-4 * std::abs(jf(i)));
      worst = std::max(worst, std::abs(ja(i) - jf(i)) / tol);
    }
    ++nets;
  }
  const double t = seconds_since(t0);
  return {worst <= 1.0 && t < 60.0, "100 nets, worst error/tolerance " + fmt(worst) + ", " + fmt(t) + " s"};
}

Verdict lm_sanity() {
  FeedforwardNet net({1, 1}, Activation::Tanh, Activation::Linear);
  Eigen::MatrixXd x(100, 1), y(100, 1);
  for (int i = 0; i < 100; ++i) {
    x(i, 0) = -1.0 + 0.02 * i;
    y(i, 0) = 2.0 * x(i, 0) + 1.0;
  }
  LMConfig cfg;
  cfg.max_epochs = 20;
  cfg.train_fraction = 1.0;
  cfg.validation_fraction = 0.0;
  const auto r = train_lm(net, x, y, cfg);
  const double sse = (y - r.net.forward_batch(x)).squaredNorm();

  // Monotone decrease of accepted steps, on the toy problem and on a gait fit.
  bool monotone = true;
  auto check_log = [&](const std::vector<LMLogRow>& log) {
    double last = log.front().train_sse;
    for (const auto& row : log) {
      if (row.epoch == 0 || !row.accepted) continue;
      monotone = monotone && row.train_sse < last;
      last = row.train_sse;
    }
  };
  check_log(r.log);
  const auto data = generate_gait(SpeedProfile::constant(3.0, 30.0), 4, 0.02);
  auto gait_net = make_regression_net(default_hidden_sizes(), 4);
  const auto gx = angle_matrix(data);
  gait_net.fit_input_scaling(gx);
  LMConfig gcfg;
  gcfg.max_epochs = 60;
  check_log(train_lm(gait_net, gx, phase_vector(data), gcfg).log);

  return {sse < 1e-12 && r.last_epoch <= 20 && monotone,
          "SSE " + fmt(sse) + " after " + std::to_string(r.last_epoch) + " epochs, accepted steps monotone: " +
              (monotone ? "yes" : "no")};
}

Verdict cv_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  int ok = 0;
  std::string detail;
  for (int seed = 1; seed <= 5; ++seed) {
    const auto data = generate_gait(SpeedProfile::calibration(), seed, 0.02);
    KFoldConfig cfg;
    const auto lin = kfold_evaluate(data, ModelKind::Linear, cfg);
    const auto fit = kfold_evaluate(data, ModelKind::NnFit, cfg);
    const auto cls = kfold_evaluate(data, ModelKind::NnClass, cfg);
    const bool pass = fit.mean_rmse < lin.mean_rmse && cls.mean_accuracy >= fit.mean_accuracy &&
                      fit.mean_accuracy >= lin.mean_accuracy - 1.0;
    ok += pass ? 1 : 0;
    detail += " s" + std::to_string(seed) + "[rmse " + fmt(lin.mean_rmse) + "/" + fmt(fit.mean_rmse) + " acc " +
              fmt(lin.mean_accuracy) + "/" + fmt(fit.mean_accuracy) + "/" + fmt(cls.mean_accuracy) + "]";
  }
  const double t = seconds_since(t0);
  return {ok >= 4 && t < 600.0, std::to_string(ok) + "/5 seeds (linear/nn_fit/nn_class)" + detail + ", " + fmt(t) + " s"};
}

Verdict monotonicity_ordering() {
  int ok = 0;
  std::string detail;
  for (int seed = 1; seed <= 5; ++seed) {
    const auto data = generate_gait(SpeedProfile::calibration(), seed, 0.02);
    const std::size_t cut = data.size() * 8 / 10;
    const auto train = data.slice(0, cut);
    const auto held = data.slice(cut, data.size());
    const auto lin = fit_linear(train);
    const auto net = train_network(train, ModelKind::NnFit, KFoldConfig{}).net;
    const Eigen::VectorXd yn = net.forward_batch(angle_matrix(held)).col(0);
    std::vector<double> target, pl, pn;
    for (std::size_t i = 0; i < held.size(); ++i) {
      target.push_back(phase_to_value(held.samples[i].phase));
      pl.push_back(lin.predict(held.samples[i].angles));
      pn.push_back(yn(static_cast<Eigen::Index>(i)));
    }
    const auto segs = quarter_cycle_segments(target);
    const double dl = mean_monotonicity_deviation(pl, segs);
    const double dn = mean_monotonicity_deviation(pn, segs);
    ok += dn < dl ? 1 : 0;
    detail += " s" + std::to_string(seed) + "[" + fmt(dn) + " vs " + fmt(dl) + "]";
  }
  return {ok >= 4, std::to_string(ok) + "/5 seeds (network vs linear)" + detail};
}

Verdict threshold_rule() {
  const double theta = 0.1;
  auto reference = [&](double y) {
    if (y > theta) return PhaseLabel::Right;
    if (y < -theta) return PhaseLabel::Left;
    return PhaseLabel::Double;
  };
  std::vector<double> grid;
  for (int i = 0; i < 10000 - 6; ++i) grid.push_back(-1.5 + 3.0 * i / (10000 - 7));
  for (double b : {theta, -theta}) {
    grid.push_back(b);
    grid.push_back(std::nextafter(b, 2.0));
    grid.push_back(std::nextafter(b, -2.0));
  }
  int mismatches = 0;
  for (double y : grid) mismatches += threshold_classify(y, theta).label == reference(y) ? 0 : 1;
  return {mismatches == 0, std::to_string(grid.size()) + " points, " + std::to_string(mismatches) + " mismatches"};
}

Verdict controller_smoothness() {
  // Phase estimate for Blend comes from the linear regressor fitted on a calibration walk;
  // FSM and sFSM switch on the ground-truth stance labels.
  const auto calibration = generate_gait(SpeedProfile::calibration(), 1, 0.02);
  const auto model = fit_linear(calibration);
  const auto episode = generate_gait(SpeedProfile::constant(3.5, 60.0), 11, 0.0);
  double max_unity = 0.0;
  std::vector<double> jumps;
  for (auto strategy : {Strategy::FSM, Strategy::SFSM, Strategy::Blend}) {
    ControllerConfig cfg;
    cfg.strategy = strategy;
    ControllerState state;
    std::vector<TorqueCommand> trace;
    for (const auto& s : episode.samples) {
      const double phi = strategy == Strategy::Blend ? model.predict(s.angles) : phase_to_value(s.phase);
      const auto out = controller_step(cfg, state, phi, s.angles, 0.01);
      if (strategy == Strategy::Blend) max_unity = std::max(max_unity, std::abs(out.weights.w_lgf + out.weights.w_rgf - 1.0));
      trace.push_back(out.torque);
    }
    jumps.push_back(discontinuity_metric(trace).max_jump);
  }
  const bool ordered = jumps[2] < jumps[1] && jumps[1] < jumps[0];
  return {ordered && max_unity < 1e-12, "max jump FSM " + fmt(jumps[0]) + ", sFSM " + fmt(jumps[1]) + ", Blend " +
                                            fmt(jumps[2]) + "; max |w_lgf + w_rgf - 1| " + fmt(max_unity)};
}

Verdict gravity_statics() {
  double vertical = 0.0;
  for (auto g : {GroundedModel::LGF, GroundedModel::RGF}) {
    for (double t : gravity_torques(ExoParams{}, JointAngles{}, g)) vertical = std::max(vertical, std::abs(t));
  }
  const ChainLink link{{1.0, 0.0}, 0.407, 4.1};
  const double tau = chain_gravity_torques(std::span(&link, 1), 9.81).at(0);
  const double expected = 4.1 * 9.81 * 0.407 / 2.0;
  const double rel = std::abs(tau - expected) / expected;
  return {vertical < 1e-12 && rel <= 1e-6,
          "vertical max |tau| " + fmt(vertical) + ", single link " + fmt(tau) + " N*m (rel err " + fmt(rel) + ")"};
}

wire::WireMessage random_message(std::mt19937_64& rng) {
  std::uniform_real_distribution<float> f(-4.0f, 4.0f);
  wire::WireMessage m;
  m.seq = static_cast<std::uint32_t>(rng());
  switch (rng() % 3) {
    case 0: {
      wire::SampleBatch b;
      b.samples.resize(rng() % 80);
      for (auto& s : b.samples) {
        for (auto& a : s.angles) a = f(rng);
        s.target = f(rng);
      }
      m.payload = std::move(b);
      break;
    }
    case 1: {
      const bool cls = rng() % 2 == 0;
      std::vector<int> sizes{6, 1 + static_cast<int>(rng() % 9), cls ? 3 : 1};
      m.payload = wire::Weights{FeedforwardNet::random(sizes, Activation::Tanh,
                                                       cls ? Activation::Softmax : Activation::Linear, rng())};
      break;
    }
    default:
      m.payload = wire::Ack{static_cast<std::uint32_t>(rng()),
                            rng() % 2 ? wire::MessageType::SampleBatch : wire::MessageType::Weights};
  }
  return m;
}

Verdict wire_protocol() {
  std::mt19937_64 rng(8);
  int roundtrip_failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto msg = random_message(rng);
    const auto bytes = wire::encode(msg);
    const auto back = wire::decode(bytes);
    if (!back.ok() || !(back.message() == msg) || wire::encode(back.message()) != bytes) ++roundtrip_failures;
  }
  std::size_t corruptions = 0, undetected = 0;
  for (int i = 0; i < 100; ++i) {
    const auto bytes = wire::encode(random_message(rng));
    for (std::size_t pos = 0; pos < bytes.size(); ++pos) {
      auto bad = bytes;
      bad[pos] ^= static_cast<std::uint8_t>(1 + rng() % 255);
      ++corruptions;
      const auto r = wire::decode(bad);
      if (r.ok() || r.error() != wire::DecodeError::BadCrc) ++undetected;
    }
  }
  const auto one = wire::encode({1, wire::SampleBatch{{wire::WireSample{}}}});
  const std::size_t payload = one.size() - wire::kHeaderSize - wire::kCrcSize;
  return {roundtrip_failures == 0 && undetected == 0 && payload == 30,
          "10000 round trips, " + std::to_string(roundtrip_failures) + " failures; " + std::to_string(corruptions) +
              " single-byte corruptions, " + std::to_string(undetected) + " undetected; one-sample payload " +
              std::to_string(payload) + " bytes"};
}

Verdict online_shape() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto stream = generate_gait(SpeedProfile::constant(3.5, 300.0), 1, 0.02);
  online::OnlineConfig cfg;
  const auto r = online::run_loopback(stream, cfg);
  const double t = seconds_since(t0);
  const bool pass = r.updates.size() >= 10 && r.updates.size() <= 15 && r.buffer_fill_at_first_training == 2000 &&
                    r.mean_window_accuracy_after >= 80.0 && t < 360.0;
  return {pass, std::to_string(r.updates.size()) + " updates, buffer " + std::to_string(r.buffer_fill_at_first_training) +
                    " at first training, post-10 s windowed accuracy " + fmt(r.mean_window_accuracy_after) + "%, " +
                    fmt(t) + " s wall"};
}

Verdict degraded_mode() {
  const auto stream = generate_gait(SpeedProfile::constant(3.5, 60.0), 2, 0.02);
  online::OnlineConfig cfg;
  const auto absent = online::run_control_udp(stream, cfg, "127.0.0.1:49301", "127.0.0.1:49302", 0.0);
  const bool completed = absent.trace.size() == stream.size() && absent.weights_applied == 0;

  online::LoopbackLink link;
  std::size_t truncated = 0;
  link.set_fault_to_control([&](std::vector<std::uint8_t>& d) {
    if (d.size() > 5 && d[5] == static_cast<std::uint8_t>(wire::MessageType::Weights)) {
      d.resize(d.size() / 2);
      ++truncated;
    }
    return true;
  });
  const auto faulty = online::run_loopback(stream, cfg, &link);
  bool unchanged = faulty.weights_applied == 0;
  for (const auto& row : faulty.trace) unchanged = unchanged && row.generation == 0;
  return {completed && unchanged && truncated > 0,
          "trainer absent: " + std::to_string(absent.trace.size()) + "/" + std::to_string(stream.size()) +
              " ticks; " + std::to_string(truncated) + " truncated WEIGHTS, generation " +
              (unchanged ? "unchanged" : "CHANGED")};
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

Verdict determinism(const fs::path& scratch) {
  auto cli = [](std::vector<std::string> args) {
    args.insert(args.begin(), "gpk");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  };
  const fs::path a = scratch / "repro_a", b = scratch / "repro_b";
  for (const auto& dir : {a, b}) {
    fs::remove_all(dir);
    const std::string o = dir.string();
    const std::string data = (dir / "generate_4" / "dataset.csv").string();
    const std::string model = (dir / "train_4" / "model.nnw").string();
    const int codes = cli({"generate", "--profile", "free", "--duration", "40", "--seed", "4", "--outdir", o}) +
                      cli({"eval", "--data", data, "--max-epochs", "20", "--seed", "4", "--outdir", o}) +
                      cli({"train", "--model", "nn_fit", "--max-epochs", "20", "--data", data, "--seed", "4", "--outdir", o}) +
                      cli({"simulate", "--model", model, "--duration", "10", "--seed", "4", "--outdir", o}) +
                      cli({"online", "--duration", "60", "--seed", "4", "--outdir", o});
    if (codes != 0) return {false, "a command exited nonzero"};
  }
  std::size_t compared = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
    ++compared;
    if (read_file(entry.path()) != read_file(b / fs::relative(entry.path(), a))) ++differing;
  }
  return {compared >= 10 && differing == 0,
          std::to_string(compared) + " CSV files compared, " + std::to_string(differing) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path scratch = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "gpk_acceptance";
  fs::create_directories(scratch);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"jacobian matches finite differences", jacobian_check},
      {"LM sanity on a linear target", lm_sanity},
      {"cross-validated estimator ordering", cv_ordering},
      {"network output more monotone than linear", monotonicity_ordering},
      {"threshold rule", threshold_rule},
      {"controller smoothness ordering", controller_smoothness},
      {"gravity statics", gravity_statics},
      {"wire protocol", wire_protocol},
      {"online run shape", online_shape},
      {"degraded mode", degraded_mode},
      {"determinism", [&] { return determinism(scratch); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << v.detail
              << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
