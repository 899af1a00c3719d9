#include "commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "gpk/control_blend.hpp"
#include "gpk/csv.hpp"
#include "gpk/error.hpp"
#include "gpk/lm_training.hpp"
#include "gpk/metrics.hpp"
#include "gpk/online_loop.hpp"
#include "gpk/wire.hpp"

namespace gpk::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

/// Output directory plus the manifest describing one command invocation.
class RunOutput {
 public:
  RunOutput(const CommonOptions& common, const std::string& command, json config)
      : dir_(common.outdir / (command + "_" + std::to_string(common.seed))) {
    fs::create_directories(dir_);
    manifest_["command"] = command;
    manifest_["seed"] = common.seed;
    manifest_["config"] = std::move(config);
    manifest_["outputs"] = json::array();
  }

  fs::path file(const std::string& name) {
    manifest_["outputs"].push_back(name);
    return dir_ / name;
  }

  json& results() { return manifest_["results"]; }

  /// Writes the manifest and checks every declared output exists.
  int finish(std::ostream& out) {
    std::ofstream f(dir_ / "manifest.json");
    f << manifest_.dump(2) << '\n';
    f.close();
    if (!f) throw Error("cannot write manifest in " + dir_.string());
    for (const auto& name : manifest_["outputs"]) {
      if (!fs::exists(dir_ / name.get<std::string>())) {
        throw Error("output not written: " + (dir_ / name.get<std::string>()).string());
      }
    }
    out << "outputs: " << dir_.string() << '\n';
    return 0;
  }

  [[nodiscard]] const fs::path& dir() const noexcept { return dir_; }

 private:
  fs::path dir_;
  json manifest_;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

GaitDataset load_or_generate(const DataOptions& opt, std::uint64_t seed, json& cfg) {
  if (!opt.data.empty()) {
    cfg["data"] = opt.data.string();
    return load_csv(opt.data);
  }
  cfg["data"] = "generated:calibration";
  cfg["noise_std"] = opt.noise_std;
  return generate_gait(SpeedProfile::calibration(), seed, opt.noise_std);
}

/// Phase estimate of either net kind: thresholded regression or argmax classifier.
PhaseEstimate estimate_any(const FeedforwardNet& net, std::span<const double> angles, double theta) {
  if (net.output_size() == 3) return classify(net, angles);
  return estimate_phase(net, angles, theta);
}

Predictions predict_dataset(const FeedforwardNet& net, const GaitDataset& data, double theta) {
  Predictions p;
  p.values.reserve(data.size());
  p.labels.reserve(data.size());
  for (const auto& s : data.samples) {
    const auto e = estimate_any(net, s.angles, theta);
    p.values.push_back(net.output_size() == 3 ? e.value : std::get<double>(e.raw));
    p.labels.push_back(e.label);
  }
  return p;
}

MetricReport score(const Predictions& p, const GaitDataset& data) {
  std::vector<double> targets;
  std::vector<PhaseLabel> labels;
  for (const auto& s : data.samples) {
    targets.push_back(phase_to_value(s.phase));
    labels.push_back(s.phase);
  }
  return evaluate(p.values, targets, p.labels, labels);
}

std::string resolve_addr(const std::string& given, bool control) {
  if (!given.empty()) return given;
  return control ? online::control_address_from_env() : online::trainer_address_from_env();
}

online::OnlineConfig online_config(const CommonOptions& common, const OnlineOptions& opt) {
  online::OnlineConfig cfg;
  cfg.control.controller.strategy = parse_strategy(opt.strategy);
  cfg.control.controller.theta = opt.theta;
  cfg.control.closed_loop = opt.closed_loop;
  cfg.control.theta = opt.theta;
  cfg.trainer.seq.learning_rate = opt.learning_rate;
  cfg.trainer.period = opt.period;
  cfg.trainer.hidden = parse_hidden(opt.hidden);
  cfg.trainer.seed = common.seed;
  cfg.trainer_enabled = !opt.no_trainer;
  cfg.metrics_window = opt.window;
  cfg.report_after = opt.report_after;
  cfg.trainer.validate();
  return cfg;
}

json online_json(const OnlineOptions& opt) {
  return json{{"mode", opt.mode},         {"duration", opt.duration},
              {"speed", opt.speed},       {"noise_std", opt.noise_std},
              {"period", opt.period},     {"learning_rate", opt.learning_rate},
              {"hidden", opt.hidden},     {"strategy", opt.strategy},
              {"closed_loop", opt.closed_loop}, {"no_trainer", opt.no_trainer},
              {"theta", opt.theta},       {"window", opt.window},
              {"report_after", opt.report_after}};
}

void report_online(const online::OnlineRunResult& r, RunOutput& run, std::ostream& out) {
  online::save_trace_csv(r.trace, run.file("trace.csv"));
  online::save_updates_csv(r.updates, run.file("updates.csv"));
  save_windowed_csv(r.metrics, run.file("accuracy.csv"));
  auto& res = run.results();
  res["samples"] = r.trace.size();
  res["weight_updates"] = r.updates.size();
  res["weights_applied"] = r.weights_applied;
  res["buffer_fill_at_first_training"] = r.buffer_fill_at_first_training;
  res["batches_sent"] = r.batches_sent;
  res["batches_acked"] = r.batches_acked;
  res["datagrams_dropped"] = r.control_dropped;
  res["mean_window_accuracy_after"] = r.mean_window_accuracy_after;
  res["degraded"] = r.batches_acked == 0;
  // The control role alone has no trainer-side update records.
  if (r.updates.empty()) {
    out << "weights applied: " << r.weights_applied << '\n';
  } else {
    out << "weight updates: " << r.updates.size() << " (applied " << r.weights_applied << ")\n";
  }
  out << "batches sent/acked: " << r.batches_sent << '/' << r.batches_acked << '\n'
      << "mean windowed accuracy after warm-up: " << fmt(r.mean_window_accuracy_after, 2) << "%\n";
}

GaitDataset online_stream(const CommonOptions& common, const OnlineOptions& opt) {
  return generate_gait(SpeedProfile::constant(opt.speed, opt.duration), common.seed, opt.noise_std);
}

bool given(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

/// Replaces `--config FILE` with the options it lists, placed right after the subcommand.
std::vector<std::string> expand_config(const CLI::App& app, std::vector<std::string> args) {
  auto it = std::find_if(args.begin(), args.end(),
                         [](const std::string& a) { return a == "--config" || a.rfind("--config=", 0) == 0; });
  if (it == args.end()) return args;
  std::string path;
  if (*it == "--config") {
    if (std::next(it) == args.end()) throw ConfigError("--config needs a file name");
    path = *std::next(it);
    it = args.erase(it, std::next(it, 2));
  } else {
    path = it->substr(9);
    it = args.erase(it);
  }
  const auto sub_it = std::find_if(args.begin(), args.end(), [](const std::string& a) { return a.empty() || a[0] != '-'; });
  if (sub_it == args.end()) throw ConfigError("--config needs a command");
  const CLI::App* sub = app.get_subcommand_no_throw(*sub_it);
  if (!sub) throw ConfigError("unknown command '" + *sub_it + "'");

  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_file(path);
  } catch (const CLI::FileError&) {
    throw ConfigError("cannot read config file " + path);
  }
  std::vector<std::string> extra;
  for (const auto& item : items) {
    if (!item.parents.empty() && item.parents != std::vector<std::string>{sub->get_name()}) continue;
    const std::string flag = "--" + item.name;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (!opt || flag == "--config") throw ConfigError("unknown key '" + item.name + "' in " + path);
    if (given(args, flag)) continue;
    if (opt->get_expected_min() == 0) {
      if (item.inputs.size() == 1 && (item.inputs[0] == "true" || item.inputs[0] == "1")) extra.push_back(flag);
      continue;
    }
    extra.push_back(flag);
    extra.insert(extra.end(), item.inputs.begin(), item.inputs.end());
  }
  const auto pos = std::find(args.begin(), args.end(), sub->get_name());
  args.insert(std::next(pos), extra.begin(), extra.end());
  return args;
}

}  // namespace

std::vector<int> parse_hidden(const std::string& text) {
  std::vector<int> sizes;
  for (const auto& field : csv::split(text, ',')) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size() || v <= 0) {
      throw ConfigError("hidden layer sizes must be positive integers, got '" + text + "'");
    }
    sizes.push_back(v);
  }
  if (sizes.empty()) throw ConfigError("at least one hidden layer is required");
  return sizes;
}

int cmd_generate(const CommonOptions& common, const GenerateOptions& opt, std::ostream& out) {
  SpeedProfile profile;
  if (opt.profile == "calibration") {
    profile = SpeedProfile::calibration();
  } else if (opt.profile == "constant") {
    profile = SpeedProfile::constant(opt.speed, opt.duration);
  } else if (opt.profile == "free") {
    profile = SpeedProfile::free_walk(common.seed, opt.duration);
  } else {
    throw ConfigError("unknown profile '" + opt.profile + "'");
  }
  profile.validate();
  if (!(opt.noise_std >= 0.0)) throw ConfigError("noise-std must be >= 0");

  const auto data = generate_gait(profile, common.seed, opt.noise_std, opt.rate);
  RunOutput run(common, "generate",
                {{"profile", opt.profile}, {"speed", opt.speed}, {"duration", opt.duration},
                 {"noise_std", opt.noise_std}, {"rate", opt.rate}});
  save_csv(data, run.file("dataset.csv"));

  const auto counts = count_labels(data);
  run.results() = {{"samples", data.size()},
                   {"left", counts.left},
                   {"double", counts.double_stance},
                   {"right", counts.right}};
  out << "samples: " << data.size() << " (" << data.sample_rate << " Hz)\n"
      << "labels: left " << counts.left << ", double " << counts.double_stance << ", right "
      << counts.right << '\n';
  return run.finish(out);
}

int cmd_eval(const CommonOptions& common, const EvalOptions& opt, std::ostream& out) {
  json cfg{{"k", opt.k}, {"theta", opt.theta}, {"hidden", opt.hidden},
           {"max_epochs", opt.max_epochs}, {"no_cv", opt.no_cv}};
  const auto data = load_or_generate(opt.data, common.seed, cfg);

  KFoldConfig kcfg;
  kcfg.k = opt.k;
  kcfg.theta = opt.theta;
  kcfg.hidden = parse_hidden(opt.hidden);
  kcfg.lm.max_epochs = opt.max_epochs;
  kcfg.lm.rng_seed = common.seed;
  kcfg.lm.validate();
  if (!opt.no_cv) (void)fold_ranges(data.size(), opt.k);  // rejects k < 2 or too few samples

  RunOutput run(common, "eval", std::move(cfg));
  std::ofstream table(run.file("table.csv"));
  table << "model,rmse,accuracy\n";
  std::ofstream folds;
  if (!opt.no_cv) {
    folds.open(run.file("folds.csv"));
    folds << "model,fold,begin,end,rmse,accuracy\n";
  }

  out << (opt.no_cv ? "whole-dataset fit (no cross-validation)\n" : std::to_string(opt.k) + "-fold cross-validation\n")
      << "model      RMSE     Accuracy[%]\n";
  for (auto kind : {ModelKind::Linear, ModelKind::NnFit, ModelKind::NnClass}) {
    double rmse_v = 0.0;
    double acc_v = 0.0;
    if (opt.no_cv) {
      const auto predictor = make_trainer(kind, kcfg)(data);
      const auto rep = score(predictor(data), data);
      rmse_v = rep.rmse;
      acc_v = rep.accuracy;
    } else {
      const auto rep = kfold_evaluate(data, kind, kcfg);
      rmse_v = rep.mean_rmse;
      acc_v = rep.mean_accuracy;
      for (std::size_t i = 0; i < rep.folds.size(); ++i) {
        const auto& f = rep.folds[i];
        folds << to_string(kind) << ',' << i << ',' << f.begin << ',' << f.end << ','
              << csv::format_double(f.rmse) << ',' << csv::format_double(f.accuracy) << '\n';
      }
      for (const auto& w : rep.warnings) std::cerr << "warning: " << to_string(kind) << ": " << w << '\n';
    }
    table << to_string(kind) << ',' << csv::format_double(rmse_v) << ',' << csv::format_double(acc_v) << '\n';
    run.results()[to_string(kind)] = {{"rmse", rmse_v}, {"accuracy", acc_v}};
    out << std::left << std::setw(10) << to_string(kind) << ' ' << fmt(rmse_v) << "   " << fmt(acc_v, 2) << '\n';
  }
  table.close();
  folds.close();
  if (!table || (folds.is_open() && !folds)) throw Error("failed writing eval tables");
  return run.finish(out);
}

int cmd_train(const CommonOptions& common, const TrainOptions& opt, std::ostream& out) {
  json cfg{{"model", opt.model}, {"theta", opt.theta}, {"hidden", opt.hidden}, {"max_epochs", opt.max_epochs}};
  const auto kind = parse_model_kind(opt.model);
  const auto data = load_or_generate(opt.data, common.seed, cfg);

  KFoldConfig kcfg;
  kcfg.theta = opt.theta;
  kcfg.hidden = parse_hidden(opt.hidden);
  kcfg.lm.max_epochs = opt.max_epochs;
  kcfg.lm.rng_seed = common.seed;
  kcfg.lm.validate();

  RunOutput run(common, "train", std::move(cfg));
  FeedforwardNet net;
  if (kind == ModelKind::Linear) {
    const auto lin = fit_linear(data);
    if (lin.diagnostics.rank_deficient) std::cerr << "warning: rank-deficient design matrix\n";
    net = to_network(lin);
  } else {
    auto result = train_network(data, kind, kcfg);
    save_training_log(result.log, run.file("training_log.csv"));
    run.results()["stop"] = to_string(result.stop);
    run.results()["best_epoch"] = result.best_epoch;
    out << "LM stop: " << to_string(result.stop) << " at epoch " << result.last_epoch
        << " (best " << result.best_epoch << ")\n";
    net = std::move(result.net);
  }
  wire::save_network(net, run.file("model.nnw"));

  const auto rep = score(predict_dataset(net, data, opt.theta), data);
  run.results()["train_rmse"] = rep.rmse;
  run.results()["train_accuracy"] = rep.accuracy;
  out << "training-set RMSE " << fmt(rep.rmse) << ", accuracy " << fmt(rep.accuracy, 2) << "%\n";
  return run.finish(out);
}

int cmd_simulate(const CommonOptions& common, const SimulateOptions& opt, std::ostream& out) {
  if (opt.phase_source != "truth" && opt.phase_source != "estimate") {
    throw ConfigError("phase-source must be 'truth' or 'estimate'");
  }
  if (!(opt.duration > 0.0)) throw ConfigError("duration must be > 0");
  if (!fs::exists(opt.model)) throw Error("model file not found: " + opt.model.string());
  const auto net = wire::load_network(opt.model);

  json cfg{{"model", opt.model.string()}, {"train_data", opt.train_data.string()},
           {"phase_source", opt.phase_source}, {"theta", opt.theta}, {"tau", opt.tau},
           {"duration", opt.duration}, {"noise_std", opt.noise_std}};
  RunOutput run(common, "simulate", std::move(cfg));

  struct Episode {
    std::string name;
    GaitDataset data;
  };
  std::vector<Episode> episodes;
  episodes.push_back({"1.0", generate_gait(SpeedProfile::constant(1.0, opt.duration), common.seed + 1, opt.noise_std)});
  episodes.push_back({"3.5", generate_gait(SpeedProfile::constant(3.5, opt.duration), common.seed + 2, opt.noise_std)});
  episodes.push_back({"free", generate_gait(SpeedProfile::free_walk(common.seed + 3, opt.duration), common.seed + 3, opt.noise_std)});

  std::ofstream table(run.file("table.csv"));
  table << "strategy,speed,rmse,accuracy,max_jump,mean_jump\n";
  out << "strategy  speed  RMSE     Accuracy[%]  max jump [Nm]\n";

  if (!opt.train_data.empty()) {
    const auto train = load_csv(opt.train_data);
    if (train.empty()) throw ContractError("training dataset is empty");
    const auto rep = score(predict_dataset(net, train, opt.theta), train);
    table << "training,training," << csv::format_double(rep.rmse) << ',' << csv::format_double(rep.accuracy)
          << ",,\n";
    run.results()["training"] = {{"rmse", rep.rmse}, {"accuracy", rep.accuracy}};
    out << "training  -      " << fmt(rep.rmse) << "   " << fmt(rep.accuracy, 2) << '\n';
  }

  for (const auto& ep : episodes) {
    if (ep.data.empty()) throw ContractError("episode '" + ep.name + "' has no samples");
    const auto pred = predict_dataset(net, ep.data, opt.theta);
    const auto rep = score(pred, ep.data);
    const double dt = 1.0 / ep.data.sample_rate;
    for (auto strategy : {Strategy::FSM, Strategy::SFSM, Strategy::Blend}) {
      ControllerConfig ccfg;
      ccfg.strategy = strategy;
      ccfg.theta = opt.theta;
      ccfg.tau = opt.tau;
      ControllerState state;
      std::vector<TorqueTraceRow> rows;
      std::vector<TorqueCommand> torques;
      rows.reserve(ep.data.size());
      for (std::size_t i = 0; i < ep.data.size(); ++i) {
        const auto& s = ep.data.samples[i];
        // Blend always follows the continuous estimate; the switching strategies gate on
        // the selected source.
        const bool truth = strategy != Strategy::Blend && opt.phase_source == "truth";
        const double phi = truth ? phase_to_value(s.phase) : pred.values[i];
        const auto o = controller_step(ccfg, state, phi, s.angles, dt);
        rows.push_back({s.t, o.torque, strategy, phi});
        torques.push_back(o.torque);
      }
      const auto disc = discontinuity_metric(torques);
      save_torque_csv(rows, run.file("torque_" + to_string(strategy) + "_" + ep.name + ".csv"));
      table << to_string(strategy) << ',' << ep.name << ',' << csv::format_double(rep.rmse) << ','
            << csv::format_double(rep.accuracy) << ',' << csv::format_double(disc.max_jump) << ','
            << csv::format_double(disc.mean_jump) << '\n';
      run.results()[to_string(strategy) + "@" + ep.name] = {
          {"rmse", rep.rmse}, {"accuracy", rep.accuracy}, {"max_jump", disc.max_jump}, {"mean_jump", disc.mean_jump}};
      out << std::left << std::setw(9) << to_string(strategy) << ' ' << std::setw(6) << ep.name << ' '
          << fmt(rep.rmse) << "   " << std::setw(12) << fmt(rep.accuracy, 2) << ' ' << fmt(disc.max_jump, 3) << '\n';
    }
  }
  table.close();
  if (!table) throw Error("failed writing simulate table");
  return run.finish(out);
}

int cmd_online(const CommonOptions& common, const OnlineOptions& opt, std::ostream& out) {
  if (opt.mode != "loopback" && opt.mode != "udp") throw ConfigError("mode must be 'loopback' or 'udp'");
  if (!(opt.duration > 0.0)) throw ConfigError("duration must be > 0");
  const auto cfg = online_config(common, opt);
  const auto stream = online_stream(common, opt);
  json jcfg = online_json(opt);

  online::OnlineRunResult result;
  if (opt.mode == "loopback") {
    result = online::run_loopback(stream, cfg);
  } else {
    const auto ctrl = resolve_addr(opt.ctrl_addr, true);
    const auto train = resolve_addr(opt.train_addr, false);
    jcfg["ctrl_addr"] = ctrl;
    jcfg["train_addr"] = train;
    std::atomic<bool> stop{false};
    std::thread trainer;
    std::exception_ptr trainer_error;
    if (!opt.no_trainer) {
      trainer = std::thread([&] {
        try {
          online::TrainerRunOptions ropt;
          ropt.stop = &stop;
          ropt.idle_timeout_s = 30.0;
          (void)online::run_trainer_udp(cfg.trainer, train, ctrl, ropt);
        } catch (...) {
          trainer_error = std::current_exception();
        }
      });
      // Give the trainer time to bind before samples flow.
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    try {
      result = online::run_control_udp(stream, cfg, ctrl, train, opt.realtime_factor);
    } catch (...) {
      stop = true;
      if (trainer.joinable()) trainer.join();
      throw;
    }
    stop = true;
    if (trainer.joinable()) trainer.join();
    if (trainer_error) std::rethrow_exception(trainer_error);
    if (result.batches_acked == 0) std::cerr << "warning: no trainer reachable, ran in degraded mode\n";
  }
  RunOutput run(common, "online", std::move(jcfg));
  report_online(result, run, out);
  return run.finish(out);
}

int cmd_control(const CommonOptions& common, const OnlineOptions& opt, std::ostream& out) {
  if (!(opt.duration > 0.0)) throw ConfigError("duration must be > 0");
  auto cfg = online_config(common, opt);
  const auto ctrl = resolve_addr(opt.ctrl_addr, true);
  const auto train = resolve_addr(opt.train_addr, false);
  const auto stream = online_stream(common, opt);
  const auto result = online::run_control_udp(stream, cfg, ctrl, train, opt.realtime_factor);
  if (result.batches_acked == 0) std::cerr << "warning: no trainer reachable, ran in degraded mode\n";
  json jcfg = online_json(opt);
  jcfg["ctrl_addr"] = ctrl;
  jcfg["train_addr"] = train;
  RunOutput run(common, "control", std::move(jcfg));
  report_online(result, run, out);
  return run.finish(out);
}

int cmd_trainer(const CommonOptions& common, const TrainerOptions& opt, std::ostream& out) {
  online::TrainerConfig cfg;
  cfg.seq.learning_rate = opt.learning_rate;
  cfg.period = opt.period;
  cfg.hidden = parse_hidden(opt.hidden);
  cfg.seed = common.seed;
  cfg.validate();
  const auto ctrl = resolve_addr(opt.ctrl_addr, true);
  const auto train = resolve_addr(opt.train_addr, false);
  online::TrainerRunOptions ropt;
  ropt.idle_timeout_s = opt.idle_timeout;
  ropt.max_wall_s = opt.max_wall;
  online::TrainerStats stats;
  const auto updates = online::run_trainer_udp(cfg, train, ctrl, ropt, &stats);

  RunOutput run(common, "trainer",
                {{"period", opt.period}, {"learning_rate", opt.learning_rate}, {"hidden", opt.hidden},
                 {"ctrl_addr", ctrl}, {"train_addr", train}});
  online::save_updates_csv(updates, run.file("updates.csv"));
  run.results() = {{"samples_received", stats.samples_received}, {"trainings", stats.trainings},
                   {"postponed", stats.postponed}, {"datagrams_dropped", stats.datagrams_dropped}};
  out << "samples received: " << stats.samples_received << ", weight updates: " << updates.size() << '\n';
  return run.finish(out);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gait phase estimation and exoskeleton assistance toolkit", "gpk"};
  app.require_subcommand(1);

  // Every command takes the shared options and its own flat key=value config file.
  CommonOptions common;
  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Random seed")->capture_default_str();
    sub->add_option("--outdir", common.outdir, "Output root directory")->capture_default_str();
    // Read before parsing by `expand_config`; declared here for the help text.
    sub->add_option("--config", "key=value configuration file (command-line flags win)");
  };

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "Generate a synthetic gait dataset (CSV)");
  add_common(g);
  g->add_option("--profile", gen.profile, "calibration | constant | free")
      ->check(CLI::IsMember({"calibration", "constant", "free"}))
      ->capture_default_str();
  g->add_option("--speed", gen.speed, "Treadmill speed [km/h] (constant profile)")->capture_default_str();
  g->add_option("--duration", gen.duration, "Duration [s] (constant/free profiles)")->capture_default_str();
  g->add_option("--noise-std", gen.noise_std, "Joint angle noise std [rad]")->capture_default_str();
  g->add_option("--rate", gen.rate, "Sample rate [Hz]")->capture_default_str();

  auto add_data = [](CLI::App* sub, DataOptions& d) {
    sub->add_option("--data", d.data, "Dataset CSV (default: generated calibration walk)")->check(CLI::ExistingFile);
    sub->add_option("--noise-std", d.noise_std, "Noise of the generated dataset [rad]")->capture_default_str();
  };

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Cross-validate linear, nn_fit and nn_class estimators");
  add_common(e);
  add_data(e, ev.data);
  e->add_option("--k", ev.k, "Number of folds")->check(CLI::Range(2, 1000))->capture_default_str();
  e->add_option("--theta", ev.theta, "Threshold for the regression rule")->check(CLI::PositiveNumber)->capture_default_str();
  e->add_option("--hidden", ev.hidden, "Hidden layer sizes")->capture_default_str();
  e->add_option("--max-epochs", ev.max_epochs, "LM epoch limit")->check(CLI::PositiveNumber)->capture_default_str();
  e->add_flag("--no-cv", ev.no_cv, "Fit and score on the whole dataset");

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train one estimator and save it as a .nnw model");
  add_common(t);
  add_data(t, tr.data);
  t->add_option("--model", tr.model, "linear | nn_fit | nn_class")
      ->check(CLI::IsMember({"linear", "nn_fit", "nn_class"}))
      ->capture_default_str();
  t->add_option("--theta", tr.theta, "Threshold for the regression rule")->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--hidden", tr.hidden, "Hidden layer sizes")->capture_default_str();
  t->add_option("--max-epochs", tr.max_epochs, "LM epoch limit")->check(CLI::PositiveNumber)->capture_default_str();

  SimulateOptions sim;
  auto* s = app.add_subcommand("simulate", "Replay test walks through FSM, sFSM and Blend");
  add_common(s);
  s->add_option("--model", sim.model, "Trained .nnw model")->required();
  s->add_option("--train-data", sim.train_data, "Training CSV for the training-data row")->check(CLI::ExistingFile);
  s->add_option("--phase-source", sim.phase_source, "What FSM/sFSM gate on: truth | estimate")
      ->check(CLI::IsMember({"truth", "estimate"}))
      ->capture_default_str();
  s->add_option("--theta", sim.theta, "Threshold for the regression rule")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--tau", sim.tau, "sFSM time constant [s]")->check(CLI::NonNegativeNumber)->capture_default_str();
  s->add_option("--duration", sim.duration, "Duration of each test walk [s]")->capture_default_str();
  s->add_option("--noise-std", sim.noise_std, "Joint angle noise std [rad]")->capture_default_str();

  auto add_online = [](CLI::App* sub, OnlineOptions& o) {
    sub->add_option("--duration", o.duration, "Walk duration [s]")->capture_default_str();
    sub->add_option("--speed", o.speed, "Treadmill speed [km/h]")->capture_default_str();
    sub->add_option("--noise-std", o.noise_std, "Joint angle noise std [rad]")->capture_default_str();
    sub->add_option("--period", o.period, "Training period [s]")->capture_default_str();
    sub->add_option("--lr", o.learning_rate, "Sequential learning rate")->capture_default_str();
    sub->add_option("--hidden", o.hidden, "Hidden layer sizes")->capture_default_str();
    sub->add_option("--strategy", o.strategy, "fsm | sfsm | blend")
        ->check(CLI::IsMember({"fsm", "sfsm", "blend"}))
        ->capture_default_str();
    sub->add_flag("--closed-loop", o.closed_loop, "Drive Blend with the estimate (default: shadow mode)");
    sub->add_option("--theta", o.theta, "Threshold for the regression rule")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--window", o.window, "Metric window [s]")->capture_default_str();
    sub->add_option("--report-after", o.report_after, "Warm-up excluded from the accuracy summary [s]")
        ->capture_default_str();
    sub->add_option("--ctrl-addr", o.ctrl_addr, "Control endpoint host:port (env GPK_CTRL_ADDR)");
    sub->add_option("--train-addr", o.train_addr, "Trainer endpoint host:port (env GPK_TRAIN_ADDR)");
    sub->add_option("--realtime-factor", o.realtime_factor, "Pace ticks at this multiple of real time (0: free-running)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
  };

  OnlineOptions onl;
  auto* o = app.add_subcommand("online", "Online training run (loopback or two roles over UDP)");
  add_common(o);
  o->add_option("--mode", onl.mode, "loopback | udp")->check(CLI::IsMember({"loopback", "udp"}))->capture_default_str();
  o->add_flag("--no-trainer", onl.no_trainer, "Run the control role alone (degraded mode)");
  add_online(o, onl);

  OnlineOptions ctl;
  auto* c = app.add_subcommand("control", "Control role: stream samples to a trainer over UDP");
  add_common(c);
  add_online(c, ctl);

  TrainerOptions trn;
  auto* tp = app.add_subcommand("trainer", "Trainer role: retrain periodically and send weights over UDP");
  add_common(tp);
  tp->add_option("--period", trn.period, "Training period [s]")->capture_default_str();
  tp->add_option("--lr", trn.learning_rate, "Sequential learning rate")->capture_default_str();
  tp->add_option("--hidden", trn.hidden, "Hidden layer sizes")->capture_default_str();
  tp->add_option("--ctrl-addr", trn.ctrl_addr, "Control endpoint host:port (env GPK_CTRL_ADDR)");
  tp->add_option("--train-addr", trn.train_addr, "Trainer endpoint host:port (env GPK_TRAIN_ADDR)");
  tp->add_option("--idle-timeout", trn.idle_timeout, "Stop after this long without datagrams [s]")->capture_default_str();
  tp->add_option("--max-wall", trn.max_wall, "Hard wall-clock limit [s]")->capture_default_str();

  try {
    auto args = expand_config(app, std::vector<std::string>(argv + 1, argv + argc));
    std::reverse(args.begin(), args.end());  // CLI11 consumes the vector from the back
    app.parse(args);
  } catch (const CLI::ParseError& ex) {
    return app.exit(ex, out, err);
  } catch (const ConfigError& ex) {
    err << "error: " << ex.what() << '\n';
    return 2;
  }

  try {
    if (g->parsed()) return cmd_generate(common, gen, out);
    if (e->parsed()) return cmd_eval(common, ev, out);
    if (t->parsed()) return cmd_train(common, tr, out);
    if (s->parsed()) return cmd_simulate(common, sim, out);
    if (o->parsed()) return cmd_online(common, onl, out);
    if (c->parsed()) return cmd_control(common, ctl, out);
    if (tp->parsed()) return cmd_trainer(common, trn, out);
  } catch (const ConfigError& ex) {
    const auto parsed = app.get_subcommands();
    err << "error: " << ex.what() << "\n\n" << (parsed.empty() ? app.help() : parsed.front()->help());
    return 2;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace gpk::cli
