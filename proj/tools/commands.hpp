#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace gpk::cli {

struct CommonOptions {
  std::uint64_t seed = 1;
  std::filesystem::path outdir = "out";
  bool quiet = false;
};

struct GenerateOptions {
  std::string profile = "calibration";  // calibration | constant | free
  double speed = 3.5;                   // km/h, constant profile
  double duration = 60.0;               // s, constant and free profiles
  double noise_std = 0.02;
  double rate = 100.0;
};

/// Dataset source shared by eval/train: a CSV file, or a generated calibration walk.
struct DataOptions {
  std::filesystem::path data;
  double noise_std = 0.02;
};

struct EvalOptions {
  DataOptions data;
  int k = 5;
  double theta = 0.1;
  std::string hidden = "8,6,3";
  int max_epochs = 1000;
  bool no_cv = false;
};

struct TrainOptions {
  DataOptions data;
  std::string model = "nn_fit";
  double theta = 0.1;
  std::string hidden = "8,6,3";
  int max_epochs = 1000;
};

struct SimulateOptions {
  std::filesystem::path model;
  std::filesystem::path train_data;  // optional: adds the training-data row
  std::string phase_source = "estimate";  // what FSM/sFSM gate on: truth | estimate
  double theta = 0.1;
  double tau = 0.2;
  double duration = 60.0;
  double noise_std = 0.02;
};

struct OnlineOptions {
  std::string mode = "loopback";  // loopback | udp
  double duration = 300.0;
  double speed = 3.5;
  double noise_std = 0.02;
  double period = 20.0;
  double learning_rate = 0.01;
  std::string hidden = "8,6,3";
  std::string strategy = "blend";
  bool closed_loop = false;
  bool no_trainer = false;
  double theta = 0.1;
  double window = 5.0;
  double report_after = 10.0;
  std::string ctrl_addr;   // empty: environment or default
  std::string train_addr;
  double realtime_factor = 0.0;
};

struct TrainerOptions {
  double period = 20.0;
  double learning_rate = 0.01;
  std::string hidden = "8,6,3";
  std::string ctrl_addr;
  std::string train_addr;
  double idle_timeout = 2.0;
  double max_wall = 900.0;
};

[[nodiscard]] std::vector<int> parse_hidden(const std::string& text);

/// Each command writes into `<outdir>/<command>_<seed>/` and returns the process exit code.
int cmd_generate(const CommonOptions& common, const GenerateOptions& opt, std::ostream& out);
int cmd_eval(const CommonOptions& common, const EvalOptions& opt, std::ostream& out);
int cmd_train(const CommonOptions& common, const TrainOptions& opt, std::ostream& out);
int cmd_simulate(const CommonOptions& common, const SimulateOptions& opt, std::ostream& out);
int cmd_online(const CommonOptions& common, const OnlineOptions& opt, std::ostream& out);
int cmd_control(const CommonOptions& common, const OnlineOptions& opt, std::ostream& out);
int cmd_trainer(const CommonOptions& common, const TrainerOptions& opt, std::ostream& out);

/// Full command line entry point (argv[0] included). Parse errors print usage to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gpk::cli
