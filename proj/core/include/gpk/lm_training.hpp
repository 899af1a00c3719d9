#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gpk/estimators.hpp"
#include "gpk/gait_data.hpp"

namespace gpk {

// ---------------------------------------------------------------------------
// Jacobian

/// Jacobian of the per-sample errors e = target - output with respect to the flattened
/// parameters. Rows are ordered sample-major: row i * outputs + k is output k of sample i.
/// `inputs` holds raw (unscaled) samples as rows.
[[nodiscard]] Eigen::MatrixXd jacobian(const FeedforwardNet& net, const Eigen::MatrixXd& inputs);

/// d output_k / d params for every output k, on already scaled inputs. Element k is an
/// N x P matrix. This is the building block shared by LM and sequential training.
[[nodiscard]] std::vector<Eigen::MatrixXd> output_jacobians(const FeedforwardNet& net,
                                                            const Eigen::MatrixXd& scaled_inputs);

// ---------------------------------------------------------------------------
// Levenberg-Marquardt

struct LMConfig {
  double lambda_init = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  double lambda_max = 1e10;
  int max_epochs = 1000;
  int max_validation_failures = 6;
  /// Leading fraction of the samples used for fitting and the following block used for
  /// validation stop. Any remainder is held out (never touched by training).
  double train_fraction = 0.70;
  double validation_fraction = 0.15;
  /// Stop once the gradient norm J^T e falls below this value.
  double min_gradient = 1e-10;
  std::uint64_t rng_seed = 1;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

struct LMLogRow {
  int epoch = 0;
  double lambda = 0.0;
  double train_sse = 0.0;
  double val_sse = 0.0;  // NaN when no validation block exists or the step was rejected
  bool accepted = false;
};

enum class LMStop { MaxEpochs, ValidationStop, LambdaLimit, MinGradient, ZeroError };

[[nodiscard]] std::string to_string(LMStop stop);

struct LMResult {
  FeedforwardNet net;  // best-validation snapshot when a validation block exists
  std::vector<LMLogRow> log;
  LMStop stop = LMStop::MaxEpochs;
  int best_epoch = 0;
  int last_epoch = 0;
  double best_val_sse = 0.0;
  double final_train_sse = 0.0;
};

/// Levenberg-Marquardt on the summed squared error. Rows of `inputs`/`targets` are samples
/// in chronological order; the train/validation blocks are contiguous slices. The input
/// scaling stored in `net` is used unchanged.
[[nodiscard]] LMResult train_lm(FeedforwardNet net, const Eigen::MatrixXd& inputs,
                                const Eigen::MatrixXd& targets, const LMConfig& config);

void save_training_log(const std::vector<LMLogRow>& log, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Sequential (incremental) training

struct SeqTrainConfig {
  double learning_rate = 0.01;
  int epochs = 1;

  void validate() const;
};

struct SeqTrainLog {
  std::size_t samples_visited = 0;
  std::size_t skipped_nonfinite = 0;
};

/// Per-sample gradient descent on the squared error, samples visited in row order,
/// `epochs` passes. Non-finite updates are skipped and counted.
[[nodiscard]] FeedforwardNet train_sequential(FeedforwardNet net, const Eigen::MatrixXd& inputs,
                                              const Eigen::MatrixXd& targets,
                                              const SeqTrainConfig& config,
                                              SeqTrainLog* log = nullptr);

/// Dataset overload: single-output nets regress the phase value, 3-output nets fit one-hot.
[[nodiscard]] FeedforwardNet train_sequential(FeedforwardNet net, const GaitDataset& batch,
                                              const SeqTrainConfig& config,
                                              SeqTrainLog* log = nullptr);

// ---------------------------------------------------------------------------
// Temporal k-fold cross-validation

enum class ModelKind { Linear, NnFit, NnClass };

[[nodiscard]] std::string to_string(ModelKind kind);
[[nodiscard]] ModelKind parse_model_kind(const std::string& name);

/// Output of a trained model on a test block.
struct Predictions {
  std::vector<double> values;       // continuous output (regression) or class value
  std::vector<PhaseLabel> labels;   // decided label per sample
};

/// Trains on the given dataset and returns a predictor for arbitrary samples.
using ModelTrainer =
    std::function<std::function<Predictions(const GaitDataset&)>(const GaitDataset& train)>;

struct FoldResult {
  std::size_t begin = 0;
  std::size_t end = 0;
  double rmse = 0.0;
  double accuracy = 0.0;
  std::string warning;
};

struct FoldReport {
  std::vector<FoldResult> folds;
  double mean_rmse = 0.0;
  double mean_accuracy = 0.0;
  std::vector<std::string> warnings;
};

struct KFoldConfig {
  int k = 5;
  double theta = kDefaultTheta;
  std::vector<int> hidden = default_hidden_sizes();
  LMConfig lm{};
  bool linear_bias = true;
};

/// Index ranges of `k` contiguous, equal-duration blocks covering [0, n).
[[nodiscard]] std::vector<std::pair<std::size_t, std::size_t>> fold_ranges(std::size_t n, int k);

/// Dataset with block [begin, end) removed, remaining samples kept in order.
[[nodiscard]] GaitDataset without_block(const GaitDataset& data, std::size_t begin,
                                        std::size_t end);

[[nodiscard]] FoldReport kfold_evaluate(const GaitDataset& dataset, int k,
                                        const ModelTrainer& trainer);
[[nodiscard]] FoldReport kfold_evaluate(const GaitDataset& dataset, ModelKind kind,
                                        const KFoldConfig& config);

/// Built-in trainers used by `kfold_evaluate` and the CLI.
[[nodiscard]] ModelTrainer make_trainer(ModelKind kind, const KFoldConfig& config);

/// Trains a network of the given kind on the whole dataset (no cross-validation).
[[nodiscard]] LMResult train_network(const GaitDataset& dataset, ModelKind kind,
                                     const KFoldConfig& config);

}  // namespace gpk
