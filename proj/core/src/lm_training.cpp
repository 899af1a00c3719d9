#include "gpk/lm_training.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "gpk/csv.hpp"
#include "gpk/error.hpp"
#include "gpk/metrics.hpp"

namespace gpk {

namespace {

struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;  // [0] = scaled inputs, back() = outputs
};

ForwardCache forward_cached(const FeedforwardNet& net, const Eigen::MatrixXd& scaled) {
  ForwardCache cache;
  cache.activations.reserve(net.layer_count() + 1);
  cache.activations.push_back(scaled);
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const auto& layer = net.layer(i);
    Eigen::MatrixXd z = cache.activations.back() * layer.weights.transpose();
    z.rowwise() += layer.biases.transpose();
    apply_activation(net.activation_of(i), z);
    cache.activations.push_back(std::move(z));
  }
  return cache;
}

/// d a / d z for element-wise activations, expressed through the activation value.
Eigen::MatrixXd activation_slope(Activation act, const Eigen::MatrixXd& a) {
  switch (act) {
    case Activation::Tanh:
      return (1.0 - a.array().square()).matrix();
    case Activation::Linear:
      return Eigen::MatrixXd::Ones(a.rows(), a.cols());
    case Activation::Softmax:
      break;
  }
  throw ContractError("softmax has no element-wise slope");
}

/// Sensitivity of output k to the pre-activations of the last layer (N x n_out).
Eigen::MatrixXd output_sensitivity(Activation act, const Eigen::MatrixXd& y, Eigen::Index k) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(y.rows(), y.cols());
  switch (act) {
    case Activation::Linear:
      d.col(k).setOnes();
      break;
    case Activation::Tanh:
      d.col(k) = (1.0 - y.col(k).array().square()).matrix();
      break;
    case Activation::Softmax:
      for (Eigen::Index j = 0; j < y.cols(); ++j) {
        const double delta = j == k ? 1.0 : 0.0;
        d.col(j) = (y.col(k).array() * (delta - y.col(j).array())).matrix();
      }
      break;
  }
  return d;
}

std::vector<Eigen::Index> layer_offsets(const FeedforwardNet& net) {
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    offsets.push_back(off);
    off += net.layer(i).weights.size() + net.layer(i).biases.size();
  }
  return offsets;
}

/// Back-propagates `sensitivity` (N x n_out, d y / d z_out) into `jac` (N x P).
void backpropagate(const FeedforwardNet& net, const ForwardCache& cache, Eigen::MatrixXd d,
                   const std::vector<Eigen::Index>& offsets, Eigen::MatrixXd& jac) {
  for (std::size_t li = net.layer_count(); li-- > 0;) {
    const auto& layer = net.layer(li);
    const Eigen::MatrixXd& input = cache.activations[li];
    const Eigen::Index n_in = layer.weights.cols();
    const Eigen::Index n_out = layer.weights.rows();
    const Eigen::Index off = offsets[li];
    for (Eigen::Index r = 0; r < n_out; ++r) {
      for (Eigen::Index c = 0; c < n_in; ++c) {
        jac.col(off + r * n_in + c) = d.col(r).cwiseProduct(input.col(c));
      }
      jac.col(off + n_out * n_in + r) = d.col(r);
    }
    if (li > 0) {
      d = (d * layer.weights).cwiseProduct(activation_slope(net.activation_of(li - 1), input));
    }
  }
}

double sum_squared_error(const FeedforwardNet& net, const Eigen::MatrixXd& scaled,
                         const Eigen::MatrixXd& targets) {
  if (scaled.rows() == 0) return 0.0;
  return (targets - net.forward_scaled(scaled)).squaredNorm();
}

/// Sum over samples and outputs of e_ik * d y_ik / d p, i.e. minus half the SSE gradient.
Eigen::VectorXd descent_direction(const FeedforwardNet& net, const Eigen::MatrixXd& scaled,
                                  const Eigen::MatrixXd& targets) {
  const ForwardCache cache = forward_cached(net, scaled);
  const Eigen::MatrixXd& y = cache.activations.back();
  const Eigen::MatrixXd e = targets - y;
  const Activation out = net.output_activation();

  // Vector-Jacobian product at the output layer.
  Eigen::MatrixXd d(y.rows(), y.cols());
  switch (out) {
    case Activation::Linear:
      d = e;
      break;
    case Activation::Tanh:
      d = e.cwiseProduct((1.0 - y.array().square()).matrix());
      break;
    case Activation::Softmax: {
      const Eigen::VectorXd ey = e.cwiseProduct(y).rowwise().sum();
      d = y.cwiseProduct(e - ey.replicate(1, y.cols()));
      break;
    }
  }

  Eigen::VectorXd grad(static_cast<Eigen::Index>(net.parameter_count()));
  const auto offsets = layer_offsets(net);
  for (std::size_t li = net.layer_count(); li-- > 0;) {
    const auto& layer = net.layer(li);
    const Eigen::MatrixXd& input = cache.activations[li];
    const Eigen::Index n_in = layer.weights.cols();
    const Eigen::Index n_out = layer.weights.rows();
    const Eigen::MatrixXd gw = d.transpose() * input;  // n_out x n_in
    Eigen::Index k = offsets[li];
    for (Eigen::Index r = 0; r < n_out; ++r) {
      for (Eigen::Index c = 0; c < n_in; ++c) grad(k++) = gw(r, c);
    }
    for (Eigen::Index r = 0; r < n_out; ++r) grad(k++) = d.col(r).sum();
    if (li > 0) {
      d = (d * layer.weights).cwiseProduct(activation_slope(net.activation_of(li - 1), input));
    }
  }
  return grad;
}

}  // namespace

std::vector<Eigen::MatrixXd> output_jacobians(const FeedforwardNet& net,
                                              const Eigen::MatrixXd& scaled_inputs) {
  net.validate();
  const ForwardCache cache = forward_cached(net, scaled_inputs);
  const Eigen::MatrixXd& y = cache.activations.back();
  const auto offsets = layer_offsets(net);
  const auto p = static_cast<Eigen::Index>(net.parameter_count());

  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(y.cols()));
  for (Eigen::Index k = 0; k < y.cols(); ++k) {
    Eigen::MatrixXd jac(scaled_inputs.rows(), p);
    backpropagate(net, cache, output_sensitivity(net.output_activation(), y, k), offsets, jac);
    out.push_back(std::move(jac));
  }
  return out;
}

Eigen::MatrixXd jacobian(const FeedforwardNet& net, const Eigen::MatrixXd& inputs) {
  const auto per_output = output_jacobians(net, net.scale_inputs(inputs));
  const Eigen::Index m = static_cast<Eigen::Index>(per_output.size());
  const Eigen::Index n = inputs.rows();
  Eigen::MatrixXd j(n * m, static_cast<Eigen::Index>(net.parameter_count()));
  for (Eigen::Index k = 0; k < m; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) j.row(i * m + k) = -per_output[static_cast<std::size_t>(k)].row(i);
  }
  return j;
}

// ---------------------------------------------------------------------------

void LMConfig::validate() const {
  if (!(lambda_init > 0.0)) throw ConfigError("lambda_init must be > 0");
  if (!(lambda_up > 1.0)) throw ConfigError("lambda_up must be > 1");
  if (!(lambda_down > 0.0 && lambda_down < 1.0)) throw ConfigError("lambda_down must be in (0,1)");
  if (!(lambda_max > lambda_init)) throw ConfigError("lambda_max must exceed lambda_init");
  if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
  if (max_validation_failures < 1) throw ConfigError("max_validation_failures must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw ConfigError("train_fraction must be in (0,1]");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must be in [0,1)");
  }
  if (train_fraction + validation_fraction > 1.0 + 1e-12) throw ConfigError("split fractions exceed 1");
}

std::string to_string(LMStop stop) {
  switch (stop) {
    case LMStop::MaxEpochs:
      return "max_epochs";
    case LMStop::ValidationStop:
      return "validation_stop";
    case LMStop::LambdaLimit:
      return "lambda_limit";
    case LMStop::MinGradient:
      return "min_gradient";
    case LMStop::ZeroError:
      return "zero_error";
  }
  return "?";
}

LMResult train_lm(FeedforwardNet net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                  const LMConfig& config) {
  config.validate();
  net.validate();
  if (inputs.rows() != targets.rows()) throw ContractError("inputs/targets row mismatch");
  if (inputs.rows() < 10) throw ContractError("train_lm needs at least 10 samples");
  if (targets.cols() != net.output_size()) throw ContractError("target width != network outputs");

  const Eigen::Index n = inputs.rows();
  const auto n_train = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::floor(config.train_fraction * static_cast<double>(n))));
  const auto n_val = std::min<Eigen::Index>(
      n - n_train,
      static_cast<Eigen::Index>(std::floor(config.validation_fraction * static_cast<double>(n))));

  const Eigen::MatrixXd scaled = net.scale_inputs(inputs);
  const Eigen::MatrixXd x_train = scaled.topRows(n_train);
  const Eigen::MatrixXd t_train = targets.topRows(n_train);
  const Eigen::MatrixXd x_val = scaled.middleRows(n_train, n_val);
  const Eigen::MatrixXd t_val = targets.middleRows(n_train, n_val);
  const bool use_val = n_val > 0;
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

  Eigen::VectorXd p = net.parameters();
  double sse = sum_squared_error(net, x_train, t_train);
  if (!std::isfinite(sse)) throw NumericError("non-finite training error at initialisation");
  double val_sse = use_val ? sum_squared_error(net, x_val, t_val) : kNaN;

  LMResult result;
  result.log.push_back({0, config.lambda_init, sse, val_sse, true});
  FeedforwardNet best = net;
  double best_val = use_val ? val_sse : sse;
  int failures = 0;
  double lambda = config.lambda_init;
  const auto n_params = static_cast<Eigen::Index>(p.size());

  int epoch = 0;
  bool stopped = false;
  while (!stopped && epoch < config.max_epochs) {
    if (sse == 0.0) {
      result.stop = LMStop::ZeroError;
      break;
    }
    ++epoch;
    const auto jacs = output_jacobians(net, x_train);
    const Eigen::MatrixXd y = net.forward_scaled(x_train);
    const Eigen::MatrixXd e = t_train - y;

    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n_params, n_params);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n_params);
    for (std::size_t k = 0; k < jacs.size(); ++k) {
      h.selfadjointView<Eigen::Lower>().rankUpdate(jacs[k].transpose());
      g.noalias() += jacs[k].transpose() * e.col(static_cast<Eigen::Index>(k));
    }
    h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
    if (!g.allFinite() || !h.allFinite()) throw NumericError("non-finite Jacobian");
    if (g.norm() < config.min_gradient) {
      result.stop = LMStop::MinGradient;
      --epoch;
      break;
    }

    while (true) {
      Eigen::MatrixXd a = h;
      a.diagonal().array() += lambda;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
      Eigen::VectorXd delta;
      bool solved = ldlt.info() == Eigen::Success && ldlt.isPositive();
      if (solved) {
        delta = ldlt.solve(g);
        solved = delta.allFinite();
      }
      double trial_sse = std::numeric_limits<double>::infinity();
      FeedforwardNet trial = net;
      if (solved) {
        trial.set_parameters(p + delta);
        trial_sse = sum_squared_error(trial, x_train, t_train);
      }
      if (solved && std::isfinite(trial_sse) && trial_sse < sse) {
        net = std::move(trial);
        p = net.parameters();
        sse = trial_sse;
        val_sse = use_val ? sum_squared_error(net, x_val, t_val) : kNaN;
        result.log.push_back({epoch, lambda, sse, val_sse, true});
        lambda *= config.lambda_down;
        break;
      }
      result.log.push_back({epoch, lambda, trial_sse, kNaN, false});
      lambda *= config.lambda_up;
      if (lambda > config.lambda_max) {
        result.stop = LMStop::LambdaLimit;
        stopped = true;
        break;
      }
    }
    if (stopped) break;

    const double monitored = use_val ? val_sse : sse;
    if (monitored < best_val) {
      best_val = monitored;
      best = net;
      result.best_epoch = epoch;
      failures = 0;
    } else if (use_val) {
      if (++failures >= config.max_validation_failures) {
        result.stop = LMStop::ValidationStop;
        stopped = true;
      }
    }
  }

  result.last_epoch = epoch;
  result.best_val_sse = best_val;
  if (use_val) {
    result.net = std::move(best);
  } else {
    result.net = std::move(net);
    result.best_epoch = epoch;
  }
  result.final_train_sse = sum_squared_error(result.net, x_train, t_train);
  return result;
}

void save_training_log(const std::vector<LMLogRow>& log, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << "epoch,lambda,train_sse,val_sse,accepted\n";
  for (const auto& r : log) {
    f << r.epoch << ',' << csv::format_double(r.lambda) << ',' << csv::format_double(r.train_sse)
      << ',' << csv::format_double(r.val_sse) << ',' << (r.accepted ? 1 : 0) << '\n';
  }
}

// ---------------------------------------------------------------------------

void SeqTrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be finite and >= 0");
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
}

FeedforwardNet train_sequential(FeedforwardNet net, const Eigen::MatrixXd& inputs,
                                const Eigen::MatrixXd& targets, const SeqTrainConfig& config,
                                SeqTrainLog* log) {
  config.validate();
  net.validate();
  if (inputs.rows() == 0) throw ContractError("train_sequential needs a non-empty batch");
  if (inputs.rows() != targets.rows() || targets.cols() != net.output_size()) {
    throw ContractError("batch shape does not match the network");
  }
  const Eigen::MatrixXd scaled = net.scale_inputs(inputs);
  SeqTrainLog local;
  if (config.learning_rate == 0.0) {
    local.samples_visited = static_cast<std::size_t>(inputs.rows() * config.epochs);
    if (log) *log = local;
    return net;
  }
  Eigen::VectorXd p = net.parameters();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (Eigen::Index i = 0; i < scaled.rows(); ++i) {
      ++local.samples_visited;
      const Eigen::VectorXd step =
          config.learning_rate * descent_direction(net, scaled.row(i), targets.row(i));
      if (!step.allFinite()) {
        ++local.skipped_nonfinite;
        continue;
      }
      p += step;
      net.set_parameters(p);
    }
  }
  if (log) *log = local;
  return net;
}

FeedforwardNet train_sequential(FeedforwardNet net, const GaitDataset& batch,
                                const SeqTrainConfig& config, SeqTrainLog* log) {
  if (batch.empty()) throw ContractError("train_sequential needs a non-empty batch");
  const Eigen::MatrixXd targets =
      net.output_size() == 3 ? one_hot_matrix(batch) : Eigen::MatrixXd(phase_vector(batch));
  return train_sequential(std::move(net), angle_matrix(batch), targets, config, log);
}

// ---------------------------------------------------------------------------

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Linear:
      return "linear";
    case ModelKind::NnFit:
      return "nn_fit";
    case ModelKind::NnClass:
      return "nn_class";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "linear") return ModelKind::Linear;
  if (name == "nn_fit") return ModelKind::NnFit;
  if (name == "nn_class") return ModelKind::NnClass;
  throw ConfigError("unknown model kind '" + name + "' (expected linear, nn_fit or nn_class)");
}

std::vector<std::pair<std::size_t, std::size_t>> fold_ranges(std::size_t n, int k) {
  if (k < 2) throw ConfigError("k must be >= 2");
  if (n < static_cast<std::size_t>(k)) throw ConfigError("dataset has fewer samples than folds");
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  const auto kk = static_cast<std::size_t>(k);
  for (std::size_t i = 0; i < kk; ++i) ranges.emplace_back(i * n / kk, (i + 1) * n / kk);
  return ranges;
}

GaitDataset without_block(const GaitDataset& data, std::size_t begin, std::size_t end) {
  GaitDataset out;
  out.sample_rate = data.sample_rate;
  out.samples.reserve(data.size() - (end - begin));
  out.samples.insert(out.samples.end(), data.samples.begin(),
                     data.samples.begin() + static_cast<std::ptrdiff_t>(begin));
  out.samples.insert(out.samples.end(), data.samples.begin() + static_cast<std::ptrdiff_t>(end),
                     data.samples.end());
  return out;
}

FoldReport kfold_evaluate(const GaitDataset& dataset, int k, const ModelTrainer& trainer) {
  FoldReport report;
  for (const auto& [begin, end] : fold_ranges(dataset.size(), k)) {
    const GaitDataset test = dataset.slice(begin, end);
    const auto predict = trainer(without_block(dataset, begin, end));
    const Predictions pred = predict(test);

    FoldResult fold;
    fold.begin = begin;
    fold.end = end;
    std::vector<double> target_values;
    std::vector<PhaseLabel> target_labels;
    for (const auto& s : test.samples) {
      target_values.push_back(phase_to_value(s.phase));
      target_labels.push_back(s.phase);
    }
    fold.rmse = rmse(pred.values, target_values);
    fold.accuracy = accuracy(pred.labels, target_labels);
    const auto counts = count_labels(test);
    const int present = (counts.left > 0) + (counts.double_stance > 0) + (counts.right > 0);
    if (present < 2) {
      fold.warning = "fold [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") contains a single label";
      report.warnings.push_back(fold.warning);
    }
    report.folds.push_back(std::move(fold));
  }
  for (const auto& f : report.folds) {
    report.mean_rmse += f.rmse;
    report.mean_accuracy += f.accuracy;
  }
  report.mean_rmse /= static_cast<double>(report.folds.size());
  report.mean_accuracy /= static_cast<double>(report.folds.size());
  return report;
}

LMResult train_network(const GaitDataset& dataset, ModelKind kind, const KFoldConfig& config) {
  if (kind == ModelKind::Linear) throw ContractError("train_network is for network kinds");
  const Eigen::MatrixXd x = angle_matrix(dataset);
  FeedforwardNet net = kind == ModelKind::NnFit ? make_regression_net(config.hidden, config.lm.rng_seed)
                                                : make_classifier_net(config.hidden, config.lm.rng_seed);
  net.fit_input_scaling(x);
  const Eigen::MatrixXd t =
      kind == ModelKind::NnFit ? Eigen::MatrixXd(phase_vector(dataset)) : one_hot_matrix(dataset);
  return train_lm(std::move(net), x, t, config.lm);
}

ModelTrainer make_trainer(ModelKind kind, const KFoldConfig& config) {
  switch (kind) {
    case ModelKind::Linear:
      return [config](const GaitDataset& train) {
        const LinearRegressor model = fit_linear(train, config.linear_bias);
        return std::function<Predictions(const GaitDataset&)>([model, config](const GaitDataset& test) {
          Predictions p;
          for (const auto& s : test.samples) {
            const double y = model.predict(s.angles);
            p.values.push_back(y);
            p.labels.push_back(threshold_classify(y, config.theta).label);
          }
          return p;
        });
      };
    case ModelKind::NnFit:
    case ModelKind::NnClass:
      return [kind, config](const GaitDataset& train) {
        auto net = std::make_shared<const FeedforwardNet>(train_network(train, kind, config).net);
        return std::function<Predictions(const GaitDataset&)>([net, kind, config](const GaitDataset& test) {
          const Eigen::MatrixXd y = net->forward_batch(angle_matrix(test));
          Predictions p;
          for (Eigen::Index i = 0; i < y.rows(); ++i) {
            const PhaseEstimate e = kind == ModelKind::NnFit
                                        ? threshold_classify(y(i, 0), config.theta)
                                        : classify_scores(Eigen::Vector3d(y(i, 0), y(i, 1), y(i, 2)));
            p.values.push_back(kind == ModelKind::NnFit ? y(i, 0) : e.value);
            p.labels.push_back(e.label);
          }
          return p;
        });
      };
  }
  throw ConfigError("unknown model kind");
}

FoldReport kfold_evaluate(const GaitDataset& dataset, ModelKind kind, const KFoldConfig& config) {
  return kfold_evaluate(dataset, config.k, make_trainer(kind, config));
}

}  // namespace gpk
