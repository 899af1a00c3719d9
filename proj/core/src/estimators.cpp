#include "gpk/estimators.hpp"

#include <cmath>
#include <random>

#include "gpk/error.hpp"

namespace gpk {

double LinearRegressor::predict(std::span<const double> angles) const {
  if (angles.size() != static_cast<std::size_t>(coefficients.size())) {
    throw ContractError("linear regressor expects " + std::to_string(coefficients.size()) +
                        " inputs, got " + std::to_string(angles.size()));
  }
  double y = bias;
  for (std::size_t j = 0; j < angles.size(); ++j) y += coefficients[static_cast<Eigen::Index>(j)] * angles[j];
  return y;
}

LinearRegressor fit_linear(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                           bool with_bias) {
  if (inputs.rows() != targets.rows()) throw ContractError("inputs/targets row mismatch");
  const Eigen::Index n = inputs.rows();
  const Eigen::Index d = inputs.cols();
  if (n < d + 1) throw ContractError("fit_linear needs at least one more sample than inputs");
  Eigen::MatrixXd design(n, with_bias ? d + 1 : d);
  design.leftCols(d) = inputs;
  if (with_bias) design.col(d).setOnes();

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
  const Eigen::VectorXd solution = cod.solve(targets);

  LinearRegressor out;
  out.coefficients = solution.head(d);
  out.bias = with_bias ? solution(d) : 0.0;
  out.diagnostics.rank = cod.rank();
  out.diagnostics.rank_deficient = cod.rank() < design.cols();
  return out;
}

LinearRegressor fit_linear(const GaitDataset& dataset, bool with_bias) {
  return fit_linear(angle_matrix(dataset), phase_vector(dataset), with_bias);
}

// ---------------------------------------------------------------------------

FeedforwardNet::FeedforwardNet(std::vector<int> layer_sizes, Activation hidden, Activation output)
    : sizes_(std::move(layer_sizes)), hidden_(hidden), output_(output) {
  if (sizes_.size() < 2) throw ContractError("network needs at least input and output sizes");
  for (int s : sizes_) {
    if (s <= 0) throw ContractError("layer sizes must be positive");
  }
  for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
    layers_.push_back({Eigen::MatrixXd::Zero(sizes_[i + 1], sizes_[i]),
                       Eigen::VectorXd::Zero(sizes_[i + 1])});
  }
  scaling_.assign(static_cast<std::size_t>(sizes_.front()), FeatureRange{-1.0, 1.0});
}

FeedforwardNet FeedforwardNet::random(std::vector<int> layer_sizes, Activation hidden,
                                      Activation output, std::uint64_t seed) {
  FeedforwardNet net(std::move(layer_sizes), hidden, output);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& layer : net.layers_) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(layer.weights.cols()));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = u(rng) * scale;
    }
    for (Eigen::Index r = 0; r < layer.biases.size(); ++r) layer.biases(r) = u(rng) * scale;
  }
  return net;
}

void FeedforwardNet::set_input_scaling(std::vector<FeatureRange> scaling) {
  if (scaling.size() != static_cast<std::size_t>(input_size())) {
    throw ContractError("input scaling needs one range per input");
  }
  for (const auto& r : scaling) {
    if (!(r.min < r.max) || !std::isfinite(r.min) || !std::isfinite(r.max)) {
      throw ContractError("input scaling ranges need finite min < max");
    }
  }
  scaling_ = std::move(scaling);
}

void FeedforwardNet::fit_input_scaling(const Eigen::MatrixXd& inputs) {
  if (inputs.cols() != input_size() || inputs.rows() == 0) {
    throw ContractError("fit_input_scaling: input matrix shape mismatch");
  }
  std::vector<FeatureRange> s(static_cast<std::size_t>(input_size()));
  for (Eigen::Index c = 0; c < inputs.cols(); ++c) {
    double lo = inputs.col(c).minCoeff();
    double hi = inputs.col(c).maxCoeff();
    if (!(lo < hi)) {
      lo -= 1.0;
      hi += 1.0;
    }
    s[static_cast<std::size_t>(c)] = {lo, hi};
  }
  set_input_scaling(std::move(s));
}

std::size_t FeedforwardNet::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.biases.size());
  return n;
}

Eigen::VectorXd FeedforwardNet::parameters() const {
  Eigen::VectorXd p(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index k = 0;
  for (const auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) p(k++) = l.weights(r, c);
    }
    for (Eigen::Index r = 0; r < l.biases.size(); ++r) p(k++) = l.biases(r);
  }
  return p;
}

void FeedforwardNet::set_parameters(const Eigen::VectorXd& p) {
  if (p.size() != static_cast<Eigen::Index>(parameter_count())) {
    throw ContractError("parameter vector length mismatch");
  }
  Eigen::Index k = 0;
  for (auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = p(k++);
    }
    for (Eigen::Index r = 0; r < l.biases.size(); ++r) l.biases(r) = p(k++);
  }
}

Eigen::MatrixXd FeedforwardNet::scale_inputs(const Eigen::MatrixXd& inputs) const {
  if (inputs.cols() != input_size()) {
    throw ContractError("network expects " + std::to_string(input_size()) + " inputs, got " +
                        std::to_string(inputs.cols()));
  }
  Eigen::MatrixXd out(inputs.rows(), inputs.cols());
  for (Eigen::Index c = 0; c < inputs.cols(); ++c) {
    const auto& r = scaling_[static_cast<std::size_t>(c)];
    const double gain = 2.0 / (r.max - r.min);
    out.col(c) = ((inputs.col(c).array() - r.min) * gain - 1.0).matrix();
  }
  return out;
}

void apply_activation(Activation act, Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::Linear:
      return;
    case Activation::Tanh:
      z = z.array().tanh().matrix();
      return;
    case Activation::Softmax:
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double m = z.row(r).maxCoeff();
        z.row(r) = (z.row(r).array() - m).exp().matrix();
        z.row(r) /= z.row(r).sum();
      }
      return;
  }
}

Eigen::MatrixXd FeedforwardNet::forward_scaled(const Eigen::MatrixXd& scaled) const {
  if (scaled.cols() != input_size()) throw ContractError("input width mismatch");
  Eigen::MatrixXd a = scaled;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Eigen::MatrixXd z = a * layers_[i].weights.transpose();
    z.rowwise() += layers_[i].biases.transpose();
    apply_activation(activation_of(i), z);
    a = std::move(z);
  }
  return a;
}

Eigen::VectorXd FeedforwardNet::forward(std::span<const double> inputs) const {
  if (inputs.size() != static_cast<std::size_t>(input_size())) {
    throw ContractError("network expects " + std::to_string(input_size()) + " inputs, got " +
                        std::to_string(inputs.size()));
  }
  Eigen::MatrixXd x(1, input_size());
  for (std::size_t j = 0; j < inputs.size(); ++j) x(0, static_cast<Eigen::Index>(j)) = inputs[j];
  return forward_scaled(scale_inputs(x)).row(0).transpose();
}

void FeedforwardNet::validate() const {
  if (sizes_.size() < 2 || layers_.size() + 1 != sizes_.size()) {
    throw ContractError("layer list does not match layer sizes");
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].weights.rows() != sizes_[i + 1] || layers_[i].weights.cols() != sizes_[i] ||
        layers_[i].biases.size() != sizes_[i + 1]) {
      throw ContractError("layer " + std::to_string(i) + " dimensions do not chain");
    }
  }
  if (scaling_.size() != static_cast<std::size_t>(sizes_.front())) {
    throw ContractError("input scaling size mismatch");
  }
  for (const auto& r : scaling_) {
    if (!(r.min < r.max)) throw ContractError("input scaling needs min < max");
  }
  if (hidden_ == Activation::Softmax) throw ContractError("softmax is only valid on the output");
}

bool operator==(const FeedforwardNet& a, const FeedforwardNet& b) {
  if (a.sizes_ != b.sizes_ || a.hidden_ != b.hidden_ || a.output_ != b.output_ ||
      a.scaling_ != b.scaling_ || a.layers_.size() != b.layers_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    if (a.layers_[i].weights != b.layers_[i].weights || a.layers_[i].biases != b.layers_[i].biases) {
      return false;
    }
  }
  return true;
}

std::vector<int> default_hidden_sizes() { return {8, 6, 3}; }

namespace {

std::vector<int> with_io(const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{static_cast<int>(kNumJoints)};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

}  // namespace

FeedforwardNet make_regression_net(const std::vector<int>& hidden, std::uint64_t seed) {
  return FeedforwardNet::random(with_io(hidden, 1), Activation::Tanh, Activation::Linear, seed);
}

FeedforwardNet make_classifier_net(const std::vector<int>& hidden, std::uint64_t seed) {
  return FeedforwardNet::random(with_io(hidden, 3), Activation::Tanh, Activation::Softmax, seed);
}

FeedforwardNet to_network(const LinearRegressor& model) {
  const auto d = static_cast<int>(model.coefficients.size());
  FeedforwardNet net({d, 1}, Activation::Tanh, Activation::Linear);
  net.layer(0).weights = model.coefficients.transpose();
  net.layer(0).biases(0) = model.bias;
  return net;
}

// ---------------------------------------------------------------------------

PhaseEstimate threshold_classify(double y_reg, double theta) {
  if (!(theta > 0.0)) throw ContractError("theta must be > 0");
  PhaseEstimate e;
  e.raw = y_reg;
  if (y_reg < -theta) {
    e.label = PhaseLabel::Left;
  } else if (y_reg > theta) {
    e.label = PhaseLabel::Right;
  } else {
    e.label = PhaseLabel::Double;
  }
  e.value = phase_to_value(e.label);
  return e;
}

PhaseEstimate classify_scores(const Eigen::Vector3d& scores) {
  // Preference order on ties: Double, Left, Right.
  constexpr std::array<PhaseLabel, 3> order{PhaseLabel::Double, PhaseLabel::Left, PhaseLabel::Right};
  PhaseLabel best = order[0];
  for (PhaseLabel candidate : order) {
    if (scores(static_cast<Eigen::Index>(phase_index(candidate))) >
        scores(static_cast<Eigen::Index>(phase_index(best)))) {
      best = candidate;
    }
  }
  PhaseEstimate e;
  e.raw = scores;
  e.label = best;
  e.value = phase_to_value(best);
  return e;
}

PhaseEstimate classify(const FeedforwardNet& net, std::span<const double> angles) {
  if (net.output_size() != 3) throw ContractError("classifier needs 3 outputs");
  const Eigen::VectorXd y = net.forward(angles);
  return classify_scores(Eigen::Vector3d(y(0), y(1), y(2)));
}

PhaseEstimate estimate_phase(const FeedforwardNet& net, std::span<const double> angles,
                             double theta) {
  if (net.output_size() != 1) throw ContractError("regression net needs 1 output");
  return threshold_classify(net.forward(angles)(0), theta);
}

Eigen::MatrixXd angle_matrix(const GaitDataset& dataset) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(dataset.size()), static_cast<Eigen::Index>(kNumJoints));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = dataset.samples[i].angles[j];
    }
  }
  return x;
}

Eigen::VectorXd phase_vector(const GaitDataset& dataset) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(dataset.size()));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    y(static_cast<Eigen::Index>(i)) = phase_to_value(dataset.samples[i].phase);
  }
  return y;
}

Eigen::MatrixXd one_hot_matrix(const GaitDataset& dataset) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dataset.size()), 3);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(phase_index(dataset.samples[i].phase))) = 1.0;
  }
  return y;
}

}  // namespace gpk
