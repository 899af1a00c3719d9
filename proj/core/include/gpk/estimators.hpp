#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "gpk/gait_data.hpp"
#include "gpk/phase.hpp"

namespace gpk {

/// Default decision band half-width for the regression outputs.
inline constexpr double kDefaultTheta = 0.1;

// ---------------------------------------------------------------------------
// Linear regression

struct LinearFitDiagnostics {
  bool rank_deficient = false;
  Eigen::Index rank = 0;
};

/// y = w . x + b over the six joint angles.
struct LinearRegressor {
  Eigen::VectorXd coefficients = Eigen::VectorXd::Zero(kNumJoints);
  double bias = 0.0;
  LinearFitDiagnostics diagnostics;

  [[nodiscard]] double predict(std::span<const double> angles) const;
};

/// Least-squares fit of the phase value against the joint angles. With `with_bias = false`
/// the intercept is pinned to 0 (plain 1x6 coefficient row). Rank-deficient designs get the
/// minimum-norm solution and `diagnostics.rank_deficient` is set.
[[nodiscard]] LinearRegressor fit_linear(const GaitDataset& dataset, bool with_bias = true);

/// Same solver on raw matrices: rows of `inputs` are samples.
[[nodiscard]] LinearRegressor fit_linear(const Eigen::MatrixXd& inputs,
                                         const Eigen::VectorXd& targets, bool with_bias = true);

// ---------------------------------------------------------------------------
// Feedforward network

enum class Activation : std::uint8_t { Linear = 0, Tanh = 1, Softmax = 2 };

struct FeatureRange {
  double min = -1.0;
  double max = 1.0;

  friend bool operator==(const FeatureRange&, const FeatureRange&) = default;
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd biases;   // out
};

/// Fully connected network. Inputs are first mapped feature-wise from
/// [min, max] to [-1, 1]; hidden layers use `hidden_activation`, the last layer
/// `output_activation`.
///
/// The flattened parameter vector lists, layer by layer, the weight matrix in
/// row-major order followed by the bias vector.
class FeedforwardNet {
 public:
  FeedforwardNet() = default;
  /// Zero weights, identity input scaling.
  FeedforwardNet(std::vector<int> layer_sizes, Activation hidden, Activation output);

  /// Weights drawn uniformly from [-0.5, 0.5] / sqrt(fan_in), seeded.
  [[nodiscard]] static FeedforwardNet random(std::vector<int> layer_sizes, Activation hidden,
                                             Activation output, std::uint64_t seed);

  [[nodiscard]] const std::vector<int>& layer_sizes() const noexcept { return sizes_; }
  [[nodiscard]] int input_size() const noexcept { return sizes_.empty() ? 0 : sizes_.front(); }
  [[nodiscard]] int output_size() const noexcept { return sizes_.empty() ? 0 : sizes_.back(); }
  [[nodiscard]] std::size_t layer_count() const noexcept { return layers_.size(); }
  [[nodiscard]] Activation hidden_activation() const noexcept { return hidden_; }
  [[nodiscard]] Activation output_activation() const noexcept { return output_; }
  [[nodiscard]] Activation activation_of(std::size_t layer) const noexcept {
    return layer + 1 == layers_.size() ? output_ : hidden_;
  }

  [[nodiscard]] const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }
  [[nodiscard]] DenseLayer& layer(std::size_t i) { return layers_.at(i); }

  [[nodiscard]] const std::vector<FeatureRange>& input_scaling() const noexcept { return scaling_; }
  void set_input_scaling(std::vector<FeatureRange> scaling);
  /// Per-column min/max of `inputs` (rows are samples); constant columns are widened by +-1.
  void fit_input_scaling(const Eigen::MatrixXd& inputs);

  [[nodiscard]] std::size_t parameter_count() const noexcept;
  [[nodiscard]] Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& params);

  /// Maps raw inputs (rows are samples) to the [-1, 1] network domain.
  [[nodiscard]] Eigen::MatrixXd scale_inputs(const Eigen::MatrixXd& inputs) const;

  [[nodiscard]] Eigen::VectorXd forward(std::span<const double> inputs) const;
  /// Batched forward pass on already scaled inputs; result rows are samples.
  [[nodiscard]] Eigen::MatrixXd forward_scaled(const Eigen::MatrixXd& scaled) const;
  [[nodiscard]] Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const {
    return forward_scaled(scale_inputs(inputs));
  }

  /// Throws ContractError when dimensions do not chain or the scaling is invalid.
  void validate() const;

  friend bool operator==(const FeedforwardNet& a, const FeedforwardNet& b);

 private:
  std::vector<int> sizes_;
  std::vector<DenseLayer> layers_;
  Activation hidden_ = Activation::Tanh;
  Activation output_ = Activation::Linear;
  std::vector<FeatureRange> scaling_;
};

/// Applies `act` element-wise (row-wise for softmax) in place.
void apply_activation(Activation act, Eigen::MatrixXd& z);

/// Default hidden sizes shared by the offline and online networks.
[[nodiscard]] std::vector<int> default_hidden_sizes();

/// Phase regression network: 6 inputs, tanh hidden layers, one linear output.
[[nodiscard]] FeedforwardNet make_regression_net(const std::vector<int>& hidden, std::uint64_t seed);
/// Phase classifier: 6 inputs, tanh hidden layers, softmax over [Left, Double, Right].
[[nodiscard]] FeedforwardNet make_classifier_net(const std::vector<int>& hidden, std::uint64_t seed);

/// The linear regressor as a network without hidden layers and identity scaling.
[[nodiscard]] FeedforwardNet to_network(const LinearRegressor& model);

// ---------------------------------------------------------------------------
// Decision rules

struct PhaseEstimate {
  std::variant<double, Eigen::Vector3d> raw;
  PhaseLabel label = PhaseLabel::Double;
  PhaseValue value = 0.0;
};

/// Left below -theta, Right above +theta, Double on the closed band [-theta, theta].
[[nodiscard]] PhaseEstimate threshold_classify(double y_reg, double theta = kDefaultTheta);

/// Argmax over class scores ordered [Left, Double, Right]; ties go to Double, then Left.
[[nodiscard]] PhaseEstimate classify_scores(const Eigen::Vector3d& scores);

/// Runs a softmax classifier net and applies `classify_scores`.
[[nodiscard]] PhaseEstimate classify(const FeedforwardNet& net, std::span<const double> angles);

/// Runs a single-output regression net and applies `threshold_classify`.
[[nodiscard]] PhaseEstimate estimate_phase(const FeedforwardNet& net, std::span<const double> angles,
                                           double theta = kDefaultTheta);

/// Dataset helpers: inputs as an N x 6 matrix, phase values as an N-vector, one-hot as N x 3.
[[nodiscard]] Eigen::MatrixXd angle_matrix(const GaitDataset& dataset);
[[nodiscard]] Eigen::VectorXd phase_vector(const GaitDataset& dataset);
[[nodiscard]] Eigen::MatrixXd one_hot_matrix(const GaitDataset& dataset);

}  // namespace gpk
