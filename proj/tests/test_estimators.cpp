#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "gpk/error.hpp"
#include "gpk/estimators.hpp"

using namespace gpk;

namespace {

GaitDataset dataset_from(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  GaitDataset d;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    GaitSample s;
    s.t = static_cast<double>(i) / 100.0;
    for (Eigen::Index j = 0; j < 6; ++j) s.angles[static_cast<std::size_t>(j)] = x(i, j);
    s.phase = y(i) < -0.5 ? PhaseLabel::Left : (y(i) > 0.5 ? PhaseLabel::Right : PhaseLabel::Double);
    d.samples.push_back(s);
  }
  return d;
}

double sse(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b) {
  return ((x * w).array() + b - y.array()).square().sum();
}

}  // namespace

TEST_CASE("fit_linear recovers an exact single-feature target") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(40, 6);
  Eigen::VectorXd y(40);
  for (int i = 0; i < 40; ++i) {
    x(i, 0) = -1.0 + 0.05 * i;
    y(i) = x(i, 0);
  }
  const auto m = fit_linear(x, y);
  CHECK(std::abs(m.coefficients(0) - 1.0) < 1e-9);
  for (int j = 1; j < 6; ++j) CHECK(std::abs(m.coefficients(j)) < 1e-9);
  CHECK(std::abs(m.bias) < 1e-9);
  CHECK(m.diagnostics.rank_deficient);  // five all-zero columns
}

TEST_CASE("fit_linear on a constant zero target gives zero model") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd x(30, 6);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = n(rng);
  const auto m = fit_linear(dataset_from(x, Eigen::VectorXd::Zero(30)));
  CHECK(m.coefficients.norm() < 1e-9);
  CHECK(std::abs(m.bias) < 1e-9);
}

TEST_CASE("fit_linear residual matches a normal-equations oracle") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd x(50, 6);
    Eigen::VectorXd y(50);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = n(rng);
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = n(rng);
    const auto m = fit_linear(x, y);

    // Independent dense solve of the augmented normal equations.
    Eigen::MatrixXd a(50, 7);
    a << x, Eigen::VectorXd::Ones(50);
    const Eigen::VectorXd beta = (a.transpose() * a).ldlt().solve(a.transpose() * y);
    const double oracle = (a * beta - y).squaredNorm();
    const double ours = sse(x, y, m.coefficients, m.bias);
    CHECK(std::abs(ours - oracle) <= 1e-8 * oracle);

    // Least-squares optimality against random candidates.
    std::normal_distribution<double> p(0.0, 0.1);
    for (int c = 0; c < 20; ++c) {
      Eigen::VectorXd w = m.coefficients;
      for (Eigen::Index j = 0; j < 6; ++j) w(j) += p(rng);
      CHECK(sse(x, y, w, m.bias + p(rng)) >= ours);
    }
  }
}

TEST_CASE("fit_linear without intercept and with too few samples") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Identity(7, 6);
  Eigen::VectorXd y = Eigen::VectorXd::Ones(7);
  CHECK(fit_linear(x, y, false).bias == 0.0);
  CHECK_THROWS_AS((void)fit_linear(Eigen::MatrixXd::Zero(6, 6), Eigen::VectorXd::Zero(6)), ContractError);
}

TEST_CASE("linear regressor prediction is affine in the inputs") {
  LinearRegressor m;
  m.coefficients << 1, 2, 3, 4, 5, 6;
  m.bias = 0.5;
  const std::array<double, 6> a{1, 0, 0, 0, 0, 1};
  CHECK(m.predict(a) == doctest::Approx(7.5));
  const auto net = to_network(m);
  CHECK(net.forward(a)(0) == doctest::Approx(7.5).epsilon(1e-12));
}

TEST_CASE("zero network outputs zero") {
  FeedforwardNet net({6, 8, 6, 3, 1}, Activation::Tanh, Activation::Linear);
  const std::array<double, 6> a{0.3, -0.2, 1.0, 0.1, 0.4, -0.7};
  CHECK(net.forward(a)(0) == 0.0);
}

TEST_CASE("single affine layer passes its input through") {
  FeedforwardNet net({1, 1}, Activation::Tanh, Activation::Linear);
  net.layer(0).weights(0, 0) = 1.0;
  for (double x : {-1.0, -0.3, 0.0, 0.7, 1.0}) {
    const std::array<double, 1> in{x};
    CHECK(net.forward(in)(0) == doctest::Approx(x).epsilon(1e-15));
  }
}

TEST_CASE("softmax outputs are positive and sum to one") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto net = make_classifier_net({8, 6, 3}, seed);
    auto p = net.parameters();
    p *= 10.0;  // push into saturation too
    net.set_parameters(p);
    for (int i = 0; i < 20; ++i) {
      std::array<double, 6> a{};
      for (auto& v : a) v = u(rng);
      const auto y = net.forward(a);
      CHECK((y.array() > 0.0).all());
      CHECK(std::abs(y.sum() - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("forward rejects mismatched input width") {
  const auto net = make_regression_net({8, 6, 3}, 1);
  const std::array<double, 5> a{};
  CHECK_THROWS_AS((void)net.forward(a), ContractError);
}

TEST_CASE("affine input rescaling absorbed into the scaling leaves outputs unchanged") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto net = make_regression_net({8, 6, 3}, 4);
  std::vector<FeatureRange> base(6, FeatureRange{-1.5, 2.0});
  net.set_input_scaling(base);
  // x' = s * x + o, with the scaling range mapped the same way.
  const double s = 3.7, o = -0.4;
  auto moved = net;
  std::vector<FeatureRange> mapped(6, FeatureRange{s * -1.5 + o, s * 2.0 + o});
  moved.set_input_scaling(mapped);
  for (int i = 0; i < 50; ++i) {
    std::array<double, 6> a{}, b{};
    for (std::size_t j = 0; j < 6; ++j) {
      a[j] = u(rng);
      b[j] = s * a[j] + o;
    }
    CHECK(std::abs(net.forward(a)(0) - moved.forward(b)(0)) < 1e-10);
  }
}

TEST_CASE("layer dimensions chain and parameters round-trip") {
  const auto net = FeedforwardNet::random({6, 8, 6, 3, 1}, Activation::Tanh, Activation::Linear, 2);
  CHECK(net.layer(0).weights.rows() == 8);
  CHECK(net.layer(0).weights.cols() == 6);
  CHECK(net.layer(3).weights.rows() == 1);
  CHECK(net.parameter_count() == 8 * 7 + 6 * 9 + 3 * 7 + 1 * 4);
  auto copy = net;
  copy.set_parameters(net.parameters());
  CHECK(copy == net);
  // Flattening order: first-layer weights row-major, then biases.
  const auto p = net.parameters();
  CHECK(p(1) == net.layer(0).weights(0, 1));
  CHECK(p(6) == net.layer(0).weights(1, 0));
  CHECK(p(48) == net.layer(0).biases(0));
}

TEST_CASE("invalid input scaling is rejected") {
  auto net = make_regression_net({8, 6, 3}, 1);
  CHECK_THROWS_AS(net.set_input_scaling(std::vector<FeatureRange>(5)), ContractError);
  CHECK_THROWS_AS(net.set_input_scaling(std::vector<FeatureRange>(6, FeatureRange{1.0, 1.0})), ContractError);
}

TEST_CASE("threshold rule examples") {
  CHECK(threshold_classify(0.5, 0.1).label == PhaseLabel::Right);
  CHECK(threshold_classify(0.0, 0.1).label == PhaseLabel::Double);
  CHECK(threshold_classify(-0.1, 0.1).label == PhaseLabel::Double);
  CHECK(threshold_classify(0.1, 0.1).label == PhaseLabel::Double);
  CHECK(threshold_classify(-0.5, 0.1).label == PhaseLabel::Left);
  CHECK(threshold_classify(-0.5, 0.1).value == -1.0);
  CHECK_THROWS_AS((void)threshold_classify(0.0, 0.0), ContractError);
}

TEST_CASE("threshold rule is monotone") {
  double previous = -2.0;
  for (int i = -3000; i <= 3000; ++i) {
    const double v = threshold_classify(i * 1e-3, 0.1).value;
    CHECK(v >= previous);
    previous = v;
  }
}

TEST_CASE("argmax classification with Double-then-Left tie-break") {
  auto c = classify_scores(Eigen::Vector3d(0.1, 0.8, 0.1));
  CHECK(c.label == PhaseLabel::Double);
  CHECK(c.value == 0.0);
  c = classify_scores(Eigen::Vector3d(0.8, 0.1, 0.1));
  CHECK(c.label == PhaseLabel::Left);
  CHECK(c.value == -1.0);
  CHECK(classify_scores(Eigen::Vector3d(0.45, 0.45, 0.10)).label == PhaseLabel::Double);
  CHECK(classify_scores(Eigen::Vector3d(0.4, 0.2, 0.4)).label == PhaseLabel::Left);
  CHECK(classify_scores(Eigen::Vector3d(0.1, 0.1, 0.8)).label == PhaseLabel::Right);
}

TEST_CASE("estimate label and value agree") {
  for (int i = -20; i <= 20; ++i) {
    const auto e = threshold_classify(i * 0.05);
    CHECK(phase_to_value(e.label) == e.value);
  }
}
