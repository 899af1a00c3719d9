#include <benchmark/benchmark.h>

#include "gpk/control_blend.hpp"
#include "gpk/lm_training.hpp"
#include "gpk/wire.hpp"

using namespace gpk;

namespace {

const GaitDataset& walk() {
  static const GaitDataset data = generate_gait(SpeedProfile::constant(3.5, 20.0), 1, 0.02);
  return data;
}

void BM_ForwardSingle(benchmark::State& state) {
  const auto net = make_regression_net(default_hidden_sizes(), 1);
  const auto& s = walk().samples.front();
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(s.angles));
}
BENCHMARK(BM_ForwardSingle);

void BM_ForwardBatch(benchmark::State& state) {
  const auto net = make_regression_net(default_hidden_sizes(), 1);
  const auto x = angle_matrix(walk());
  for (auto _ : state) benchmark::DoNotOptimize(net.forward_batch(x));
  state.SetItemsProcessed(state.iterations() * x.rows());
}
BENCHMARK(BM_ForwardBatch);

void BM_Jacobian(benchmark::State& state) {
  const auto net = make_regression_net(default_hidden_sizes(), 1);
  const auto x = angle_matrix(walk()).topRows(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(jacobian(net, x));
}
BENCHMARK(BM_Jacobian)->Arg(100)->Arg(2000);

void BM_LMEpoch(benchmark::State& state) {
  auto net = make_regression_net(default_hidden_sizes(), 1);
  const auto x = angle_matrix(walk());
  net.fit_input_scaling(x);
  const Eigen::MatrixXd y = phase_vector(walk());
  LMConfig cfg;
  cfg.max_epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train_lm(net, x, y, cfg));
}
BENCHMARK(BM_LMEpoch)->Unit(benchmark::kMillisecond);

void BM_EncodeDecodeBatch(benchmark::State& state) {
  wire::WireMessage m{1, wire::SampleBatch{std::vector<wire::WireSample>(50)}};
  for (auto _ : state) {
    const auto bytes = wire::encode(m);
    benchmark::DoNotOptimize(wire::decode(bytes));
  }
}
BENCHMARK(BM_EncodeDecodeBatch);

void BM_EncodeDecodeWeights(benchmark::State& state) {
  wire::WireMessage m{1, wire::Weights{make_regression_net(default_hidden_sizes(), 1)}};
  for (auto _ : state) {
    const auto bytes = wire::encode(m);
    benchmark::DoNotOptimize(wire::decode(bytes));
  }
}
BENCHMARK(BM_EncodeDecodeWeights);

void BM_GravityTorques(benchmark::State& state) {
  const auto& s = walk().samples[37];
  for (auto _ : state) benchmark::DoNotOptimize(gravity_torques(ExoParams{}, s.angles, GroundedModel::LGF));
}
BENCHMARK(BM_GravityTorques);

}  // namespace
BENCHMARK_MAIN();
