#include "gpk/online_loop.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "gpk/csv.hpp"

namespace gpk::online {

GaitDataset to_dataset(std::span<const BufferedSample> samples, double sample_rate) {
  GaitDataset out;
  out.sample_rate = sample_rate;
  out.samples.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    GaitSample s;
    s.t = static_cast<double>(i) / sample_rate;
    s.angles = samples[i].angles;
    const auto label = value_to_phase(samples[i].target);
    if (!label) throw ContractError("buffered target is not a phase value");
    s.phase = *label;
    out.samples.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------

Scheduler::Scheduler(double period_s, double first_due_s)
    : period_(period_s), next_due_(first_due_s >= 0.0 ? first_due_s : period_s) {
  if (!(period_s > 0.0)) throw ConfigError("scheduler period must be > 0");
}

Scheduler::Action Scheduler::poll(double now, bool busy) {
  if (now < next_due_) return Action::Idle;
  while (next_due_ <= now) next_due_ += period_;
  return busy ? Action::Postponed : Action::Train;
}

NetSlot::NetSlot(FeedforwardNet initial)
    : net_(std::make_shared<const FeedforwardNet>(std::move(initial))) {}

std::shared_ptr<const FeedforwardNet> NetSlot::load() const {
  std::lock_guard lock(mutex_);
  return net_;
}

std::uint64_t NetSlot::generation() const {
  std::lock_guard lock(mutex_);
  return generation_;
}

std::pair<std::shared_ptr<const FeedforwardNet>, std::uint64_t> NetSlot::acquire() const {
  std::lock_guard lock(mutex_);
  return {net_, generation_};
}

void NetSlot::store(FeedforwardNet net) {
  auto next = std::make_shared<const FeedforwardNet>(std::move(net));
  std::lock_guard lock(mutex_);
  net_ = std::move(next);
  ++generation_;
}

// ---------------------------------------------------------------------------

LoopbackLink::LoopbackLink(std::size_t queue_limit) {
  to_control_.limit = queue_limit;
  to_trainer_.limit = queue_limit;
}

bool LoopbackLink::Side::send(std::span<const std::uint8_t> datagram) {
  std::vector<std::uint8_t> copy(datagram.begin(), datagram.end());
  std::lock_guard lock(out_.mutex);
  if (out_.fault && !out_.fault(copy)) return true;  // lost in transit
  if (out_.items.size() >= out_.limit) out_.items.pop_front();
  out_.items.push_back(std::move(copy));
  return true;
}

std::optional<std::vector<std::uint8_t>> LoopbackLink::Side::try_receive() {
  std::lock_guard lock(in_.mutex);
  if (in_.items.empty()) return std::nullopt;
  auto d = std::move(in_.items.front());
  in_.items.pop_front();
  return d;
}

std::string control_address_from_env() {
  const char* v = std::getenv("GPK_CTRL_ADDR");
  return v && *v ? v : kDefaultControlAddr;
}

std::string trainer_address_from_env() {
  const char* v = std::getenv("GPK_TRAIN_ADDR");
  return v && *v ? v : kDefaultTrainerAddr;
}

// ---------------------------------------------------------------------------

ControlProcess::ControlProcess(ControlConfig config, FeedforwardNet initial, DatagramEndpoint& link)
    : config_(std::move(config)), slot_(std::move(initial)), link_(link) {
  if (config_.batch_size == 0 || config_.batch_size > wire::kMaxBatchSamples) {
    throw ConfigError("batch size must be in [1, " + std::to_string(wire::kMaxBatchSamples) + "]");
  }
  if (!(config_.sample_rate > 0.0)) throw ConfigError("sample rate must be > 0");
  pending_.reserve(config_.batch_size);
}

void ControlProcess::service_network() {
  while (auto datagram = link_.try_receive()) {
    auto decoded = wire::decode(*datagram);
    if (!decoded) {
      ++stats_.datagrams_dropped;
      continue;
    }
    const auto& msg = decoded.message();
    if (const auto* w = std::get_if<wire::Weights>(&msg.payload)) {
      const int out = w->net.output_size();
      if (w->net.input_size() != static_cast<int>(kNumJoints) || (out != 1 && out != 3)) {
        ++stats_.datagrams_dropped;
        continue;
      }
      // A retransmitted update is acknowledged again but applied once.
      if (msg.seq > last_weights_seq_) {
        slot_.store(w->net);
        last_weights_seq_ = msg.seq;
        ++stats_.weights_applied;
      }
      const auto ack = wire::encode({seq_++, wire::Ack{msg.seq, wire::MessageType::Weights}});
      if (!link_.send(ack)) ++stats_.send_failures;
    } else if (const auto* a = std::get_if<wire::Ack>(&msg.payload)) {
      if (a->acked_type == wire::MessageType::SampleBatch) ++stats_.batches_acked;
    } else {
      ++stats_.datagrams_dropped;
    }
  }
}

void ControlProcess::tick(const GaitSample& sample, bool poll_network) {
  if (poll_network) service_network();

  const auto [net, generation] = slot_.acquire();
  double y = last_estimate_;
  PhaseLabel label = PhaseLabel::Double;
  bool ok = false;
  try {
    const Eigen::VectorXd out = net->forward(sample.angles);
    if (out.size() == 3) {
      const auto e = classify_scores(Eigen::Vector3d(out(0), out(1), out(2)));
      y = e.value;
      label = e.label;
      ok = true;
    } else if (out.size() == 1 && std::isfinite(out(0))) {
      y = out(0);
      label = threshold_classify(y, config_.theta).label;
      ok = true;
    }
  } catch (const std::exception&) {
    ok = false;
  }
  if (!ok) {
    ++stats_.estimator_errors;
    y = last_estimate_;
    label = threshold_classify(y, config_.theta).label;
  }
  last_estimate_ = y;

  const double phi_target = phase_to_value(sample.phase);
  const bool estimate_drives =
      config_.closed_loop && config_.controller.strategy == Strategy::Blend;
  const double phi_control = estimate_drives ? y : phi_target;
  const auto out = controller_step(config_.controller, controller_state_, phi_control, sample.angles,
                                   1.0 / config_.sample_rate);

  trace_.push_back({sample.t, phi_target, y, label, generation, phi_control, out.torque});

  wire::WireSample ws;
  for (std::size_t j = 0; j < kNumJoints; ++j) ws.angles[j] = static_cast<float>(sample.angles[j]);
  ws.target = static_cast<float>(phi_target);
  pending_.push_back(ws);
  if (pending_.size() >= config_.batch_size) send_batch();
}

void ControlProcess::flush() {
  if (!pending_.empty()) send_batch();
}

void ControlProcess::send_batch() {
  wire::SampleBatch batch;
  batch.samples = std::move(pending_);
  pending_.clear();
  pending_.reserve(config_.batch_size);
  const auto bytes = wire::encode({seq_++, std::move(batch)});
  if (link_.send(bytes)) {
    ++stats_.batches_sent;
  } else {
    ++stats_.send_failures;
  }
}

// ---------------------------------------------------------------------------

std::size_t TrainerConfig::buffer_capacity() const {
  return static_cast<std::size_t>(std::llround(period * sample_rate));
}

void TrainerConfig::validate() const {
  seq.validate();
  if (!(period > 0.0)) throw ConfigError("training period must be > 0");
  if (!(sample_rate > 0.0)) throw ConfigError("sample rate must be > 0");
  if (buffer_capacity() == 0) throw ConfigError("period * sample_rate must be >= 1");
  if (!(ack_timeout > 0.0)) throw ConfigError("ack timeout must be > 0");
}

FeedforwardNet initial_online_net(const std::vector<int>& hidden, std::uint64_t seed) {
  FeedforwardNet net = make_regression_net(hidden, seed);
  std::vector<FeatureRange> scaling;
  for (const auto& r : joint_rom()) scaling.push_back({r.min, r.max});
  net.set_input_scaling(std::move(scaling));
  return net;
}

TrainerProcess::TrainerProcess(TrainerConfig config, DatagramEndpoint& link)
    : config_((config.validate(), std::move(config))),
      link_(link),
      buffer_(config_.buffer_capacity()),
      scheduler_(config_.period),
      net_(initial_online_net(config_.hidden, config_.seed)) {}

TrainerProcess::~TrainerProcess() {
  if (job_.valid()) job_.wait();
}

double TrainerProcess::sample_clock() const noexcept {
  return static_cast<double>(stats_.samples_received) / config_.sample_rate;
}

void TrainerProcess::send(const std::vector<std::uint8_t>& bytes) {
  if (link_.send(bytes)) return;
  // One retry, then give up on this datagram.
  if (!link_.send(bytes)) ++stats_.send_failures;
}

void TrainerProcess::handle(const wire::WireMessage& msg) {
  if (const auto* batch = std::get_if<wire::SampleBatch>(&msg.payload)) {
    for (const auto& s : batch->samples) {
      BufferedSample b;
      for (std::size_t j = 0; j < kNumJoints; ++j) b.angles[j] = s.angles[j];
      b.target = s.target;
      buffer_.push(b);
    }
    stats_.samples_received += batch->samples.size();
    ++stats_.batches_received;
    send(wire::encode({seq_++, wire::Ack{msg.seq, wire::MessageType::SampleBatch}}));
  } else if (const auto* ack = std::get_if<wire::Ack>(&msg.payload)) {
    if (pending_ && ack->acked_type == wire::MessageType::Weights && ack->acked_seq == pending_->seq) {
      updates_[pending_->record].acked = true;
      pending_.reset();
    }
  } else {
    ++stats_.datagrams_dropped;
  }
}

void TrainerProcess::service(double schedule_time, double wall_time) {
  while (auto datagram = link_.try_receive()) {
    auto decoded = wire::decode(*datagram);
    if (!decoded) {
      ++stats_.datagrams_dropped;
      continue;
    }
    handle(decoded.message());
  }

  if (job_.valid() && job_.wait_for(std::chrono::seconds(0)) == std::future_status::ready) {
    finish_training(job_.get(), wall_time);
  }
  check_ack_timeout(wall_time);

  switch (scheduler_.poll(schedule_time, job_.valid())) {
    case Scheduler::Action::Train:
      start_training(schedule_time, wall_time);
      break;
    case Scheduler::Action::Postponed:
      ++stats_.postponed;
      break;
    case Scheduler::Action::Idle:
      break;
  }
}

void TrainerProcess::start_training(double schedule_time, double wall_time) {
  const auto snapshot = buffer_.snapshot();
  if (snapshot.empty()) {
    ++stats_.skipped_empty;
    return;
  }
  const GaitDataset batch = to_dataset(snapshot, config_.sample_rate);
  if (!scaling_configured_) {
    // Input ranges are taken from the first full window, then frozen.
    net_.fit_input_scaling(angle_matrix(batch));
    scaling_configured_ = true;
  }
  WeightUpdateRecord record;
  record.index = updates_.size();
  record.schedule_time = schedule_time;
  record.samples = snapshot.size();
  record.buffer_full = buffer_.full();
  updates_.push_back(record);

  if (config_.async) {
    job_ = std::async(std::launch::async, [net = net_, batch, seq = config_.seq]() {
      return train_sequential(net, batch, seq);
    });
  } else {
    finish_training(train_sequential(net_, batch, config_.seq), wall_time);
  }
}

void TrainerProcess::finish_training(FeedforwardNet trained, double wall_time) {
  net_ = std::move(trained);
  ++stats_.trainings;
  send_weights(wall_time);
}

void TrainerProcess::send_weights(double wall_time) {
  const std::uint32_t seq = seq_++;
  auto bytes = wire::encode({seq, wire::Weights{net_}});
  updates_.back().seq = seq;
  send(bytes);
  sent_weights_.push_back(bytes);
  pending_ = Pending{seq, std::move(bytes), wall_time, updates_.size() - 1};
}

void TrainerProcess::check_ack_timeout(double wall_time) {
  if (!pending_ || wall_time < pending_->sent_at + config_.ack_timeout) return;
  auto& record = updates_[pending_->record];
  if (record.retries == 0) {
    record.retries = 1;
    pending_->sent_at = wall_time;
    send(pending_->bytes);
    sent_weights_.push_back(pending_->bytes);
  } else {
    pending_.reset();
  }
}

void TrainerProcess::drain(double wall_time) {
  if (job_.valid()) finish_training(job_.get(), wall_time);
}

// ---------------------------------------------------------------------------

std::vector<WindowedPoint> trace_metrics(std::span<const ControlTraceRow> trace, double window_s,
                                         double sample_rate) {
  WindowedMetrics wm(window_s, sample_rate);
  std::vector<WindowedPoint> out;
  out.reserve(trace.size());
  for (const auto& r : trace) {
    auto p = wm.push(r.y_estimate, r.phi_target, r.estimate_label, *value_to_phase(r.phi_target));
    p.t = r.t;
    out.push_back(p);
  }
  return out;
}

namespace {

void fill_summary(OnlineRunResult& result, const ControlProcess& control, const OnlineConfig& config) {
  result.trace = control.trace();
  result.metrics = trace_metrics(result.trace, config.metrics_window, config.control.sample_rate);
  result.mean_window_accuracy_after = mean_window_accuracy_after(result.metrics, config.report_after);
  result.weights_applied = control.stats().weights_applied;
  result.control_dropped = control.stats().datagrams_dropped;
  result.batches_sent = control.stats().batches_sent;
  result.batches_acked = control.stats().batches_acked;
}

}  // namespace

OnlineRunResult run_loopback(const GaitDataset& stream, const OnlineConfig& config, LoopbackLink* link) {
  LoopbackLink own;
  LoopbackLink& l = link ? *link : own;
  TrainerConfig tcfg = config.trainer;
  tcfg.async = false;
  tcfg.sample_rate = config.control.sample_rate;

  ControlProcess control(config.control, initial_online_net(tcfg.hidden, tcfg.seed), l.control_side());
  std::optional<TrainerProcess> trainer;
  if (config.trainer_enabled) trainer.emplace(tcfg, l.trainer_side());

  const double rate = config.control.sample_rate;
  for (std::size_t k = 0; k < stream.size(); ++k) {
    control.tick(stream.samples[k]);
    const double now = static_cast<double>(k + 1) / rate;
    if (trainer) trainer->service(now, now);
  }
  control.flush();
  if (trainer) {
    const double end = static_cast<double>(stream.size()) / rate;
    trainer->service(end, end);
  }

  OnlineRunResult result;
  fill_summary(result, control, config);
  if (trainer) {
    result.updates = trainer->updates();
    result.weight_datagrams = trainer->sent_weights();
    result.trainer_stats = trainer->stats();
    if (!result.updates.empty()) result.buffer_fill_at_first_training = result.updates.front().samples;
  }
  return result;
}

OnlineRunResult run_control_udp(const GaitDataset& stream, const OnlineConfig& config,
                                const std::string& local, const std::string& remote,
                                double realtime_factor) {
  UdpEndpoint endpoint(local, remote);
  ControlProcess control(config.control,
                         initial_online_net(config.trainer.hidden, config.trainer.seed), endpoint);
  std::atomic<bool> stop{false};
  std::thread receiver([&] {
    while (!stop.load()) {
      if (endpoint.wait_readable(5)) control.service_network();
    }
  });

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const double dt = 1.0 / config.control.sample_rate;
  for (std::size_t k = 0; k < stream.size(); ++k) {
    if (realtime_factor > 0.0) {
      const auto due = start + std::chrono::duration_cast<clock::duration>(
                                   std::chrono::duration<double>(static_cast<double>(k) * dt / realtime_factor));
      std::this_thread::sleep_until(due);
    }
    control.tick(stream.samples[k], false);
  }
  control.flush();
  stop = true;
  receiver.join();

  OnlineRunResult result;
  fill_summary(result, control, config);
  return result;
}

std::vector<WeightUpdateRecord> run_trainer_udp(const TrainerConfig& config, const std::string& local,
                                                const std::string& remote,
                                                const TrainerRunOptions& options, TrainerStats* stats) {
  UdpEndpoint endpoint(local, remote);
  TrainerConfig cfg = config;
  cfg.async = true;
  TrainerProcess trainer(cfg, endpoint);

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const auto seconds = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };
  double last_activity = 0.0;
  std::size_t last_batches = 0;
  while (true) {
    if (options.stop && options.stop->load()) break;
    endpoint.wait_readable(10);
    const double now = seconds();
    trainer.service(trainer.sample_clock(), now);
    if (trainer.stats().batches_received != last_batches) {
      last_batches = trainer.stats().batches_received;
      last_activity = now;
    }
    if (last_batches > 0 && now - last_activity > options.idle_timeout_s) break;
    if (now > options.max_wall_s) break;
  }
  trainer.drain(seconds());
  if (stats) *stats = trainer.stats();
  return trainer.updates();
}

// ---------------------------------------------------------------------------

void save_trace_csv(std::span<const ControlTraceRow> trace, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << "t,phi_target,y_estimate,label_estimate,generation,phi_control,tau_lh,tau_lk,tau_la,tau_rh,"
       "tau_rk,tau_ra\n";
  for (const auto& r : trace) {
    f << csv::format_double(r.t) << ',' << csv::format_double(r.phi_target) << ','
      << csv::format_double(r.y_estimate) << ',' << static_cast<int>(phase_to_value(r.estimate_label))
      << ',' << r.generation << ',' << csv::format_double(r.phi_control);
    for (double v : r.torque) f << ',' << csv::format_double(v);
    f << '\n';
  }
}

void save_updates_csv(std::span<const WeightUpdateRecord> updates, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << "index,schedule_time,seq,samples,buffer_full,acked,retries\n";
  for (const auto& u : updates) {
    f << u.index << ',' << csv::format_double(u.schedule_time) << ',' << u.seq << ',' << u.samples
      << ',' << (u.buffer_full ? 1 : 0) << ',' << (u.acked ? 1 : 0) << ',' << u.retries << '\n';
  }
}

}  // namespace gpk::online
