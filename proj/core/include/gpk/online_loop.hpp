#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gpk/control_blend.hpp"
#include "gpk/error.hpp"
#include "gpk/estimators.hpp"
#include "gpk/gait_data.hpp"
#include "gpk/lm_training.hpp"
#include "gpk/metrics.hpp"
#include "gpk/wire.hpp"

namespace gpk::online {

/// Fixed-capacity ring; once full, each push overwrites the oldest element.
template <typename T>
class CircularBuffer {
 public:
  explicit CircularBuffer(std::size_t capacity) : storage_(capacity) {
    if (capacity == 0) throw ContractError("circular buffer capacity must be > 0");
  }

  void push(T value) {
    storage_[cursor_] = std::move(value);
    cursor_ = (cursor_ + 1) % storage_.size();
    if (size_ < storage_.size()) ++size_;
  }

  /// Contents from oldest to newest.
  [[nodiscard]] std::vector<T> snapshot() const {
    std::vector<T> out;
    out.reserve(size_);
    const std::size_t start = (cursor_ + storage_.size() - size_) % storage_.size();
    for (std::size_t i = 0; i < size_; ++i) out.push_back(storage_[(start + i) % storage_.size()]);
    return out;
  }

  [[nodiscard]] std::size_t size() const noexcept { return size_; }
  [[nodiscard]] std::size_t capacity() const noexcept { return storage_.size(); }
  [[nodiscard]] bool full() const noexcept { return size_ == storage_.size(); }

 private:
  std::vector<T> storage_;
  std::size_t cursor_ = 0;
  std::size_t size_ = 0;
};

struct BufferedSample {
  JointAngles angles{};
  double target = 0.0;
};

/// Chronological copy of a buffer snapshot as a dataset (t = index / sample_rate).
[[nodiscard]] GaitDataset to_dataset(std::span<const BufferedSample> samples, double sample_rate);

/// Periodic training trigger. A due instant found busy is skipped, never queued.
class Scheduler {
 public:
  enum class Action { Idle, Train, Postponed };

  explicit Scheduler(double period_s, double first_due_s = -1.0);

  Action poll(double now, bool busy);

  [[nodiscard]] double period() const noexcept { return period_; }
  [[nodiscard]] double next_due() const noexcept { return next_due_; }

 private:
  double period_;
  double next_due_;
};

/// Network shared between the receiver (single writer) and the control tick (reader).
/// Readers always get a complete network; replacement bumps the generation counter.
class NetSlot {
 public:
  explicit NetSlot(FeedforwardNet initial);

  [[nodiscard]] std::shared_ptr<const FeedforwardNet> load() const;
  [[nodiscard]] std::uint64_t generation() const;
  /// Network and its generation, read together.
  [[nodiscard]] std::pair<std::shared_ptr<const FeedforwardNet>, std::uint64_t> acquire() const;
  void store(FeedforwardNet net);

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const FeedforwardNet> net_;
  std::uint64_t generation_ = 0;
};

// ---------------------------------------------------------------------------
// Datagram transports

class DatagramEndpoint {
 public:
  virtual ~DatagramEndpoint() = default;
  /// Best effort; returns false when the datagram could not be handed to the transport.
  virtual bool send(std::span<const std::uint8_t> datagram) = 0;
  /// Never blocks.
  virtual std::optional<std::vector<std::uint8_t>> try_receive() = 0;
};

/// Returns false to drop the datagram; may modify it in place.
using FaultInjector = std::function<bool(std::vector<std::uint8_t>&)>;

/// In-memory, in-order pair of endpoints for single-process runs.
class LoopbackLink {
 public:
  explicit LoopbackLink(std::size_t queue_limit = 4096);

  DatagramEndpoint& control_side() noexcept { return control_; }
  DatagramEndpoint& trainer_side() noexcept { return trainer_; }

  /// Applied to datagrams travelling trainer -> control / control -> trainer.
  void set_fault_to_control(FaultInjector f) { to_control_.fault = std::move(f); }
  void set_fault_to_trainer(FaultInjector f) { to_trainer_.fault = std::move(f); }

 private:
  struct Queue {
    std::mutex mutex;
    std::deque<std::vector<std::uint8_t>> items;
    FaultInjector fault;
    std::size_t limit = 0;
  };

  class Side final : public DatagramEndpoint {
   public:
    Side(Queue& out, Queue& in) : out_(out), in_(in) {}
    bool send(std::span<const std::uint8_t> datagram) override;
    std::optional<std::vector<std::uint8_t>> try_receive() override;

   private:
    Queue& out_;
    Queue& in_;
  };

  Queue to_control_;
  Queue to_trainer_;
  Side control_{to_trainer_, to_control_};
  Side trainer_{to_control_, to_trainer_};
};

/// IPv4 UDP socket bound to `local` ("host:port") sending to `remote`.
class UdpEndpoint final : public DatagramEndpoint {
 public:
  UdpEndpoint(const std::string& local, const std::string& remote);
  ~UdpEndpoint() override;
  UdpEndpoint(const UdpEndpoint&) = delete;
  UdpEndpoint& operator=(const UdpEndpoint&) = delete;

  bool send(std::span<const std::uint8_t> datagram) override;
  std::optional<std::vector<std::uint8_t>> try_receive() override;
  /// Waits up to `timeout_ms` for a datagram to become readable.
  bool wait_readable(int timeout_ms) const;

 private:
  int fd_ = -1;
  std::vector<std::uint8_t> remote_addr_;
};

inline constexpr const char* kDefaultControlAddr = "127.0.0.1:47001";
inline constexpr const char* kDefaultTrainerAddr = "127.0.0.1:47002";

/// `GPK_CTRL_ADDR` / `GPK_TRAIN_ADDR` when set, defaults otherwise.
[[nodiscard]] std::string control_address_from_env();
[[nodiscard]] std::string trainer_address_from_env();

// ---------------------------------------------------------------------------
// Control role

struct ControlConfig {
  ControllerConfig controller{};
  /// Closed loop: the estimate drives Blend. Shadow: the controller only sees the
  /// ground-truth phase and the estimate is recorded but unused.
  bool closed_loop = false;
  double theta = kDefaultTheta;
  std::size_t batch_size = 50;
  double sample_rate = 100.0;
};

struct ControlTraceRow {
  double t = 0.0;
  double phi_target = 0.0;
  double y_estimate = 0.0;
  PhaseLabel estimate_label = PhaseLabel::Double;
  std::uint64_t generation = 0;
  double phi_control = 0.0;
  TorqueCommand torque{};
};

struct ControlStats {
  std::atomic<std::size_t> batches_sent{0};
  std::atomic<std::size_t> batches_acked{0};
  std::atomic<std::size_t> send_failures{0};
  std::atomic<std::size_t> weights_applied{0};
  std::atomic<std::size_t> datagrams_dropped{0};
  std::atomic<std::size_t> estimator_errors{0};
};

class ControlProcess {
 public:
  ControlProcess(ControlConfig config, FeedforwardNet initial, DatagramEndpoint& link);

  /// Drains received datagrams: WEIGHTS replace the active network and are acknowledged.
  /// Safe to call from a receiver thread concurrently with `tick`.
  void service_network();

  /// One control period. When `poll_network` is set, pending datagrams are serviced first
  /// (single-threaded operation).
  void tick(const GaitSample& sample, bool poll_network = true);

  /// Sends the partially filled batch, if any.
  void flush();

  [[nodiscard]] const std::vector<ControlTraceRow>& trace() const noexcept { return trace_; }
  [[nodiscard]] const ControlStats& stats() const noexcept { return stats_; }
  [[nodiscard]] std::uint64_t generation() const { return slot_.generation(); }
  [[nodiscard]] std::shared_ptr<const FeedforwardNet> active_net() const { return slot_.load(); }

 private:
  void send_batch();

  ControlConfig config_;
  NetSlot slot_;
  DatagramEndpoint& link_;
  ControllerState controller_state_{};
  std::vector<wire::WireSample> pending_;
  std::vector<ControlTraceRow> trace_;
  std::atomic<std::uint32_t> seq_{1};
  std::uint32_t last_weights_seq_ = 0;  // receiver side only
  double last_estimate_ = 0.0;
  ControlStats stats_;
};

// ---------------------------------------------------------------------------
// Trainer role

struct TrainerConfig {
  SeqTrainConfig seq{};
  double period = 20.0;
  double sample_rate = 100.0;
  std::vector<int> hidden = default_hidden_sizes();
  std::uint64_t seed = 1;
  double ack_timeout = 0.1;
  /// Run training on a worker thread (two-process mode) instead of inline.
  bool async = false;

  [[nodiscard]] std::size_t buffer_capacity() const;
  void validate() const;
};

struct WeightUpdateRecord {
  std::size_t index = 0;
  double schedule_time = 0.0;
  std::uint32_t seq = 0;
  std::size_t samples = 0;
  bool buffer_full = false;
  bool acked = false;
  int retries = 0;
};

struct TrainerStats {
  std::size_t samples_received = 0;
  std::size_t batches_received = 0;
  std::size_t datagrams_dropped = 0;
  std::size_t trainings = 0;
  std::size_t skipped_empty = 0;
  std::size_t postponed = 0;
  std::size_t send_failures = 0;
};

/// Network both roles start from: small random weights, input scaling over the joint ROM.
[[nodiscard]] FeedforwardNet initial_online_net(const std::vector<int>& hidden, std::uint64_t seed);

class TrainerProcess {
 public:
  TrainerProcess(TrainerConfig config, DatagramEndpoint& link);
  ~TrainerProcess();
  TrainerProcess(const TrainerProcess&) = delete;
  TrainerProcess& operator=(const TrainerProcess&) = delete;

  /// Drains datagrams, runs the scheduler at `schedule_time` and handles ACK timeouts
  /// against `wall_time`.
  void service(double schedule_time, double wall_time);

  /// Seconds of samples received so far.
  [[nodiscard]] double sample_clock() const noexcept;

  /// Blocks until an in-flight asynchronous training finishes and its weights are sent.
  void drain(double wall_time);

  [[nodiscard]] const std::vector<WeightUpdateRecord>& updates() const noexcept { return updates_; }
  [[nodiscard]] const TrainerStats& stats() const noexcept { return stats_; }
  [[nodiscard]] const FeedforwardNet& network() const noexcept { return net_; }
  [[nodiscard]] const CircularBuffer<BufferedSample>& buffer() const noexcept { return buffer_; }
  /// Every WEIGHTS datagram sent, in order (retries included once per send).
  [[nodiscard]] const std::vector<std::vector<std::uint8_t>>& sent_weights() const noexcept {
    return sent_weights_;
  }

 private:
  void handle(const wire::WireMessage& msg);
  void start_training(double schedule_time, double wall_time);
  void finish_training(FeedforwardNet trained, double wall_time);
  void send_weights(double wall_time);
  void check_ack_timeout(double wall_time);
  void send(const std::vector<std::uint8_t>& bytes);

  TrainerConfig config_;
  DatagramEndpoint& link_;
  CircularBuffer<BufferedSample> buffer_;
  Scheduler scheduler_;
  FeedforwardNet net_;
  bool scaling_configured_ = false;
  std::uint32_t seq_ = 1;
  std::future<FeedforwardNet> job_;
  struct Pending {
    std::uint32_t seq = 0;
    std::vector<std::uint8_t> bytes;
    double sent_at = 0.0;
    std::size_t record = 0;
  };
  std::optional<Pending> pending_;
  std::vector<WeightUpdateRecord> updates_;
  std::vector<std::vector<std::uint8_t>> sent_weights_;
  TrainerStats stats_;
};

// ---------------------------------------------------------------------------
// Runs

struct OnlineConfig {
  ControlConfig control{};
  TrainerConfig trainer{};
  bool trainer_enabled = true;
  double metrics_window = 5.0;
  double report_after = 10.0;
};

struct OnlineRunResult {
  std::vector<ControlTraceRow> trace;
  std::vector<WeightUpdateRecord> updates;
  std::vector<std::vector<std::uint8_t>> weight_datagrams;
  std::vector<WindowedPoint> metrics;
  double mean_window_accuracy_after = 0.0;
  std::size_t buffer_fill_at_first_training = 0;
  std::size_t weights_applied = 0;
  std::size_t control_dropped = 0;
  std::size_t batches_sent = 0;
  std::size_t batches_acked = 0;
  TrainerStats trainer_stats;
};

/// Deterministic single-process run: both roles exchange real datagrams over a
/// `LoopbackLink` and are stepped by one simulated clock.
[[nodiscard]] OnlineRunResult run_loopback(const GaitDataset& stream, const OnlineConfig& config,
                                           LoopbackLink* link = nullptr);

/// Control role over UDP. `realtime_factor` > 0 paces ticks at that multiple of real
/// time; 0 runs as fast as possible. Never blocks on the trainer.
[[nodiscard]] OnlineRunResult run_control_udp(const GaitDataset& stream, const OnlineConfig& config,
                                              const std::string& local, const std::string& remote,
                                              double realtime_factor);

struct TrainerRunOptions {
  double idle_timeout_s = 2.0;  // stop after this long without datagrams (once started)
  double max_wall_s = 900.0;
  std::atomic<bool>* stop = nullptr;
};

/// Trainer role over UDP; returns its update log.
[[nodiscard]] std::vector<WeightUpdateRecord> run_trainer_udp(const TrainerConfig& config,
                                                              const std::string& local,
                                                              const std::string& remote,
                                                              const TrainerRunOptions& options,
                                                              TrainerStats* stats = nullptr);

/// Windowed / cumulative metrics of a control trace.
[[nodiscard]] std::vector<WindowedPoint> trace_metrics(std::span<const ControlTraceRow> trace,
                                                       double window_s, double sample_rate);

void save_trace_csv(std::span<const ControlTraceRow> trace, const std::filesystem::path& path);
void save_updates_csv(std::span<const WeightUpdateRecord> updates, const std::filesystem::path& path);

}  // namespace gpk::online
