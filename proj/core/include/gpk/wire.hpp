#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "gpk/estimators.hpp"

namespace gpk::wire {

// Datagram layout (all integers little-endian):
//
//   magic u32 = 0x47504E4E | version u8 = 1 | msg_type u8 | seq u32 | payload | crc32 u32
//
// The CRC (IEEE 802.3, as in zlib) covers header and payload.
//
//   SAMPLE_BATCH: count u16, then count x (6 x f32 angles, f32 target)
//   WEIGHTS:      n_sizes u8, n_sizes x u16 layer sizes, hidden act u8, output act u8,
//                 inputs x (f64 min, f64 max) input scaling, then per layer the f64
//                 weights (row-major, out x in) followed by the f64 biases
//   ACK:          acked seq u32, acked msg_type u8

inline constexpr std::uint32_t kMagic = 0x47504E4E;  // "GPNN"
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 10;
inline constexpr std::size_t kCrcSize = 4;
inline constexpr std::size_t kSampleSize = 7 * 4;
/// Largest batch that fits a single UDP datagram (65507 payload bytes).
inline constexpr std::size_t kMaxBatchSamples = (65507 - kHeaderSize - kCrcSize - 2) / kSampleSize;

enum class MessageType : std::uint8_t { SampleBatch = 1, Weights = 2, Ack = 3 };

struct WireSample {
  std::array<float, 6> angles{};
  float target = 0.0f;

  friend bool operator==(const WireSample&, const WireSample&) = default;
};

struct SampleBatch {
  std::vector<WireSample> samples;

  friend bool operator==(const SampleBatch&, const SampleBatch&) = default;
};

struct Weights {
  FeedforwardNet net;

  friend bool operator==(const Weights& a, const Weights& b) { return a.net == b.net; }
};

struct Ack {
  std::uint32_t acked_seq = 0;
  MessageType acked_type = MessageType::SampleBatch;

  friend bool operator==(const Ack&, const Ack&) = default;
};

struct WireMessage {
  std::uint32_t seq = 0;
  std::variant<SampleBatch, Weights, Ack> payload;

  [[nodiscard]] MessageType type() const noexcept;

  friend bool operator==(const WireMessage&, const WireMessage&) = default;
};

enum class DecodeError {
  Truncated,
  BadCrc,
  BadMagic,
  BadVersion,
  UnknownType,
  LengthMismatch,
  BadTopology,
};

[[nodiscard]] std::string_view to_string(DecodeError e) noexcept;

/// Either a decoded message or the reason the datagram was rejected.
class DecodeResult {
 public:
  DecodeResult(WireMessage m) : value_(std::move(m)) {}  // NOLINT(google-explicit-constructor)
  DecodeResult(DecodeError e) : value_(e) {}              // NOLINT(google-explicit-constructor)

  [[nodiscard]] bool ok() const noexcept { return std::holds_alternative<WireMessage>(value_); }
  explicit operator bool() const noexcept { return ok(); }
  [[nodiscard]] const WireMessage& message() const { return std::get<WireMessage>(value_); }
  [[nodiscard]] WireMessage& message() { return std::get<WireMessage>(value_); }
  [[nodiscard]] DecodeError error() const { return std::get<DecodeError>(value_); }

 private:
  std::variant<WireMessage, DecodeError> value_;
};

/// Serialises `msg`. Throws ContractError when a batch exceeds `kMaxBatchSamples` or the
/// network topology does not fit the field widths.
[[nodiscard]] std::vector<std::uint8_t> encode(const WireMessage& msg);

[[nodiscard]] DecodeResult decode(std::span<const std::uint8_t> bytes);

[[nodiscard]] std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept;

/// Model files (`.nnw`) hold exactly the bytes of a WEIGHTS datagram with seq 0.
void save_network(const FeedforwardNet& net, const std::filesystem::path& path);
[[nodiscard]] FeedforwardNet load_network(const std::filesystem::path& path);

}  // namespace gpk::wire
