#include "gpk/wire.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "gpk/error.hpp"

namespace gpk::wire {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put_le(v, 2); }
  void u32(std::uint32_t v) { put_le(v, 4); }
  void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v), 4); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v), 8); }

  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  [[nodiscard]] std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  std::uint8_t u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
  float f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(get_le(4))); }
  double f64() { return std::bit_cast<double>(get_le(8)); }

 private:
  // Callers check `remaining()` before reading.
  std::uint64_t get_le(int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void write_weights(Writer& w, const FeedforwardNet& net) {
  net.validate();
  const auto& sizes = net.layer_sizes();
  if (sizes.size() > std::numeric_limits<std::uint8_t>::max()) throw ContractError("too many layers");
  w.u8(static_cast<std::uint8_t>(sizes.size()));
  for (int s : sizes) {
    if (s > std::numeric_limits<std::uint16_t>::max()) throw ContractError("layer too wide");
    w.u16(static_cast<std::uint16_t>(s));
  }
  w.u8(static_cast<std::uint8_t>(net.hidden_activation()));
  w.u8(static_cast<std::uint8_t>(net.output_activation()));
  for (const auto& r : net.input_scaling()) {
    w.f64(r.min);
    w.f64(r.max);
  }
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const auto& l = net.layer(i);
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.f64(l.weights(r, c));
    }
    for (Eigen::Index r = 0; r < l.biases.size(); ++r) w.f64(l.biases(r));
  }
}

bool valid_activation(std::uint8_t v) { return v <= static_cast<std::uint8_t>(Activation::Softmax); }

DecodeResult read_weights(Reader& r, std::uint32_t seq) {
  if (r.remaining() < 1) return DecodeError::LengthMismatch;
  const std::size_t n_sizes = r.u8();
  if (n_sizes < 2) return DecodeError::BadTopology;
  if (r.remaining() < 2 * n_sizes + 2) return DecodeError::LengthMismatch;
  std::vector<int> sizes;
  for (std::size_t i = 0; i < n_sizes; ++i) {
    const int s = r.u16();
    if (s == 0) return DecodeError::BadTopology;
    sizes.push_back(s);
  }
  const std::uint8_t hidden = r.u8();
  const std::uint8_t output = r.u8();
  if (!valid_activation(hidden) || !valid_activation(output) ||
      hidden == static_cast<std::uint8_t>(Activation::Softmax)) {
    return DecodeError::BadTopology;
  }

  std::size_t doubles = 2 * static_cast<std::size_t>(sizes.front());
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    doubles += static_cast<std::size_t>(sizes[i + 1]) * (static_cast<std::size_t>(sizes[i]) + 1);
  }
  if (r.remaining() != 8 * doubles) return DecodeError::LengthMismatch;

  FeedforwardNet net(sizes, static_cast<Activation>(hidden), static_cast<Activation>(output));
  std::vector<FeatureRange> scaling(static_cast<std::size_t>(sizes.front()));
  for (auto& s : scaling) {
    s.min = r.f64();
    s.max = r.f64();
    if (!(s.min < s.max) || !std::isfinite(s.min) || !std::isfinite(s.max)) {
      return DecodeError::BadTopology;
    }
  }
  net.set_input_scaling(std::move(scaling));
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    auto& l = net.layer(i);
    for (Eigen::Index row = 0; row < l.weights.rows(); ++row) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(row, c) = r.f64();
    }
    for (Eigen::Index row = 0; row < l.biases.size(); ++row) l.biases(row) = r.f64();
  }
  return WireMessage{seq, Weights{std::move(net)}};
}

}  // namespace

MessageType WireMessage::type() const noexcept {
  if (std::holds_alternative<SampleBatch>(payload)) return MessageType::SampleBatch;
  if (std::holds_alternative<Weights>(payload)) return MessageType::Weights;
  return MessageType::Ack;
}

std::string_view to_string(DecodeError e) noexcept {
  switch (e) {
    case DecodeError::Truncated:
      return "truncated";
    case DecodeError::BadCrc:
      return "bad_crc";
    case DecodeError::BadMagic:
      return "bad_magic";
    case DecodeError::BadVersion:
      return "bad_version";
    case DecodeError::UnknownType:
      return "unknown_type";
    case DecodeError::LengthMismatch:
      return "length_mismatch";
    case DecodeError::BadTopology:
      return "bad_topology";
  }
  return "?";
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; datagrams are far below that limit.
  crc = ::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode(const WireMessage& msg) {
  Writer w;
  w.u32(kMagic);
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(msg.type()));
  w.u32(msg.seq);
  std::visit(
      [&w](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, SampleBatch>) {
          if (p.samples.size() > kMaxBatchSamples) {
            throw ContractError("sample batch exceeds " + std::to_string(kMaxBatchSamples) + " samples");
          }
          w.u16(static_cast<std::uint16_t>(p.samples.size()));
          for (const auto& s : p.samples) {
            for (float a : s.angles) w.f32(a);
            w.f32(s.target);
          }
        } else if constexpr (std::is_same_v<T, Weights>) {
          write_weights(w, p.net);
        } else {
          w.u32(p.acked_seq);
          w.u8(static_cast<std::uint8_t>(p.acked_type));
        }
      },
      msg.payload);
  const std::uint32_t crc = crc32(w.bytes());
  w.u32(crc);
  return std::move(w.bytes());
}

DecodeResult decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize + kCrcSize) return DecodeError::Truncated;
  const auto body = bytes.first(bytes.size() - kCrcSize);
  Reader crc_reader(bytes.last(kCrcSize));
  if (crc_reader.u32() != crc32(body)) return DecodeError::BadCrc;

  Reader r(body);
  if (r.u32() != kMagic) return DecodeError::BadMagic;
  if (r.u8() != kVersion) return DecodeError::BadVersion;
  const std::uint8_t type = r.u8();
  const std::uint32_t seq = r.u32();

  switch (static_cast<MessageType>(type)) {
    case MessageType::SampleBatch: {
      if (r.remaining() < 2) return DecodeError::LengthMismatch;
      const std::size_t count = r.u16();
      if (r.remaining() != count * kSampleSize) return DecodeError::LengthMismatch;
      SampleBatch batch;
      batch.samples.resize(count);
      for (auto& s : batch.samples) {
        for (auto& a : s.angles) a = r.f32();
        s.target = r.f32();
      }
      return WireMessage{seq, std::move(batch)};
    }
    case MessageType::Weights:
      return read_weights(r, seq);
    case MessageType::Ack: {
      if (r.remaining() != 5) return DecodeError::LengthMismatch;
      Ack ack;
      ack.acked_seq = r.u32();
      const std::uint8_t t = r.u8();
      if (t < 1 || t > 3) return DecodeError::UnknownType;
      ack.acked_type = static_cast<MessageType>(t);
      return WireMessage{seq, ack};
    }
  }
  return DecodeError::UnknownType;
}

void save_network(const FeedforwardNet& net, const std::filesystem::path& path) {
  const auto bytes = encode(WireMessage{0, Weights{net}});
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write failed for " + path.string());
}

FeedforwardNet load_network(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open model file " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  auto result = decode(bytes);
  if (!result) {
    throw ParseError(0, path.string() + ": invalid model file (" + std::string(to_string(result.error())) + ")");
  }
  auto* weights = std::get_if<Weights>(&result.message().payload);
  if (!weights) throw ParseError(0, path.string() + ": not a WEIGHTS record");
  return std::move(weights->net);
}

}  // namespace gpk::wire
