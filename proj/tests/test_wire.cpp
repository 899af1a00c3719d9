#include <doctest.h>

#include <cmath>
#include <random>

#include "gpk/wire.hpp"
#include "test_support.hpp"

using namespace gpk;
using namespace gpk::wire;

namespace {

WireMessage random_message(std::mt19937_64& rng) {
  std::uniform_real_distribution<float> f(-4.0f, 4.0f);
  WireMessage m;
  m.seq = static_cast<std::uint32_t>(rng());
  switch (rng() % 3) {
    case 0: {
      SampleBatch b;
      b.samples.resize(rng() % 80);
      for (auto& s : b.samples) {
        for (auto& a : s.angles) a = f(rng);
        s.target = f(rng);
      }
      m.payload = std::move(b);
      break;
    }
    case 1: {
      std::vector<int> sizes{1 + static_cast<int>(rng() % 7)};
      const int hidden = static_cast<int>(rng() % 3);
      for (int i = 0; i < hidden; ++i) sizes.push_back(1 + static_cast<int>(rng() % 9));
      const bool cls = rng() % 2 == 0;
      sizes.push_back(cls ? 3 : 1);
      auto net = FeedforwardNet::random(sizes, Activation::Tanh, cls ? Activation::Softmax : Activation::Linear, rng());
      std::vector<FeatureRange> scaling;
      for (int i = 0; i < sizes.front(); ++i) scaling.push_back({-1.0 - std::abs(f(rng)), 2.0 + std::abs(f(rng))});
      net.set_input_scaling(std::move(scaling));
      m.payload = Weights{std::move(net)};
      break;
    }
    default:
      m.payload = Ack{static_cast<std::uint32_t>(rng()), rng() % 2 ? MessageType::SampleBatch : MessageType::Weights};
  }
  return m;
}

}  // namespace

TEST_CASE("randomized encode/decode round trips are bit exact") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 10000; ++i) {
    const auto msg = random_message(rng);
    const auto bytes = encode(msg);
    const auto back = decode(bytes);
    REQUIRE(back.ok());
    REQUIRE(back.message() == msg);
    REQUIRE(encode(back.message()) == bytes);
  }
}

TEST_CASE("one-sample batch payload is 30 bytes before the CRC") {
  WireMessage m{7, SampleBatch{{WireSample{{1, 2, 3, 4, 5, 6}, 0.5f}}}};
  const auto bytes = encode(m);
  CHECK(bytes.size() == kHeaderSize + 30 + kCrcSize);
  // 50-sample batches stay under a typical MTU.
  WireMessage big{8, SampleBatch{std::vector<WireSample>(50)}};
  CHECK(encode(big).size() < 1500);
}

TEST_CASE("header layout is little-endian") {
  const auto bytes = encode(WireMessage{0x01020304, Ack{5, MessageType::Weights}});
  REQUIRE(bytes.size() == kHeaderSize + 5 + kCrcSize);
  CHECK(bytes[0] == 0x4E);
  CHECK(bytes[1] == 0x4E);
  CHECK(bytes[2] == 0x50);
  CHECK(bytes[3] == 0x47);
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 3);
  CHECK(bytes[6] == 0x04);
  CHECK(bytes[9] == 0x01);
  CHECK(bytes[10] == 5);
  CHECK(bytes[14] == 2);
}

TEST_CASE("crc matches the standard check value") {
  const std::string s = "123456789";
  CHECK(crc32(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())) == 0xCBF43926u);
}

TEST_CASE("any single-byte corruption is detected") {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 60; ++i) {
    const auto bytes = encode(random_message(rng));
    for (std::size_t pos = 0; pos < bytes.size(); ++pos) {
      auto bad = bytes;
      bad[pos] ^= static_cast<std::uint8_t>(1 + rng() % 255);
      const auto r = decode(bad);
      REQUIRE_FALSE(r.ok());
      CHECK(r.error() == DecodeError::BadCrc);
    }
  }
}

TEST_CASE("typed decode errors") {
  CHECK(decode(std::vector<std::uint8_t>(5)).error() == DecodeError::Truncated);

  auto with_crc = [](std::vector<std::uint8_t> body) {
    const auto c = crc32(body);
    for (int i = 0; i < 4; ++i) body.push_back(static_cast<std::uint8_t>(c >> (8 * i)));
    return body;
  };
  auto bytes = encode(WireMessage{1, Ack{}});
  std::vector<std::uint8_t> body(bytes.begin(), bytes.end() - 4);

  auto b = body;
  b[0] = 0;
  CHECK(decode(with_crc(b)).error() == DecodeError::BadMagic);
  b = body;
  b[4] = 2;
  CHECK(decode(with_crc(b)).error() == DecodeError::BadVersion);
  b = body;
  b[5] = 9;
  CHECK(decode(with_crc(b)).error() == DecodeError::UnknownType);
  b = body;
  b.pop_back();
  CHECK(decode(with_crc(b)).error() == DecodeError::LengthMismatch);

  // Batch whose declared count disagrees with the payload.
  auto batch = encode(WireMessage{2, SampleBatch{std::vector<WireSample>(3)}});
  std::vector<std::uint8_t> bb(batch.begin(), batch.end() - 4);
  bb[10] = 4;
  CHECK(decode(with_crc(bb)).error() == DecodeError::LengthMismatch);

  // Truncated WEIGHTS with a recomputed CRC still fails on length.
  auto w = encode(WireMessage{3, Weights{make_regression_net({8, 6, 3}, 1)}});
  std::vector<std::uint8_t> wb(w.begin(), w.end() - 12);
  CHECK(decode(with_crc(wb)).error() == DecodeError::LengthMismatch);
}

TEST_CASE("oversized batches are refused at encode time") {
  WireMessage m{1, SampleBatch{std::vector<WireSample>(kMaxBatchSamples + 1)}};
  CHECK_THROWS((void)encode(m));
}

TEST_CASE("model files hold a seq-0 WEIGHTS record") {
  const auto dir = test::scratch_dir("nnw");
  const auto net = make_classifier_net({8, 6, 3}, 3);
  save_network(net, dir / "m.nnw");
  CHECK(load_network(dir / "m.nnw") == net);
  const auto raw = test::read_text(dir / "m.nnw");
  const auto expected = encode(WireMessage{0, Weights{net}});
  CHECK(std::vector<std::uint8_t>(raw.begin(), raw.end()) == expected);

  test::write_text(dir / "bad.nnw", "not a model");
  CHECK_THROWS((void)load_network(dir / "bad.nnw"));
  const auto ack = encode(WireMessage{0, Ack{}});
  test::write_text(dir / "ack.nnw", std::string(ack.begin(), ack.end()));
  CHECK_THROWS((void)load_network(dir / "ack.nnw"));
}
