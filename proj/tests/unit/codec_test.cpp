#include <gtest/gtest.h>

#include <cstring>

#include "magc/codec/codec.hpp"
#include "magc/error.hpp"
#include "test_util.hpp"

namespace magc {
namespace {

using testing::random_tensor;

MapRaster blocks_map(std::size_t size, std::size_t classes, std::size_t cell, std::size_t shift = 0) {
  MapRaster m(size, size, classes);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) m.at(y, x) = static_cast<std::uint8_t>(((x / cell) + (y / cell) * 3 + shift) % classes);
  return m;
}

bool bit_equal(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() && std::memcmp(a.ptr(), b.ptr(), a.numel() * sizeof(float)) == 0;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode{0};
}

TEST(Container, RoundTripsRandomHeaders) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    Container c;
    ContainerHeader& h = c.header;
    h.flags = static_cast<std::uint8_t>(rng.below(2));
    h.width = static_cast<std::uint32_t>(rng.next_u64());
    h.height = static_cast<std::uint32_t>(rng.next_u64());
    h.latent_c = static_cast<std::uint8_t>(rng.below(256));
    h.latent_h = static_cast<std::uint16_t>(rng.below(65536));
    h.latent_w = static_cast<std::uint16_t>(rng.below(65536));
    h.N = static_cast<std::uint16_t>(rng.below(65536));
    h.M = static_cast<std::uint16_t>(rng.below(65536));
    h.K = static_cast<std::uint8_t>(rng.below(6));
    h.lambda_index = static_cast<std::uint8_t>(rng.below(256));
    h.model_hash = rng.next_u64();
    c.hyper.resize(rng.below(20));
    for (auto& b : c.hyper) b = static_cast<std::uint8_t>(rng.below(256));
    for (int k = 0; k < h.K; ++k) {
      c.slices.emplace_back(rng.below(30));
      for (auto& b : c.slices.back()) b = static_cast<std::uint8_t>(rng.below(256));
    }
    const auto bytes = serialize_container(c);
    EXPECT_EQ(parse_container(bytes), c);
  }
}

TEST(Container, EmptyContainerIsHeaderPlusLengths) {
  Container c;
  c.header.K = 2;
  c.slices.resize(2);
  EXPECT_EQ(serialize_container(c).size(), kContainerHeaderBytes + 3 * 4);
}

TEST(Container, RejectsOtherVersions) {
  Container c;
  const auto good = serialize_container(c);
  auto bad = good;
  bad[4] = 2;
  EXPECT_EQ(code_of([&] { parse_container(bad); }), ErrorCode::kFormat);
  try {
    parse_container(bad);
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(Container, DetectsPayloadCorruptionAndTruncation) {
  Container c;
  c.header.K = 1;
  c.hyper = {1, 2, 3};
  c.slices = {{4, 5, 6, 7}};
  auto bytes = serialize_container(c);
  bytes.back() ^= 0x40;
  EXPECT_EQ(code_of([&] { parse_container(bytes); }), ErrorCode::kFormat);
  EXPECT_NO_THROW(parse_container(bytes, false));
  bytes.pop_back();
  EXPECT_EQ(code_of([&] { parse_container(bytes, false); }), ErrorCode::kFormat);
}

class CodecFixture : public ::testing::Test {
 protected:
  CodecFixture() : model_(LcmConfig::desk(), 3), map_(blocks_map(64, 4, 8)) {
    Rng rng(4);
    z0_ = random_tensor<float>({1, 4, 16, 16}, rng, -6.0, 6.0);
  }
  LcmModel model_;
  MapRaster map_;
  Tensor<float> z0_;
};

TEST_F(CodecFixture, RoundTripRecoversSymbolsAndReconstruction) {
  const auto enc = compress(model_, z0_, map_, 64, 64);
  const Container parsed = parse_container(enc.bytes);
  EXPECT_EQ(parsed, enc.container);
  EXPECT_EQ(parsed.header.K, 2);
  EXPECT_EQ(parsed.header.M, 16);
  EXPECT_TRUE(parsed.header.map_conditioned());
  const auto z_hat = decompress(enc.bytes, model_, map_);
  EXPECT_TRUE(bit_equal(z_hat, enc.z_hat));
  EXPECT_EQ(z_hat.shape(), z0_.shape());
}

TEST_F(CodecFixture, ReportedBppMatchesFileSize) {
  const auto enc = compress(model_, z0_, map_, 64, 64);
  EXPECT_EQ(enc.report.file_bytes, enc.bytes.size());
  EXPECT_DOUBLE_EQ(enc.report.bpp, 8.0 * enc.bytes.size() / (64.0 * 64.0));
  std::size_t bits = enc.report.header_bits + enc.report.hyper_bits;
  for (std::size_t s : enc.report.slice_bits) bits += s;
  EXPECT_EQ(bits, 8 * enc.bytes.size());
}

TEST_F(CodecFixture, CompressionIsDeterministic) {
  const auto a = compress(model_, z0_, map_, 64, 64);
  const auto b = compress(model_, z0_, map_, 64, 64);
  EXPECT_EQ(a.bytes, b.bytes);
  EXPECT_TRUE(bit_equal(decompress(a.bytes, model_, map_), decompress(b.bytes, model_, map_)));
}

TEST_F(CodecFixture, CorruptingASliceLeavesEarlierSlicesIntact) {
  const auto enc = compress(model_, z0_, map_, 64, 64);
  const auto clean = decode_latent(enc.container, model_, 2);
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Container bad = enc.container;
    const std::size_t j = 1;
    auto& s = bad.slices[j];
    s[rng.below(s.size())] ^= static_cast<std::uint8_t>(1 + rng.below(255));
    const auto reparsed = parse_container(serialize_container(bad), false);
    const auto partial = decode_latent(reparsed, model_, j);
    ASSERT_EQ(partial.y_slices.size(), j);
    EXPECT_TRUE(bit_equal(partial.h_hat, clean.h_hat));
    for (std::size_t i = 0; i < j; ++i) EXPECT_TRUE(bit_equal(partial.y_slices[i], clean.y_slices[i]));
  }
}

TEST_F(CodecFixture, WrongMapStillDecodesButChangesReconstruction) {
  const auto enc = compress(model_, z0_, map_, 64, 64);
  const auto other = blocks_map(64, 4, 16, 1);
  const auto z_hat = decompress(enc.bytes, model_, other);
  EXPECT_EQ(z_hat.shape(), enc.z_hat.shape());
  EXPECT_FALSE(bit_equal(z_hat, enc.z_hat));
}

TEST_F(CodecFixture, MapSizeMismatchIsRejected) {
  const auto enc = compress(model_, z0_, map_, 64, 64);
  EXPECT_EQ(code_of([&] { decompress(enc.bytes, model_, blocks_map(32, 4, 8)); }), ErrorCode::kUsage);
}

TEST_F(CodecFixture, DifferentWeightsAreRefused) {
  const auto enc = compress(model_, z0_, map_, 64, 64);
  const LcmModel other(LcmConfig::desk(), 99);
  EXPECT_EQ(code_of([&] { decompress(enc.bytes, other, map_); }), ErrorCode::kModelMismatch);
}

TEST_F(CodecFixture, CheckpointRoundTripPreservesHash) {
  const auto bytes = model_.checkpoint_bytes();
  const LcmModel loaded = LcmModel::from_checkpoint(bytes);
  EXPECT_EQ(loaded.hash(), model_.hash());
  EXPECT_EQ(loaded.config().slices, 2u);
  const auto enc = compress(model_, z0_, map_, 64, 64);
  EXPECT_TRUE(bit_equal(decompress(enc.bytes, loaded, map_), enc.z_hat));
}

TEST_F(CodecFixture, ShapeErrorsCarryStageLabel) {
  Rng rng(7);
  const auto bad = random_tensor<float>({1, 4, 12, 12}, rng);
  try {
    compress(model_, bad, map_, 48, 48);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("compress/"), std::string::npos) << e.what();
  }
}

TEST(CodecAblation, UnconditionedVariantUsesFlagAndRefusesCrossDecoding) {
  LcmConfig cfg = LcmConfig::desk();
  cfg.transform.use_map = false;
  const LcmModel plain(cfg, 3);
  const LcmModel conditioned(LcmConfig::desk(), 3);
  Rng rng(6);
  const auto z0 = random_tensor<float>({1, 4, 16, 16}, rng, -6.0, 6.0);
  const MapRaster map = blocks_map(64, 4, 8);
  const auto enc = compress(plain, z0, map, 64, 64);
  EXPECT_FALSE(enc.container.header.map_conditioned());
  EXPECT_TRUE(bit_equal(decompress(enc.bytes, plain, MapRaster()), enc.z_hat));
  EXPECT_EQ(code_of([&] { decompress(enc.bytes, conditioned, map); }), ErrorCode::kModelMismatch);
  EXPECT_NE(plain.hash(), conditioned.hash());
}

}  // namespace
}  // namespace magc
