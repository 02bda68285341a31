#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "magc/autoencoder/autoencoder.hpp"
#include "magc/error.hpp"
#include "magc/io/dataset.hpp"
#include "magc/tensor/tape.hpp"

namespace magc {
namespace {

AutoencoderConfig tiny(std::size_t factor) {
  AutoencoderConfig c;
  c.factor = factor;
  c.base_width = 4;
  c.max_width = 8;
  return c;
}

std::vector<Image> scenes(std::size_t n, std::size_t size, std::uint64_t seed) {
  SyntheticSceneSpec spec;
  spec.width = spec.height = size;
  Rng rng(seed);
  std::vector<Image> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_scene(spec, rng).image);
  return out;
}

TEST(Autoencoder, LatentShapes) {
  const PixelAutoencoder ae(tiny(8), 1);
  EXPECT_EQ(ae.encode_image(Image(256, 256, 0.5f)).shape(), (Shape{1, 4, 32, 32}));
  EXPECT_EQ(ae.encode_image(Image(64, 64, 0.5f)).shape(), (Shape{1, 4, 8, 8}));
  const PixelAutoencoder desk(AutoencoderConfig::desk(), 1);
  EXPECT_EQ(desk.encode_image(Image(64, 64, 0.5f)).shape(), (Shape{1, 4, 16, 16}));
}

TEST(Autoencoder, DecodeRestoresDimensions) {
  const PixelAutoencoder ae(tiny(8), 2);
  const Image x(48, 40, 0.3f);
  const Image y = ae.decode_latent(ae.encode_image(x));
  EXPECT_EQ(y.width, 48u);
  EXPECT_EQ(y.height, 40u);
}

TEST(Autoencoder, RejectsIndivisibleImagesAndWrongLatents) {
  const PixelAutoencoder ae(tiny(8), 3);
  EXPECT_THROW(ae.encode_image(Image(60, 64)), Error);
  EXPECT_THROW(ae.decode_latent(Tensor<float>({1, 3, 8, 8})), Error);
  AutoencoderConfig bad = tiny(6);
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Autoencoder, ZeroLatentDecodesToFiniteImage) {
  const PixelAutoencoder ae(tiny(4), 4);
  const Image y = ae.decode_latent(Tensor<float>({1, 4, 4, 4}));
  for (float v : y.data) {
    ASSERT_TRUE(std::isfinite(v));
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
}

TEST(Autoencoder, TrainingHalvesTheLoss) {
  const auto images = scenes(8, 32, 5);
  PixelAutoencoder ae(tiny(4), 5);
  AutoencoderTrainOptions o;
  o.steps = 200;
  o.batch = 4;
  o.lr = 3e-3;
  o.warmup = 10;
  const TrainTrace trace = train_autoencoder(ae, images, o);
  ASSERT_EQ(trace.loss.size(), 200u);
  double head = 0, tail = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    head += trace.loss[i];
    tail += trace.loss[trace.loss.size() - 1 - i];
  }
  EXPECT_LT(tail, 0.5 * head);
  EXPECT_EQ(tape<float>().size(), 0u);
}

TEST(Autoencoder, FixedSeedGivesIdenticalTrace) {
  const auto images = scenes(4, 16, 6);
  AutoencoderTrainOptions o;
  o.steps = 15;
  o.batch = 2;
  o.seed = 9;
  PixelAutoencoder a(tiny(4), 7), b(tiny(4), 7);
  EXPECT_EQ(train_autoencoder(a, images, o).loss, train_autoencoder(b, images, o).loss);
  EXPECT_EQ(a.checkpoint_bytes(), b.checkpoint_bytes());
}

TEST(Autoencoder, LatentGainCalibratesSpread) {
  const auto images = scenes(4, 16, 8);
  PixelAutoencoder ae(tiny(4), 8);
  AutoencoderTrainOptions o;
  o.steps = 5;
  o.batch = 2;
  o.target_latent_std = 5.0;
  train_autoencoder(ae, images, o);
  EXPECT_NEAR(latent_std(ae, images), 5.0, 1e-3);
  PixelAutoencoder plain = PixelAutoencoder::from_checkpoint(ae.checkpoint_bytes());
  plain.set_latent_gain(1.0f);
  const Image with_gain = ae.decode_latent(ae.encode_image(images[0]));
  const Image without = plain.decode_latent(plain.encode_image(images[0]));
  for (std::size_t i = 0; i < with_gain.data.size(); ++i) ASSERT_NEAR(with_gain.data[i], without.data[i], 1e-4);
}

TEST(Autoencoder, CheckpointRoundTrip) {
  PixelAutoencoder ae(tiny(4), 10);
  ae.set_latent_gain(2.5f);
  const PixelAutoencoder back = PixelAutoencoder::from_checkpoint(ae.checkpoint_bytes());
  EXPECT_EQ(back.hash(), ae.hash());
  EXPECT_FLOAT_EQ(back.latent_gain(), 2.5f);
  EXPECT_EQ(back.config().factor, 4u);
  bool found = false;
  for (const auto& p : ae.params()) {
    EXPECT_TRUE(p.name.rfind("vae.enc.", 0) == 0 || p.name.rfind("vae.dec.", 0) == 0) << p.name;
    if (p.name == "vae.enc.latent_gain") found = !p.trainable;
  }
  EXPECT_TRUE(found);
}

TEST(Autoencoder, DivergenceAbortsWithTrace) {
  auto images = scenes(2, 16, 11);
  images[1].data[0] = std::numeric_limits<float>::quiet_NaN();
  PixelAutoencoder ae(tiny(4), 11);
  AutoencoderTrainOptions o;
  o.steps = 50;
  o.batch = 2;
  try {
    train_autoencoder(ae, images, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumeric);
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
  EXPECT_EQ(tape<float>().size(), 0u);
}

}  // namespace
}  // namespace magc
