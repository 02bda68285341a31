#include <gtest/gtest.h>

#include "magc/tensor/grad_check.hpp"
#include "magc/tensor/ops.hpp"
#include "test_util.hpp"

namespace magc {
namespace {

using testing::random_tensor;

void expect_passes(const GradCheckReport& r, double tol = 1e-4) {
  EXPECT_GT(r.checked, 0u);
  EXPECT_LT(r.max_rel_error, tol) << r.worst;
}

// Projects onto a fixed random direction so every output element matters.
Tensor<double> project(const Tensor<double>& y, std::uint64_t seed) {
  Rng rng(seed);
  return weighted_sum(y, random_tensor<double>(y.shape(), rng));
}

TEST(GradCheck, LinearFunctionIsExact) {
  Rng rng(1);
  std::vector<Tensor<double>> in{random_tensor<double>({3, 4}, rng)};
  const auto r = grad_check([&] { return project(scale(in[0], 2.5), 9); }, in);
  expect_passes(r, 1e-8);
}

TEST(GradCheck, Conv2dStridedAndPadded) {
  Rng rng(2);
  std::vector<Tensor<double>> in{random_tensor<double>({2, 3, 8, 8}, rng), random_tensor<double>({4, 3, 3, 3}, rng),
                                 random_tensor<double>({4}, rng)};
  for (PadMode mode : {PadMode::kZeros, PadMode::kReplicate}) {
    ConvOptions opt{2, 1, mode};
    expect_passes(grad_check([&] { return project(conv2d(in[0], in[1], in[2], opt), 3); }, in));
  }
}

TEST(GradCheck, Conv2dPointwise) {
  Rng rng(3);
  std::vector<Tensor<double>> in{random_tensor<double>({2, 3, 4, 5}, rng), random_tensor<double>({2, 3, 1, 1}, rng),
                                 random_tensor<double>({2}, rng)};
  expect_passes(grad_check([&] { return project(conv2d(in[0], in[1], in[2]), 4); }, in));
}

TEST(GradCheck, BatchNormTrain) {
  Rng rng(4);
  std::vector<Tensor<double>> in{random_tensor<double>({3, 2, 3, 3}, rng)};
  BatchNormStats<double> stats{Tensor<double>({2}, 0.0), Tensor<double>({2}, 1.0)};
  expect_passes(grad_check([&] { return project(batch_norm(in[0], stats, Phase::kTrain), 5); }, in));
}

TEST(GradCheck, BatchNormEval) {
  Rng rng(5);
  std::vector<Tensor<double>> in{random_tensor<double>({2, 2, 3, 3}, rng)};
  BatchNormStats<double> stats{Tensor<double>({2}, {0.1, -0.2}), Tensor<double>({2}, {0.5, 2.0})};
  expect_passes(grad_check([&] { return project(batch_norm(in[0], stats, Phase::kEval), 6); }, in));
}

TEST(GradCheck, ElementwiseOps) {
  Rng rng(6);
  std::vector<Tensor<double>> in{random_tensor<double>({2, 3, 2, 2}, rng), random_tensor<double>({2, 3, 2, 2}, rng)};
  expect_passes(grad_check([&] { return project(leaky_relu(in[0], 0.2), 1); }, in));
  expect_passes(grad_check([&] { return project(add(in[0], in[1]), 2); }, in));
  expect_passes(grad_check([&] { return project(sub(in[0], in[1]), 3); }, in));
  expect_passes(grad_check([&] { return project(mul(in[0], in[1]), 4); }, in));
  expect_passes(grad_check([&] { return project(softplus(in[0]), 5); }, in));
  expect_passes(grad_check([&] { return project(exp(in[0]), 6); }, in));
  expect_passes(grad_check([&] { return project(clamp_min(in[0], 0.3), 7); }, in));
  expect_passes(grad_check([&] { return mse(in[0], in[1]); }, in));
  expect_passes(grad_check([&] { return mean(mul(in[0], in[0])); }, in));
}

TEST(GradCheck, StructuralOps) {
  Rng rng(7);
  std::vector<Tensor<double>> in{random_tensor<double>({2, 8, 2, 3}, rng), random_tensor<double>({2, 3, 2, 3}, rng),
                                 random_tensor<double>({1, 8, 1, 1}, rng), random_tensor<double>({8}, rng)};
  expect_passes(grad_check([&] { return project(pixel_shuffle(in[0], 2), 1); }, in));
  expect_passes(grad_check([&] { return project(pixel_unshuffle(pixel_shuffle(in[0], 2), 2), 2); }, in));
  expect_passes(grad_check([&] { return project(concat<double>({in[0], in[1]}, 1), 3); }, in));
  expect_passes(grad_check([&] { return project(slice_channels(in[0], 2, 5), 4); }, in));
  expect_passes(grad_check([&] { return project(add_channel(in[0], in[2]), 5); }, in));
  expect_passes(grad_check([&] { return project(expand_channels(in[3], 2, 2, 3), 6); }, in));
  std::vector<Tensor<double>> img{random_tensor<double>({1, 2, 4, 6}, rng)};
  expect_passes(grad_check([&] { return project(avg_downsample(img[0], 2), 8); }, img));
}

}  // namespace
}  // namespace magc
