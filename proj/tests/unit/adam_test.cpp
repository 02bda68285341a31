#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "magc/error.hpp"
#include "magc/tensor/adam.hpp"
#include "magc/tensor/ops.hpp"
#include "magc/tensor/tape.hpp"

namespace magc {
namespace {

TEST(AdamW, ZeroGradientLeavesParametersUnchanged) {
  Tensor<float> w({3}, {0.5f, -1.0f, 2.0f});
  AdamW<float> opt({{"w", w, true}}, AdamConfig{});
  w.mutable_grad();
  opt.step();
  EXPECT_EQ(w.data()[0], 0.5f);
  EXPECT_EQ(w.data()[1], -1.0f);
  EXPECT_EQ(w.data()[2], 2.0f);
  EXPECT_EQ(opt.step_count(), 1u);
}

TEST(AdamW, FirstStepWithUnitGradientMovesByLr) {
  Tensor<double> w({1}, 1.0);
  AdamConfig cfg;
  cfg.lr = 0.01;
  AdamW<double> opt({{"w", w, true}}, cfg);
  w.mutable_grad()[0] = 1.0;
  opt.step();
  EXPECT_NEAR(w.item(), 1.0 - 0.01, 1e-9);
}

TEST(AdamW, QuadraticBowlConverges) {
  Tensor<double> w({1}, 1.0);
  AdamConfig cfg;
  cfg.lr = 0.05;
  AdamW<double> opt({{"w", w, true}}, cfg);
  int reached = -1;
  for (int step = 1; step <= 2000; ++step) {
    opt.zero_grad();
    backward(sum(mul(w, w)));
    opt.step();
    if (std::abs(w.item()) < 0.01) {
      reached = step;
      break;
    }
  }
  EXPECT_GT(reached, 0) << "final w=" << w.item();
}

TEST(AdamW, DecoupledWeightDecayShrinksWithoutGradient) {
  Tensor<double> w({1}, 2.0);
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  AdamW<double> opt({{"w", w, true}}, cfg);
  w.mutable_grad();
  opt.step();
  EXPECT_NEAR(w.item(), 2.0 - 0.1 * 0.5 * 2.0, 1e-12);
}

TEST(AdamW, NanGradientNamesParameter) {
  Tensor<float> a({2}, 1.0f);
  Tensor<float> b({2}, 1.0f);
  AdamW<float> opt({{"enc.a", a, true}, {"enc.b", b, true}}, AdamConfig{});
  a.mutable_grad()[0] = 0.5f;
  b.mutable_grad()[1] = std::numeric_limits<float>::quiet_NaN();
  try {
    opt.step();
    FAIL() << "expected a numeric error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumeric);
    EXPECT_NE(std::string(e.what()).find("enc.b"), std::string::npos);
  }
}

TEST(AdamW, StepCounterIncrementsByOne) {
  Tensor<float> w({1}, 0.0f);
  AdamW<float> opt({{"w", w, true}}, AdamConfig{});
  for (int i = 1; i <= 5; ++i) {
    w.mutable_grad()[0] = 1.0f;
    opt.step();
    EXPECT_EQ(opt.step_count(), static_cast<std::uint64_t>(i));
  }
}

TEST(AdamW, NonTrainableEntriesAreIgnored) {
  Tensor<float> w({1}, 1.0f);
  Tensor<float> buf({1}, 3.0f);
  AdamW<float> opt({{"w", w, true}, {"bn.running_mean", buf, false}}, AdamConfig{});
  buf.mutable_grad()[0] = 1.0f;
  w.mutable_grad()[0] = 1.0f;
  opt.step();
  EXPECT_EQ(buf.item(), 3.0f);
  EXPECT_NE(w.item(), 1.0f);
}

}  // namespace
}  // namespace magc
