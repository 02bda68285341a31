#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <vector>

#include "magc/tensor/params.hpp"

namespace magc {

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Adam with decoupled weight decay. Holds first/second moment buffers for
// every trainable parameter it was given.
template <typename T>
class AdamW {
 public:
  AdamW(const ParamList<T>& params, AdamConfig config);

  // One update from the gradients currently stored on the parameters.
  // Parameters that received no gradient are left untouched. A non-finite
  // gradient aborts the whole step with an error naming the parameter.
  void step();

  void zero_grad();
  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }
  std::uint64_t step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }

 private:
  struct Slot {
    ParamRef<T> param;
    std::vector<T> m;
    std::vector<T> v;
  };
  std::vector<Slot> slots_;
  AdamConfig config_;
  std::uint64_t step_ = 0;
};

// Linear warmup: lr * min(1, step / warmup), steps counted from 1.
inline double warmup_lr(double lr, std::size_t step, std::size_t warmup) {
  return warmup == 0 ? lr : lr * std::min(1.0, double(step) / double(warmup));
}

struct TrainTrace {
  std::vector<double> loss;  // one entry per step
};

// Called after every optimizer step with (step, loss).
using StepCallback = std::function<void(std::size_t, double)>;

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace magc
