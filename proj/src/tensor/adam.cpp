#include "magc/tensor/adam.hpp"

#include <cmath>

#include "magc/error.hpp"
#include "magc/kernels/kernels.hpp"

namespace magc {

template <typename T>
AdamW<T>::AdamW(const ParamList<T>& params, AdamConfig config) : config_(config) {
  for (const ParamRef<T>& p : params) {
    if (!p.trainable) continue;
    Slot s{p, std::vector<T>(p.tensor.numel(), T(0)), std::vector<T>(p.tensor.numel(), T(0))};
    s.param.tensor.set_requires_grad(true);
    slots_.push_back(std::move(s));
  }
}

template <typename T>
void AdamW<T>::step() {
  for (const Slot& s : slots_) {
    if (!s.param.tensor.has_grad()) continue;
    for (T g : s.param.tensor.grad()) {
      if (!std::isfinite(g)) fail(ErrorCode::kNumeric, "non-finite gradient in parameter " + s.param.name);
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  kernels::AdamCoeffs<T> c{};
  c.lr = static_cast<T>(config_.lr);
  c.lr_decay = static_cast<T>(config_.lr * config_.weight_decay);
  c.beta1 = static_cast<T>(config_.beta1);
  c.one_minus_beta1 = static_cast<T>(1.0 - config_.beta1);
  c.beta2 = static_cast<T>(config_.beta2);
  c.one_minus_beta2 = static_cast<T>(1.0 - config_.beta2);
  c.inv_bias1 = static_cast<T>(1.0 / (1.0 - std::pow(config_.beta1, t)));
  c.inv_bias2 = static_cast<T>(1.0 / (1.0 - std::pow(config_.beta2, t)));
  c.eps = static_cast<T>(config_.eps);
  for (Slot& s : slots_) {
    if (!s.param.tensor.has_grad()) continue;
    kernels::adam<T>(s.m.size(), s.param.tensor.mutable_ptr(), s.param.tensor.grad().data(),
                     s.m.data(), s.v.data(), c);
  }
}

template <typename T>
void AdamW<T>::zero_grad() {
  for (Slot& s : slots_) s.param.tensor.zero_grad();
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace magc
