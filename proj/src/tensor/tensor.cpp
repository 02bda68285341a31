#include "magc/tensor/tensor.hpp"

#include <cmath>
#include <sstream>

#include "magc/error.hpp"
#include "magc/tensor/tape.hpp"

namespace magc {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill)
    : node_(std::make_shared<detail::TensorNode<T>>()) {
  for (std::size_t d : shape) check(d > 0, "tensor dims must be positive, got " + shape_str(shape));
  node_->data.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : node_(std::make_shared<detail::TensorNode<T>>()) {
  for (std::size_t d : shape) check(d > 0, "tensor dims must be positive, got " + shape_str(shape));
  check(shape_numel(shape) == values.size(),
        "tensor shape " + shape_str(shape) + " does not match " +
            std::to_string(values.size()) + " values");
  node_->data = std::move(values);
  node_->shape = std::move(shape);
}

template <typename T>
T Tensor<T>::item() const {
  check(numel() == 1, "item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() const {
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), T(0));
  return node_->grad;
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out(shape(), node_->data);
  out.node_->requires_grad = node_->requires_grad;
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(shape(), node_->data);
}

template <typename T>
void Tensor<T>::check_finite(const char* where) const {
  for (std::size_t i = 0; i < node_->data.size(); ++i) {
    if (!std::isfinite(node_->data[i])) {
      fail(ErrorCode::kNumeric, std::string(where) + ": non-finite value at flat index " +
                                    std::to_string(i) + " of tensor " + shape_str(shape()));
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

template <typename T>
void Tape<T>::backward(const Tensor<T>& root) {
  check(root.defined() && root.numel() == 1, "backward() needs a single-element root");
  check(root.requires_grad(), "backward() root does not require grad");
  Tensor<T> seed = root;
  seed.mutable_grad()[0] = T(1);
  // Reverse execution order; each closure runs exactly once.
  for (std::size_t i = entries_.size(); i-- > 0;) entries_[i]();
  clear();
}

template <typename T>
Tape<T>& tape() {
  thread_local Tape<T> instance;
  return instance;
}

template class Tape<float>;
template class Tape<double>;
template Tape<float>& tape<float>();
template Tape<double>& tape<double>();

}  // namespace magc
