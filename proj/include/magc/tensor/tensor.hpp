#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace magc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};
}  // namespace detail

// Dense row-major array with an optional gradient buffer.
//
// Tensor is a handle: copies share storage, which is what lets the tape, the
// optimizer and the checkpoint loader all refer to the same parameter. Use
// clone() for an independent copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor scalar(T value) { return Tensor(Shape{1}, value); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  std::span<T> mutable_data() { return node_->data; }
  const T* ptr() const { return node_->data.data(); }
  T* mutable_ptr() { return node_->data.data(); }
  T item() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  // Allocates a zero gradient buffer on first use. Handles share the buffer,
  // so this is available through a const handle.
  std::span<T> mutable_grad() const;
  void zero_grad() const { node_->grad.clear(); }

  Tensor clone() const;
  // Same values, no gradient tracking.
  Tensor detach() const;

  // Throws ErrorCode::kNumeric if any value is NaN or infinite.
  void check_finite(const char* where) const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<detail::TensorNode<T>> node_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  std::vector<To> out(t.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<To>(t.data()[i]);
  return Tensor<To>(t.shape(), std::move(out));
}

}  // namespace magc
