#pragma once

#include <functional>
#include <vector>

#include "magc/tensor/tensor.hpp"

namespace magc {

// Thread-local switch, on by default. Ops record onto the tape only when it
// is on and at least one input requires a gradient.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Ordered record of executed differentiable ops. Each entry owns a closure
// that holds the saved activations it needs; execution order is a valid
// topological order, so walking it backwards visits every op once, after
// all of its consumers.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> backward) {
    entries_.push_back(std::move(backward));
  }

  // Seeds d(root)/d(root) = 1, runs every entry in reverse and clears the
  // tape. |root| must hold a single element.
  void backward(const Tensor<T>& root);

  // Drops all entries and with them every saved activation.
  void clear() { entries_.clear(); entries_.shrink_to_fit(); }

  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<std::function<void()>> entries_;
};

// The calling thread's tape for scalar type T.
template <typename T>
Tape<T>& tape();

template <typename T>
void backward(const Tensor<T>& root) {
  tape<T>().backward(root);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace magc
