#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "magc/tensor/tensor.hpp"

namespace magc {

struct GradCheckOptions {
  double step = 1e-4;        // central-difference step
  double tolerance = 1e-4;   // max allowed relative error
  // Errors are relative to max(|analytic|, |numeric|, scale_floor).
  double scale_floor = 1e-6;
  // Input values closer than this to zero are pushed out to +/- margin so
  // the difference stencil never straddles a ReLU-style kink at the origin.
  double kink_margin = 1e-3;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;                   // "input[i] flat j" of the max error
  std::vector<std::string> failures;   // entries above tolerance
  bool passed() const { return failures.empty(); }
};

// Compares tape gradients of the scalar |fn| with respect to every element
// of |inputs| against central differences. |fn| must read the inputs by
// handle so perturbations are visible to it. Runs in 64-bit.
GradCheckReport grad_check(const std::function<Tensor<double>()>& fn,
                           std::span<Tensor<double>> inputs,
                           const GradCheckOptions& options = {});

}  // namespace magc
