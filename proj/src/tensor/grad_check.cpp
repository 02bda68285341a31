#include "magc/tensor/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "magc/tensor/tape.hpp"

namespace magc {

GradCheckReport grad_check(const std::function<Tensor<double>()>& fn,
                           std::span<Tensor<double>> inputs,
                           const GradCheckOptions& options) {
  for (Tensor<double>& in : inputs) {
    for (double& v : in.mutable_data()) {
      if (std::abs(v) < options.kink_margin) v = v < 0.0 ? -options.kink_margin : options.kink_margin;
    }
    in.set_requires_grad(true);
    in.zero_grad();
  }

  tape<double>().clear();
  Tensor<double> loss = fn();
  backward(loss);

  std::vector<std::vector<double>> analytic;
  for (const Tensor<double>& in : inputs) {
    analytic.emplace_back(in.numel(), 0.0);
    if (in.has_grad()) std::copy(in.grad().begin(), in.grad().end(), analytic.back().begin());
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto values = inputs[t].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = fn().item();
      values[i] = saved - options.step;
      const double down = fn().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[t][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.scale_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      std::ostringstream where;
      where << "input[" << t << "] flat " << i << " analytic " << a << " numeric " << numeric;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = where.str();
      }
      if (rel > options.tolerance) report.failures.push_back(where.str());
    }
  }
  return report;
}

}  // namespace magc
