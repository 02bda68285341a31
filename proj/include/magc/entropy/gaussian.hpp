#pragma once

#include "magc/tensor/tensor.hpp"

namespace magc {

inline constexpr double kSigmaFloor = 0.01;

// Mass of N(mu, sigma^2) over the unit bin centred on |symbol|:
//   Phi((s + 1/2 - mu) / sigma) - Phi((s - 1/2 - mu) / sigma)
// evaluated in double through erfc on the distance |s - mu|, so the result
// is exactly symmetric and keeps precision far into the tails.
double gaussian_bin_probability(double symbol, double mu, double sigma);

// -log2 of the bin probability, with the probability clamped at |p_min|.
double gaussian_bin_bits(double symbol, double mu, double sigma, double p_min);

// Differentiable total bits, sum over elements of -log2 p(x; mu, sigma),
// where x may be non-integer (noise relaxation). The likelihood is floored
// at 1e-9; gradients flow to x, mu and sigma. All three share one shape.
template <typename T>
Tensor<T> gaussian_bits(const Tensor<T>& x, const Tensor<T>& mu, const Tensor<T>& sigma);

}  // namespace magc
