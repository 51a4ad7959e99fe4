#pragma once

#include <span>
#include <vector>

#include "dualprop/grid.hpp"
#include "dualprop/rng.hpp"

namespace dualprop {

enum class Activation { kNone, kRelu, kLeakyRelu };

inline constexpr double kLeakySlope = 0.2;

void activate_inplace(Grid& g, Activation act);

// Stride-1 convolution with "same" zero padding (odd kernels).
Grid conv_same(const Grid& g, const Kernel& k);

// Runs the kernels in order with `act` between layers; the last layer's
// output is left linear.
Grid apply_conv_stack(const Grid& input, std::span<const Kernel> layers, Activation act);

// 2x bilinear upsampling (half-pixel centres).
Grid upsample2x(const Grid& g);

// Dense layer y = W x + b with W stored row-major [out][in].
struct Linear {
  int in_features = 0;
  int out_features = 0;
  std::vector<double> weight;
  std::vector<double> bias;  // empty or out_features

  void validate() const;
  void apply(const double* x, double* y) const;
  static Linear zeros(int in_features, int out_features, bool with_bias = true);
  static Linear identity(int features);
};

// Applies a linear map independently to every pixel of a grid.
Grid apply_pointwise(const Grid& g, const Linear& lin);

// Scaled-uniform random init: weights in +-gain*sqrt(3/fan_in), bias in
// +-0.1*gain.
Kernel random_kernel(Rng& rng, int out_channels, int in_channels, int kh, int kw,
                     double gain = 1.0);
Linear random_linear(Rng& rng, int in_features, int out_features, double gain = 1.0);

}  // namespace dualprop
