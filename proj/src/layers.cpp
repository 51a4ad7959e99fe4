#include "dualprop/layers.hpp"

#include <cmath>

#include "dualprop/parallel.hpp"
#include "dualprop/simd/kernels.hpp"

namespace dualprop {

void activate_inplace(Grid& g, Activation act) {
  switch (act) {
    case Activation::kNone: break;
    case Activation::kRelu: relu_inplace(g); break;
    case Activation::kLeakyRelu: leaky_relu_inplace(g, kLeakySlope); break;
  }
}

Grid conv_same(const Grid& g, const Kernel& k) {
  require(k.kh % 2 == 1 && k.kw % 2 == 1, "conv_same: kernel must be odd-sized");
  require(k.kh == k.kw, "conv_same: kernel must be square");
  return conv2d(g, k, 1, k.kh / 2);
}

Grid apply_conv_stack(const Grid& input, std::span<const Kernel> layers, Activation act) {
  require(!layers.empty(), "apply_conv_stack: empty stack");
  Grid x = conv_same(input, layers[0]);
  for (std::size_t i = 1; i < layers.size(); ++i) {
    activate_inplace(x, act);
    x = conv_same(x, layers[i]);
  }
  return x;
}

Grid upsample2x(const Grid& g) { return resize(g, Factor{2, 1}, ResizeMode::kBilinear); }

void Linear::validate() const {
  require(in_features > 0 && out_features > 0, "Linear: non-positive size");
  require(weight.size() == static_cast<std::size_t>(in_features) * out_features,
          "Linear: weight length != in*out");
  require(bias.empty() || bias.size() == static_cast<std::size_t>(out_features),
          "Linear: bias length != out");
}

void Linear::apply(const double* x, double* y) const {
  for (int o = 0; o < out_features; ++o) {
    const double b = bias.empty() ? 0.0 : bias[o];
    y[o] = b + simd::dot(weight.data() + static_cast<std::size_t>(o) * in_features, x,
                         static_cast<std::size_t>(in_features));
  }
}

Linear Linear::zeros(int in_features, int out_features, bool with_bias) {
  Linear l;
  l.in_features = in_features;
  l.out_features = out_features;
  l.weight.assign(static_cast<std::size_t>(in_features) * out_features, 0.0);
  if (with_bias) l.bias.assign(static_cast<std::size_t>(out_features), 0.0);
  return l;
}

Linear Linear::identity(int features) {
  Linear l = zeros(features, features, false);
  for (int i = 0; i < features; ++i) l.weight[static_cast<std::size_t>(i) * features + i] = 1.0;
  return l;
}

Grid apply_pointwise(const Grid& g, const Linear& lin) {
  lin.validate();
  require(g.channels() == lin.in_features, "apply_pointwise: channel mismatch");
  Grid out(g.height(), g.width(), lin.out_features);
  parallel_for(0, g.height(), [&](std::ptrdiff_t y) {
    for (int x = 0; x < g.width(); ++x) {
      lin.apply(g.pixel(static_cast<int>(y), x).data(), out.pixel(static_cast<int>(y), x).data());
    }
  });
  return out;
}

Kernel random_kernel(Rng& rng, int out_channels, int in_channels, int kh, int kw, double gain) {
  Kernel k = Kernel::zeros(out_channels, in_channels, kh, kw, true);
  const double bound = gain * std::sqrt(3.0 / (in_channels * kh * kw));
  for (double& w : k.weights) w = rng.uniform(-bound, bound);
  for (double& b : k.bias) b = rng.uniform(-0.1, 0.1) * gain;
  return k;
}

Linear random_linear(Rng& rng, int in_features, int out_features, double gain) {
  Linear l = Linear::zeros(in_features, out_features, true);
  const double bound = gain * std::sqrt(3.0 / in_features);
  for (double& w : l.weight) w = rng.uniform(-bound, bound);
  for (double& b : l.bias) b = rng.uniform(-0.1, 0.1) * gain;
  return l;
}

}  // namespace dualprop
