#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dualprop/error.hpp"

namespace dualprop {

// Dense H x W x C grid, row-major with channels innermost (HWC). Houses
// frames (C=3), flows (C=2, order dx,dy), features and single-channel maps.
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, int channels, double fill = 0.0);
  Grid(int height, int width, int channels, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool same_shape(const Grid& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }
  bool same_spatial(const Grid& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  std::size_t index(int y, int x, int c = 0) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }
  double& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

  std::span<double> pixel(int y, int x) {
    return {data_.data() + index(y, x), static_cast<std::size_t>(channels_)};
  }
  std::span<const double> pixel(int y, int x) const {
    return {data_.data() + index(y, x), static_cast<std::size_t>(channels_)};
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  bool operator==(const Grid& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// Binary H x W map; 1 = missing/corrupted (or "valid" for validity maps).
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, std::uint8_t fill = 0);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return bits_.size(); }

  bool same_spatial(const Grid& g) const {
    return height_ == g.height() && width_ == g.width();
  }
  bool same_spatial(const Mask& m) const {
    return height_ == m.height_ && width_ == m.width_;
  }

  bool at(int y, int x) const {
    return bits_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  void set(int y, int x, bool v) {
    bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0;
  }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }

  std::size_t count() const;
  bool any() const { return count() > 0; }

  std::span<const std::uint8_t> bits() const { return bits_; }
  std::span<std::uint8_t> bits() { return bits_; }

  Grid to_grid() const;
  // Pixels with value > threshold become 1.
  static Mask from_grid(const Grid& g, double threshold = 0.5);

  bool operator==(const Mask& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

using FlowField = Grid;  // 2 channels: (dx, dy) in pixels
using FrameSequence = std::vector<Grid>;
using MaskSequence = std::vector<Mask>;
using FlowSequence = std::vector<FlowField>;

// Convolution weights, layout [out][in][kh][kw] plus optional per-output bias.
struct Kernel {
  int out_channels = 0;
  int in_channels = 0;
  int kh = 0;
  int kw = 0;
  std::vector<double> weights;
  std::vector<double> bias;  // empty or out_channels entries

  double& w(int o, int i, int ky, int kx) {
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * kh + ky) * kw + kx];
  }
  double w(int o, int i, int ky, int kx) const {
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * kh + ky) * kw + kx];
  }
  int taps() const { return kh * kw; }

  void validate() const;
  // Weights reordered to [out][ky][kx][in]: one contiguous row per output
  // channel matching a gathered tap-major patch.
  std::vector<double> pack_tap_major() const;
  static Kernel zeros(int out_channels, int in_channels, int kh, int kw,
                      bool with_bias = true);
};

struct Factor {
  int num = 1;
  int den = 1;
  double value() const { return static_cast<double>(num) / den; }
  Factor inverse() const { return {den, num}; }
};

enum class ResizeMode { kNearest, kBilinear, kArea };

// Bilinear interpolation of all channels at continuous (x, y). Coordinates are
// clamped to [0, W-1] x [0, H-1] first; integer coordinates are exact.
void bilinear_sample(const Grid& g, double x, double y, std::span<double> out);
std::vector<double> bilinear_sample(const Grid& g, double x, double y);

// Cross-correlation with zero padding.
Grid conv2d(const Grid& g, const Kernel& k, int stride = 1, int padding = 0);

// Output dims are floor(H * num / den). Nearest uses the top-left source
// pixel of each output cell; bilinear uses half-pixel centres; area
// integrates source pixels over the output cell footprint.
Grid resize(const Grid& g, Factor factor, ResizeMode mode);
Mask resize_mask(const Mask& m, Factor factor);
// Bilinear resize of a displacement field followed by scaling by the factor.
FlowField resize_flow(const FlowField& f, Factor factor);

// Output spatial size of the same rule, for shape planning.
int resized_extent(int extent, Factor factor);

// Channel-wise concatenation of grids sharing spatial dims.
Grid concat_channels(std::span<const Grid* const> parts);
Grid concat_channels(const Grid& a, const Grid& b);

// Elementwise helpers used by the network stacks.
void relu_inplace(Grid& g);
void leaky_relu_inplace(Grid& g, double slope);
void sigmoid_inplace(Grid& g);
void clamp_inplace(Grid& g, double lo, double hi);

bool all_finite(const Grid& g);
double max_abs_diff(const Grid& a, const Grid& b);

}  // namespace dualprop
