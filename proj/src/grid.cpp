#include "dualprop/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dualprop/parallel.hpp"
#include "dualprop/simd/kernels.hpp"

namespace dualprop {

Grid::Grid(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  require(height >= 0 && width >= 0 && channels >= 0, "Grid: negative dimension");
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

Grid::Grid(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  require(height >= 0 && width >= 0 && channels >= 0, "Grid: negative dimension");
  require(data_.size() == static_cast<std::size_t>(height) * width * channels,
          "Grid: data length does not match height*width*channels");
}

Mask::Mask(int height, int width, std::uint8_t fill)
    : height_(height), width_(width) {
  require(height >= 0 && width >= 0, "Mask: negative dimension");
  bits_.assign(static_cast<std::size_t>(height) * width, fill ? 1 : 0);
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Grid Mask::to_grid() const {
  Grid g(height_, width_, 1);
  for (std::size_t i = 0; i < bits_.size(); ++i) g.storage()[i] = bits_[i];
  return g;
}

Mask Mask::from_grid(const Grid& g, double threshold) {
  require(g.channels() == 1, "Mask::from_grid: expected a single-channel grid");
  Mask m(g.height(), g.width());
  for (std::size_t i = 0; i < m.bits_.size(); ++i) {
    m.bits_[i] = g.storage()[i] > threshold ? 1 : 0;
  }
  return m;
}

void Kernel::validate() const {
  require(out_channels > 0 && in_channels > 0 && kh > 0 && kw > 0,
          "Kernel: non-positive dimension");
  require(weights.size() ==
              static_cast<std::size_t>(out_channels) * in_channels * kh * kw,
          "Kernel: weight length != out*in*kh*kw");
  require(bias.empty() || bias.size() == static_cast<std::size_t>(out_channels),
          "Kernel: bias length != out_channels");
}

std::vector<double> Kernel::pack_tap_major() const {
  const std::size_t row = static_cast<std::size_t>(kh) * kw * in_channels;
  std::vector<double> packed(static_cast<std::size_t>(out_channels) * row);
  for (int o = 0; o < out_channels; ++o)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx)
        for (int i = 0; i < in_channels; ++i)
          packed[o * row + (static_cast<std::size_t>(ky) * kw + kx) * in_channels + i] =
              w(o, i, ky, kx);
  return packed;
}

Kernel Kernel::zeros(int out_channels, int in_channels, int kh, int kw, bool with_bias) {
  Kernel k;
  k.out_channels = out_channels;
  k.in_channels = in_channels;
  k.kh = kh;
  k.kw = kw;
  k.weights.assign(static_cast<std::size_t>(out_channels) * in_channels * kh * kw, 0.0);
  if (with_bias) k.bias.assign(static_cast<std::size_t>(out_channels), 0.0);
  return k;
}

void bilinear_sample(const Grid& g, double x, double y, std::span<double> out) {
  const int h = g.height();
  const int w = g.width();
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const int c = g.channels();
  const double* p00 = g.storage().data() + g.index(y0, x0);
  const double* p01 = g.storage().data() + g.index(y0, x1);
  const double* p10 = g.storage().data() + g.index(y1, x0);
  const double* p11 = g.storage().data() + g.index(y1, x1);
  for (int k = 0; k < c; ++k) {
    const double top = (1.0 - fx) * p00[k] + fx * p01[k];
    const double bottom = (1.0 - fx) * p10[k] + fx * p11[k];
    out[k] = (1.0 - fy) * top + fy * bottom;
  }
}

std::vector<double> bilinear_sample(const Grid& g, double x, double y) {
  require(g.channels() >= 1 && !g.empty(), "bilinear_sample: empty grid");
  std::vector<double> out(static_cast<std::size_t>(g.channels()));
  bilinear_sample(g, x, y, out);
  return out;
}

Grid conv2d(const Grid& g, const Kernel& k, int stride, int padding) {
  k.validate();
  require(k.in_channels == g.channels(),
          "conv2d: kernel in_channels " + std::to_string(k.in_channels) +
              " != grid channels " + std::to_string(g.channels()));
  require(stride >= 1 && padding >= 0, "conv2d: bad stride/padding");
  require(k.kh <= g.height() + 2 * padding && k.kw <= g.width() + 2 * padding,
          "conv2d: kernel larger than padded input");
  const int out_h = (g.height() + 2 * padding - k.kh) / stride + 1;
  const int out_w = (g.width() + 2 * padding - k.kw) / stride + 1;
  const int cin = k.in_channels;
  const std::size_t patch_len = static_cast<std::size_t>(k.kh) * k.kw * cin;

  const std::vector<double> packed = k.pack_tap_major();

  Grid out(out_h, out_w, k.out_channels);
  parallel_for(0, out_h, [&](std::ptrdiff_t oy) {
    std::vector<double> patch(patch_len);
    for (int ox = 0; ox < out_w; ++ox) {
      double* dst = patch.data();
      for (int ky = 0; ky < k.kh; ++ky) {
        const int iy = static_cast<int>(oy) * stride - padding + ky;
        for (int kx = 0; kx < k.kw; ++kx, dst += cin) {
          const int ix = ox * stride - padding + kx;
          if (iy < 0 || iy >= g.height() || ix < 0 || ix >= g.width()) {
            std::fill(dst, dst + cin, 0.0);
          } else {
            const auto src = g.pixel(iy, ix);
            std::copy(src.begin(), src.end(), dst);
          }
        }
      }
      auto px = out.pixel(static_cast<int>(oy), ox);
      for (int o = 0; o < k.out_channels; ++o) {
        const double b = k.bias.empty() ? 0.0 : k.bias[o];
        px[o] = b + simd::dot(packed.data() + o * patch_len, patch.data(), patch_len);
      }
    }
  });
  return out;
}

int resized_extent(int extent, Factor factor) {
  require(factor.num > 0 && factor.den > 0, "resize: factor must be positive");
  const long long v = static_cast<long long>(extent) * factor.num / factor.den;
  require(v > 0, "resize: non-positive output dimension");
  return static_cast<int>(v);
}

namespace {

struct Tap {
  int index;
  double weight;
};

// Source taps for each output index along one axis under area averaging.
std::vector<std::vector<Tap>> area_taps(int in_extent, int out_extent, Factor f) {
  std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(out_extent));
  const double scale = static_cast<double>(f.den) / f.num;  // source units per output
  for (int o = 0; o < out_extent; ++o) {
    const double lo = o * scale;
    const double hi = std::min((o + 1) * scale, static_cast<double>(in_extent));
    const double len = hi - lo;
    for (int s = static_cast<int>(std::floor(lo)); s < in_extent && s < hi; ++s) {
      const double overlap = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
      if (overlap > 0.0) taps[o].push_back({s, overlap / len});
    }
  }
  return taps;
}

}  // namespace

Grid resize(const Grid& g, Factor factor, ResizeMode mode) {
  const int out_h = resized_extent(g.height(), factor);
  const int out_w = resized_extent(g.width(), factor);
  const int c = g.channels();
  Grid out(out_h, out_w, c);

  switch (mode) {
    case ResizeMode::kNearest: {
      for (int y = 0; y < out_h; ++y) {
        const int sy = std::min<int>(static_cast<long long>(y) * factor.den / factor.num,
                                     g.height() - 1);
        for (int x = 0; x < out_w; ++x) {
          const int sx = std::min<int>(static_cast<long long>(x) * factor.den / factor.num,
                                       g.width() - 1);
          std::ranges::copy(g.pixel(sy, sx), out.pixel(y, x).begin());
        }
      }
      break;
    }
    case ResizeMode::kBilinear: {
      const double inv = static_cast<double>(factor.den) / factor.num;
      parallel_for(0, out_h, [&](std::ptrdiff_t y) {
        const double sy = (static_cast<double>(y) + 0.5) * inv - 0.5;
        for (int x = 0; x < out_w; ++x) {
          const double sx = (x + 0.5) * inv - 0.5;
          bilinear_sample(g, sx, sy, out.pixel(static_cast<int>(y), x));
        }
      });
      break;
    }
    case ResizeMode::kArea: {
      const auto ty = area_taps(g.height(), out_h, factor);
      const auto tx = area_taps(g.width(), out_w, factor);
      parallel_for(0, out_h, [&](std::ptrdiff_t y) {
        for (int x = 0; x < out_w; ++x) {
          auto dst = out.pixel(static_cast<int>(y), x);
          for (const Tap& a : ty[y]) {
            for (const Tap& b : tx[x]) {
              const double wgt = a.weight * b.weight;
              const auto src = g.pixel(a.index, b.index);
              for (int k = 0; k < c; ++k) dst[k] += wgt * src[k];
            }
          }
        }
      });
      break;
    }
  }
  return out;
}

Mask resize_mask(const Mask& m, Factor factor) {
  const int out_h = resized_extent(m.height(), factor);
  const int out_w = resized_extent(m.width(), factor);
  Mask out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min<int>(static_cast<long long>(y) * factor.den / factor.num,
                                 m.height() - 1);
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min<int>(static_cast<long long>(x) * factor.den / factor.num,
                                   m.width() - 1);
      out.set(y, x, m.at(sy, sx));
    }
  }
  return out;
}

FlowField resize_flow(const FlowField& f, Factor factor) {
  require(f.channels() == 2, "resize_flow: flow must have exactly 2 channels");
  Grid out = resize(f, factor, ResizeMode::kBilinear);
  for (double& v : out.storage()) v = v * factor.num / factor.den;
  return out;
}

Grid concat_channels(std::span<const Grid* const> parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const int h = parts.front()->height();
  const int w = parts.front()->width();
  int total = 0;
  for (const Grid* p : parts) {
    require(p->height() == h && p->width() == w, "concat_channels: spatial mismatch");
    total += p->channels();
  }
  Grid out(h, w, total);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto dst = out.pixel(y, x).begin();
      for (const Grid* p : parts) dst = std::ranges::copy(p->pixel(y, x), dst).out;
    }
  }
  return out;
}

Grid concat_channels(const Grid& a, const Grid& b) {
  const Grid* parts[] = {&a, &b};
  return concat_channels(parts);
}

void relu_inplace(Grid& g) {
  for (double& v : g.storage()) v = v > 0.0 ? v : 0.0;
}

void leaky_relu_inplace(Grid& g, double slope) {
  for (double& v : g.storage()) v = v > 0.0 ? v : slope * v;
}

void sigmoid_inplace(Grid& g) {
  for (double& v : g.storage()) v = 1.0 / (1.0 + std::exp(-v));
}

void clamp_inplace(Grid& g, double lo, double hi) {
  for (double& v : g.storage()) v = std::clamp(v, lo, hi);
}

bool all_finite(const Grid& g) {
  return std::ranges::all_of(g.storage(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Grid& a, const Grid& b) {
  require(a.same_shape(b), "max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a.storage()[i] - b.storage()[i]));
  }
  return m;
}

}  // namespace dualprop
