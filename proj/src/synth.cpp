#include "dualprop/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>

#include "dualprop/rng.hpp"

namespace dualprop {

void SceneSpec::validate() const {
  require(frames > 0 && height > 0 && width > 0, "SceneSpec: dims must be positive");
  require(octaves > 0 && base_cell > 0, "SceneSpec: bad texture parameters");
  require(2 * std::abs(vx) * frames < width && 2 * std::abs(vy) * frames < height,
          "SceneSpec: motion too large for the frame");
}

Grid value_noise(std::uint64_t seed, int height, int width, int channels, int octaves,
                 int base_cell) {
  Grid out(height, width, channels);
  Rng rng(seed);
  double amplitude = 0.5;
  double amp_total = 0.0;
  int cell = base_cell;
  for (int o = 0; o < octaves; ++o) {
    const int lh = height / cell + 2;
    const int lw = width / cell + 2;
    std::vector<double> lattice(static_cast<std::size_t>(lh) * lw * channels);
    for (double& v : lattice) v = rng.uniform();
    for (int y = 0; y < height; ++y) {
      const double fy = static_cast<double>(y) / cell;
      const int y0 = static_cast<int>(fy);
      double ty = fy - y0;
      ty = ty * ty * (3.0 - 2.0 * ty);
      for (int x = 0; x < width; ++x) {
        const double fx = static_cast<double>(x) / cell;
        const int x0 = static_cast<int>(fx);
        double tx = fx - x0;
        tx = tx * tx * (3.0 - 2.0 * tx);
        for (int c = 0; c < channels; ++c) {
          auto l = [&](int yy, int xx) {
            return lattice[(static_cast<std::size_t>(yy) * lw + xx) * channels + c];
          };
          const double top = l(y0, x0) + tx * (l(y0, x0 + 1) - l(y0, x0));
          const double bot = l(y0 + 1, x0) + tx * (l(y0 + 1, x0 + 1) - l(y0 + 1, x0));
          out.at(y, x, c) += amplitude * (top + ty * (bot - top));
        }
      }
    }
    amp_total += amplitude;
    amplitude *= 0.5;
    cell = std::max(1, cell / 2);
  }
  for (double& v : out.values()) v /= amp_total;
  return out;
}

SyntheticSequence gen_sequence(const SceneSpec& s) {
  s.validate();
  const int span_x = std::abs(s.vx) * (s.frames - 1);
  const int span_y = std::abs(s.vy) * (s.frames - 1);
  SyntheticSequence seq;
  seq.texture = value_noise(s.seed, s.height + span_y, s.width + span_x, 3, s.octaves,
                            s.base_cell);
  // Texture origin of frame 0 chosen so every frame stays inside the texture.
  const int ox = s.vx >= 0 ? span_x : 0;
  const int oy = s.vy >= 0 ? span_y : 0;
  for (int t = 0; t < s.frames; ++t) {
    Grid f(s.height, s.width, 3);
    const int sx = ox - t * s.vx;
    const int sy = oy - t * s.vy;
    for (int y = 0; y < s.height; ++y) {
      for (int x = 0; x < s.width; ++x) {
        const auto src = seq.texture.pixel(y + sy, x + sx);
        std::copy(src.begin(), src.end(), f.pixel(y, x).begin());
      }
    }
    seq.frames.push_back(std::move(f));
  }
  for (int t = 0; t + 1 < s.frames; ++t) {
    Grid fwd(s.height, s.width, 2);
    Grid bwd(s.height, s.width, 2);
    for (int y = 0; y < s.height; ++y) {
      for (int x = 0; x < s.width; ++x) {
        fwd.at(y, x, 0) = s.vx;
        fwd.at(y, x, 1) = s.vy;
        bwd.at(y, x, 0) = -s.vx;
        bwd.at(y, x, 1) = -s.vy;
      }
    }
    seq.flows_fwd.push_back(std::move(fwd));
    seq.flows_bwd.push_back(std::move(bwd));
  }
  return seq;
}

namespace {

struct Blob {
  double cy, cx;
  double aspect;
  double harmonics[3][2];  // amplitude, phase for angular frequencies 2..4
};

// Smallest blob radius that covers the pixel centre (y, x).
double critical_radius(const Blob& b, double y, double x) {
  const double dy = (y - b.cy) / b.aspect;
  const double dx = (x - b.cx) * b.aspect;
  const double r = std::sqrt(dx * dx + dy * dy);
  const double th = std::atan2(dy, dx);
  double rr = 1.0;
  for (int k = 0; k < 3; ++k) rr += b.harmonics[k][0] * std::cos((k + 2) * th + b.harmonics[k][1]);
  return r / rr;
}

std::vector<double> critical_map(const Blob& b, int h, int w) {
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out[static_cast<std::size_t>(y) * w + x] = critical_radius(b, y + 0.5, x + 0.5);
    }
  }
  return out;
}

}  // namespace

double mask_coverage(const MaskSequence& masks) {
  double covered = 0.0;
  double total = 0.0;
  for (const Mask& m : masks) {
    covered += static_cast<double>(m.count());
    total += static_cast<double>(m.size());
  }
  return total > 0.0 ? covered / total : 0.0;
}

MaskSequence gen_masks(const SceneSpec& s, MaskKind kind, std::uint64_t seed, double coverage) {
  s.validate();
  require(coverage >= 0.0 && coverage <= 1.0, "gen_masks: coverage outside [0, 1]");
  const int h = s.height;
  const int w = s.width;
  if (coverage == 0.0) return MaskSequence(static_cast<std::size_t>(s.frames), Mask(h, w, 0));

  Rng rng(seed);
  Blob b{};
  b.aspect = rng.uniform(0.8, 1.25);
  for (auto& hm : b.harmonics) {
    hm[0] = rng.uniform(0.0, 0.08);
    hm[1] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  // Radius that would give the requested area for a plain disc, used to keep
  // the blob (and its path) away from the borders.
  const double r_nominal = std::sqrt(coverage * h * w / std::numbers::pi);
  int ovx = 0, ovy = 0;
  if (kind == MaskKind::kObject) {
    ovx = rng.uniform_int(-2, 2);
    ovy = rng.uniform_int(-1, 1);
    if (ovx == 0 && ovy == 0) ovx = 1;
    // Slow the object down if its path would leave the frame.
    while (ovx != 0 && std::abs(ovx) * (s.frames - 1) > w - 2.4 * r_nominal) ovx -= ovx > 0 ? 1 : -1;
    while (ovy != 0 && std::abs(ovy) * (s.frames - 1) > h - 2.4 * r_nominal) ovy -= ovy > 0 ? 1 : -1;
  }
  // An object moving with the background never uncovers anything.
  if (kind == MaskKind::kObject && ovx == s.vx && ovy == s.vy) {
    if (ovx != 0) ovx = -ovx;
    else ovy = -ovy;
  }
  const double travel_x = std::abs(ovx) * (s.frames - 1);
  const double travel_y = std::abs(ovy) * (s.frames - 1);
  const double margin = std::min(1.2 * r_nominal, std::min(h, w) / 2.0);
  auto pick = [&](double extent, double travel) {
    const double lo = margin;
    const double hi = std::max(lo, extent - margin - travel);
    return rng.uniform(lo, hi);
  };
  const double start_x = pick(w, travel_x);
  const double start_y = pick(h, travel_y);
  const double base_x = ovx >= 0 ? start_x : start_x + travel_x;
  const double base_y = ovy >= 0 ? start_y : start_y + travel_y;

  const int distinct = kind == MaskKind::kStationary ? 1 : s.frames;
  std::vector<std::vector<double>> maps;
  std::vector<double> all;
  for (int t = 0; t < distinct; ++t) {
    Blob bt = b;
    bt.cx = base_x + t * ovx;
    bt.cy = base_y + t * ovy;
    maps.push_back(critical_map(bt, h, w));
    all.insert(all.end(), maps.back().begin(), maps.back().end());
  }
  // The k-th smallest critical radius covers exactly the k closest pixels
  // (ties aside), so pick k from the requested coverage.
  const auto k = static_cast<std::size_t>(std::llround(coverage * static_cast<double>(all.size())));
  if (k == 0) return MaskSequence(static_cast<std::size_t>(s.frames), Mask(h, w, 0));
  std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k - 1), all.end());
  const double radius = all[k - 1];

  MaskSequence seq;
  for (int t = 0; t < s.frames; ++t) {
    const auto& map = maps[kind == MaskKind::kStationary ? 0 : t];
    Mask m(h, w, 0);
    for (std::size_t i = 0; i < map.size(); ++i) m.bits()[i] = map[i] <= radius ? 1 : 0;
    seq.push_back(std::move(m));
  }
  return seq;
}

CorruptedSequence corrupt(const FrameSequence& frames, const MaskSequence& masks,
                          const FlowSequence& flows_fwd, const FlowSequence& flows_bwd) {
  require(frames.size() == masks.size(), "corrupt: frame/mask count mismatch");
  require(flows_fwd.size() == flows_bwd.size() &&
              (flows_fwd.empty() || flows_fwd.size() + 1 == frames.size()),
          "corrupt: flow count mismatch");
  auto zero_under = [](Grid g, const Mask& m) {
    require(m.same_spatial(g), "corrupt: mask dims differ");
    for (int y = 0; y < g.height(); ++y) {
      for (int x = 0; x < g.width(); ++x) {
        if (!m.at(y, x)) continue;
        for (double& v : g.pixel(y, x)) v = 0.0;
      }
    }
    return g;
  };
  CorruptedSequence out;
  for (std::size_t t = 0; t < frames.size(); ++t) out.frames.push_back(zero_under(frames[t], masks[t]));
  for (std::size_t t = 0; t < flows_fwd.size(); ++t) {
    out.flows_fwd.push_back(zero_under(flows_fwd[t], masks[t]));
    out.flows_bwd.push_back(zero_under(flows_bwd[t], masks[t + 1]));
  }
  return out;
}

}  // namespace dualprop
