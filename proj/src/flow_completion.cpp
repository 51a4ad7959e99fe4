#include "dualprop/flow_completion.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "dualprop/parallel.hpp"
#include "dualprop/simd/kernels.hpp"

namespace dualprop {
namespace {

// Sparse operator of the masked-pixel Laplace system A x = b with
// A = deg * I - adjacency among unknowns.
struct LaplaceSystem {
  std::vector<int> pixel;                // unknown -> flat pixel index
  std::vector<std::array<int, 4>> nbr;   // unknown neighbours (-1: none)
  std::vector<double> degree;            // in-image neighbour count
  std::vector<std::array<int, 4>> known; // flat pixel index of Dirichlet neighbours (-1: none)

  void apply(const std::vector<double>& x, std::vector<double>& y) const {
    for (std::size_t i = 0; i < pixel.size(); ++i) {
      double acc = degree[i] * x[i];
      for (int j : nbr[i])
        if (j >= 0) acc -= x[static_cast<std::size_t>(j)];
      y[i] = acc;
    }
  }
};

LaplaceSystem build_system(const Mask& m) {
  LaplaceSystem sys;
  const int h = m.height();
  const int w = m.width();
  std::vector<int> unknown_of(static_cast<std::size_t>(h) * w, -1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (m.at(y, x)) {
        unknown_of[static_cast<std::size_t>(y) * w + x] = static_cast<int>(sys.pixel.size());
        sys.pixel.push_back(y * w + x);
      }
  const int dy[4] = {-1, 1, 0, 0};
  const int dx[4] = {0, 0, -1, 1};
  sys.nbr.resize(sys.pixel.size());
  sys.known.resize(sys.pixel.size());
  sys.degree.resize(sys.pixel.size());
  for (std::size_t i = 0; i < sys.pixel.size(); ++i) {
    const int y = sys.pixel[i] / w;
    const int x = sys.pixel[i] % w;
    int deg = 0;
    for (int k = 0; k < 4; ++k) {
      sys.nbr[i][k] = -1;
      sys.known[i][k] = -1;
      const int ny = y + dy[k];
      const int nx = x + dx[k];
      if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
      ++deg;
      const int flat = ny * w + nx;
      if (unknown_of[static_cast<std::size_t>(flat)] >= 0) {
        sys.nbr[i][k] = unknown_of[static_cast<std::size_t>(flat)];
      } else {
        sys.known[i][k] = flat;
      }
    }
    sys.degree[i] = deg;
  }
  return sys;
}

struct ChannelResult {
  int iterations = 0;
  double residual = 0.0;
};

ChannelResult solve_channel(const LaplaceSystem& sys, const Grid& g, int channel,
                            const LaplaceOptions& options, std::vector<double>& x) {
  const std::size_t n = sys.pixel.size();
  const int c = g.channels();
  const auto& data = g.storage();
  std::vector<double> b(n, 0.0);
  double boundary_sum = 0.0;
  std::size_t boundary_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (int flat : sys.known[i]) {
      if (flat < 0) continue;
      const double v = data[static_cast<std::size_t>(flat) * c + channel];
      b[i] += v;
      boundary_sum += v;
      ++boundary_count;
    }
  }
  // Starting from the mean boundary value makes constant data an exact
  // fixed point (zero initial residual).
  const double start = boundary_count ? boundary_sum / static_cast<double>(boundary_count) : 0.0;
  x.assign(n, start);

  std::vector<double> r(n), p(n), ap(n);
  sys.apply(x, ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  p = r;
  double rs = simd::dot(r.data(), r.data(), n);
  const double bnorm = std::sqrt(simd::dot(b.data(), b.data(), n));
  const double target = options.tolerance * std::max(bnorm, 1.0);
  const int max_iter =
      options.max_iterations > 0 ? options.max_iterations : static_cast<int>(4 * n + 100);

  ChannelResult result;
  while (std::sqrt(rs) > target && result.iterations < max_iter) {
    sys.apply(p, ap);
    const double alpha = rs / simd::dot(p.data(), ap.data(), n);
    simd::axpy(alpha, p.data(), x.data(), n);
    simd::axpy(-alpha, ap.data(), r.data(), n);
    const double rs_new = simd::dot(r.data(), r.data(), n);
    const double beta = rs_new / rs;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    rs = rs_new;
    ++result.iterations;
  }
  // Report the true residual, not the recursively updated one.
  sys.apply(x, ap);
  double true_rs = 0.0;
  for (std::size_t i = 0; i < n; ++i) true_rs += (b[i] - ap[i]) * (b[i] - ap[i]);
  result.residual = std::sqrt(true_rs);
  return result;
}

}  // namespace

Grid laplace_fill(const Grid& g, const Mask& m, const LaplaceOptions& options,
                  LaplaceStats* stats) {
  require(m.same_spatial(g), "laplace_fill: mask dims differ from grid dims");
  Grid out = g;
  const std::size_t masked = m.count();
  if (stats) *stats = LaplaceStats{static_cast<int>(masked), 0, 0.0};
  if (masked == 0) return out;
  require(masked < m.size(), "laplace_fill: grid is fully masked (no boundary data)");

  const LaplaceSystem sys = build_system(m);
  const int c = g.channels();
  std::vector<ChannelResult> results(static_cast<std::size_t>(c));
  parallel_for(0, c, [&](std::ptrdiff_t ch) {
    std::vector<double> x;
    results[ch] = solve_channel(sys, g, static_cast<int>(ch), options, x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      out.storage()[static_cast<std::size_t>(sys.pixel[i]) * c + ch] = x[i];
    }
  });
  if (stats) {
    for (const auto& r : results) {
      stats->iterations = std::max(stats->iterations, r.iterations);
      stats->residual = std::max(stats->residual, r.residual);
    }
  }
  return out;
}

FlowField complete_flow_laplacian(const FlowField& f, const Mask& m, const FlowField* neighbor,
                                  const LaplaceOptions& options) {
  require(f.channels() == 2, "complete_flow_laplacian: flow must have 2 channels");
  require(m.same_spatial(f), "complete_flow_laplacian: mask dims differ from flow dims");
  if (m.size() > 0 && m.count() == m.size()) {
    require(neighbor != nullptr,
            "complete_flow_laplacian: fully masked frame and no neighbour flow");
    require(neighbor->same_shape(f), "complete_flow_laplacian: neighbour shape mismatch");
    return *neighbor;
  }
  return laplace_fill(f, m, options);
}

FlowSequence complete_flows_laplacian(const FlowSequence& flows, const MaskSequence& masks,
                                      const LaplaceOptions& options) {
  require(flows.size() == masks.size(), "complete_flows_laplacian: length mismatch");
  FlowSequence out(flows.size());
  std::vector<bool> done(flows.size(), false);
  for (std::size_t t = 0; t < flows.size(); ++t) {
    if (masks[t].count() == masks[t].size()) continue;
    out[t] = complete_flow_laplacian(flows[t], masks[t], nullptr, options);
    done[t] = true;
  }
  // Fully masked frames copy the nearest completed frame (earlier wins ties).
  for (std::size_t t = 0; t < flows.size(); ++t) {
    if (done[t]) continue;
    const FlowField* nb = nullptr;
    for (std::size_t d = 1; d < flows.size() && !nb; ++d) {
      if (t >= d && done[t - d]) nb = &out[t - d];
      else if (t + d < flows.size() && done[t + d]) nb = &out[t + d];
    }
    out[t] = complete_flow_laplacian(flows[t], masks[t], nb, options);
  }
  return out;
}

void RfcWeights::validate() const {
  require(encoder.size() == 3, "RfcWeights: encoder must have 3 stride-2 layers");
  require(encoder.front().in_channels == 3, "RfcWeights: encoder input must be flow+mask");
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    encoder[i].validate();
    require(encoder[i].kh == 3 && encoder[i].kw == 3, "RfcWeights: encoder kernels must be 3x3");
    if (i > 0) require(encoder[i].in_channels == encoder[i - 1].out_channels,
                       "RfcWeights: encoder chain does not close");
  }
  const int cf = feature_channels();
  backward.validate(plain_condition_channels(cf));
  forward.validate(plain_condition_channels(cf));
  require(backward.channels() == cf && forward.channels() == cf,
          "RfcWeights: alignment width != feature width");
  fuse.validate();
  require(fuse.in_channels == 2 * cf && fuse.out_channels == cf && fuse.kh == 1 && fuse.kw == 1,
          "RfcWeights: fuse must be a 1x1 convolution 2*C_f -> C_f");
  require(decoder.size() == 3, "RfcWeights: decoder must have 3 upsampling layers");
  require(decoder.front().in_channels == cf, "RfcWeights: decoder input width != C_f");
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    decoder[i].validate();
    if (i > 0) require(decoder[i].in_channels == decoder[i - 1].out_channels,
                       "RfcWeights: decoder chain does not close");
  }
  require(decoder.back().out_channels == 2, "RfcWeights: decoder must emit 2 channels");
}

RfcWeights random_rfc_weights(Rng& rng, int feature_channels) {
  RfcWeights w;
  const int cf = feature_channels;
  w.encoder.push_back(random_kernel(rng, cf, 3, 3, 3));
  w.encoder.push_back(random_kernel(rng, cf, cf, 3, 3));
  w.encoder.push_back(random_kernel(rng, cf, cf, 3, 3));
  w.backward = random_alignment_weights(rng, cf, plain_condition_channels(cf));
  w.forward = random_alignment_weights(rng, cf, plain_condition_channels(cf));
  w.fuse = random_kernel(rng, cf, 2 * cf, 1, 1);
  w.decoder.push_back(random_kernel(rng, cf, cf, 3, 3));
  w.decoder.push_back(random_kernel(rng, cf, cf, 3, 3));
  w.decoder.push_back(random_kernel(rng, 2, cf, 3, 3));
  return w;
}

Grid rfc_encode(const FlowField& flow, const Mask& mask, const RfcWeights& w) {
  Grid input(flow.height(), flow.width(), 3);
  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      const bool hole = mask.at(y, x);
      input.at(y, x, 0) = hole ? 0.0 : flow.at(y, x, 0);
      input.at(y, x, 1) = hole ? 0.0 : flow.at(y, x, 1);
      input.at(y, x, 2) = hole ? 1.0 : 0.0;
    }
  }
  Grid feat = input;
  for (const Kernel& k : w.encoder) {
    feat = conv2d(feat, k, 2, 1);
    leaky_relu_inplace(feat, kLeakySlope);
  }
  return feat;
}

Grid rfc_decode(const Grid& feature, const RfcWeights& w) {
  Grid x = feature;
  for (std::size_t i = 0; i < w.decoder.size(); ++i) {
    x = conv_same(upsample2x(x), w.decoder[i]);
    if (i + 1 < w.decoder.size()) leaky_relu_inplace(x, kLeakySlope);
  }
  return x;
}

FlowSequence rfc_forward(const FlowSequence& flows, const MaskSequence& masks,
                         const RfcWeights& w) {
  w.validate();
  require(flows.size() >= 2, "rfc_forward: sequence shorter than 2");
  require(flows.size() == masks.size(), "rfc_forward: flow/mask count mismatch");
  const int h = flows.front().height();
  const int wd = flows.front().width();
  require(h % kRfcDownsample == 0 && wd % kRfcDownsample == 0,
          "rfc_forward: flow dims must be divisible by 8");
  for (std::size_t t = 0; t < flows.size(); ++t) {
    require(flows[t].channels() == 2 && flows[t].height() == h && flows[t].width() == wd,
            "rfc_forward: inconsistent flow dims");
    require(masks[t].same_spatial(flows[t]), "rfc_forward: mask dims differ from flow dims");
  }

  const std::size_t n = flows.size();
  std::vector<Grid> feats(n);
  parallel_for(0, static_cast<std::ptrdiff_t>(n),
               [&](std::ptrdiff_t t) { feats[t] = rfc_encode(flows[t], masks[t], w); });

  std::vector<Grid> bwd(n), fwd(n);
  bwd[n - 1] = feats[n - 1];
  for (std::size_t t = n - 1; t-- > 0;) bwd[t] = align_plain(feats[t], bwd[t + 1], w.backward);
  fwd[0] = feats[0];
  for (std::size_t t = 1; t < n; ++t) fwd[t] = align_plain(feats[t], fwd[t - 1], w.forward);

  FlowSequence out(n);
  for (std::size_t t = 0; t < n; ++t) {
    const Grid fused = conv2d(concat_channels(bwd[t], fwd[t]), w.fuse, 1, 0);
    const Grid decoded = rfc_decode(fused, w);
    FlowField completed = flows[t];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < wd; ++x)
        if (masks[t].at(y, x)) {
          completed.at(y, x, 0) = decoded.at(y, x, 0);
          completed.at(y, x, 1) = decoded.at(y, x, 1);
        }
    out[t] = std::move(completed);
  }
  return out;
}

}  // namespace dualprop
