#include "dualprop/msvt.hpp"

#include <algorithm>
#include <cmath>

#include "dualprop/parallel.hpp"
#include "dualprop/simd/kernels.hpp"

namespace dualprop {

void SoftSplitGeometry::validate() const {
  require(kh > 0 && kw > 0 && sh > 0 && sw > 0 && ph >= 0 && pw >= 0,
          "soft split: kernel/stride must be positive and padding non-negative");
  require(sh <= kh && sw <= kw, "soft split: stride must not exceed the kernel");
}

int SoftSplitGeometry::tokens_h(int height) const {
  const int span = height + 2 * ph - kh;
  require(span >= 0, "soft split: kernel taller than the padded input");
  return span / sh + 1;
}

int SoftSplitGeometry::tokens_w(int width) const {
  const int span = width + 2 * pw - kw;
  require(span >= 0, "soft split: kernel wider than the padded input");
  return span / sw + 1;
}

Grid soft_split(const Grid& feat, const SoftSplitGeometry& g, const Linear& proj) {
  g.validate();
  proj.validate();
  const int c = feat.channels();
  require(proj.in_features == g.patch_size(c), "soft_split: projection input != patch size");
  const int mh = g.tokens_h(feat.height());
  const int nw = g.tokens_w(feat.width());
  Grid out(mh, nw, proj.out_features);
  parallel_for(0, mh, [&](std::ptrdiff_t i) {
    std::vector<double> patch(static_cast<std::size_t>(g.patch_size(c)));
    for (int j = 0; j < nw; ++j) {
      std::fill(patch.begin(), patch.end(), 0.0);
      const int y0 = static_cast<int>(i) * g.sh - g.ph;
      const int x0 = j * g.sw - g.pw;
      for (int ky = 0; ky < g.kh; ++ky) {
        const int y = y0 + ky;
        if (y < 0 || y >= feat.height()) continue;
        for (int kx = 0; kx < g.kw; ++kx) {
          const int x = x0 + kx;
          if (x < 0 || x >= feat.width()) continue;
          const auto src = feat.pixel(y, x);
          std::copy(src.begin(), src.end(),
                    patch.begin() + (static_cast<std::ptrdiff_t>(ky) * g.kw + kx) * c);
        }
      }
      proj.apply(patch.data(), out.pixel(static_cast<int>(i), j).data());
    }
  });
  return out;
}

Grid soft_composition(const Grid& tokens, const SoftSplitGeometry& g, const Linear& inv_proj,
                      int out_h, int out_w) {
  g.validate();
  inv_proj.validate();
  require(inv_proj.in_features == tokens.channels(),
          "soft_composition: projection input != token width");
  require(inv_proj.out_features % (g.kh * g.kw) == 0,
          "soft_composition: projection output is not a whole patch");
  require(tokens.height() == g.tokens_h(out_h) && tokens.width() == g.tokens_w(out_w),
          "soft_composition: token grid does not match the output geometry");
  const int c = inv_proj.out_features / (g.kh * g.kw);
  const int mh = tokens.height();
  const int nw = tokens.width();

  Grid patches(mh, nw, inv_proj.out_features);
  parallel_for(0, mh, [&](std::ptrdiff_t i) {
    for (int j = 0; j < nw; ++j) {
      inv_proj.apply(tokens.pixel(static_cast<int>(i), j).data(),
                     patches.pixel(static_cast<int>(i), j).data());
    }
  });

  // Gather per output row so rows can be filled independently.
  Grid out(out_h, out_w, c);
  parallel_for(0, out_h, [&](std::ptrdiff_t yy) {
    const int y = static_cast<int>(yy);
    std::vector<int> count(static_cast<std::size_t>(out_w), 0);
    for (int i = 0; i < mh; ++i) {
      const int ky = y - (i * g.sh - g.ph);
      if (ky < 0 || ky >= g.kh) continue;
      for (int j = 0; j < nw; ++j) {
        const int x0 = j * g.sw - g.pw;
        const auto patch = patches.pixel(i, j);
        for (int kx = 0; kx < g.kw; ++kx) {
          const int x = x0 + kx;
          if (x < 0 || x >= out_w) continue;
          const double* src = patch.data() + (static_cast<std::ptrdiff_t>(ky) * g.kw + kx) * c;
          auto dst = out.pixel(y, x);
          for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
          ++count[x];
        }
      }
    }
    for (int x = 0; x < out_w; ++x) {
      if (count[x] == 0) continue;
      const double inv = 1.0 / count[x];
      for (double& v : out.pixel(y, x)) v *= inv;
    }
  });
  return out;
}

void WindowGrid::validate() const {
  require(tokens_h > 0 && tokens_w > 0 && window_h > 0 && window_w > 0,
          "window grid: dims must be positive");
}

SparseQueryMask sparse_query_mask(const MaskSequence& masks, const WindowGrid& g,
                                  QueryMaskMode mode) {
  g.validate();
  const int rows = g.rows();
  const int cols = g.cols();
  SparseQueryMask sq(rows, cols, 0);
  for (const Mask& m : masks) {
    const int h = m.height();
    const int w = m.width();
    if (h == 0 || w == 0) continue;
    if (mode == QueryMaskMode::kAnyPixel) {
      for (int y = 0; y < h; ++y) {
        const int wi = static_cast<int>(static_cast<long long>(y) * g.tokens_h / h) / g.window_h;
        for (int x = 0; x < w; ++x) {
          if (!m.at(y, x)) continue;
          const int wj =
              static_cast<int>(static_cast<long long>(x) * g.tokens_w / w) / g.window_w;
          sq.set(wi, wj, true);
        }
      }
    } else {
      for (int i = 0; i < rows; ++i) {
        const int y = static_cast<int>(static_cast<long long>(i) * h / rows);
        for (int j = 0; j < cols; ++j) {
          const int x = static_cast<int>(static_cast<long long>(j) * w / cols);
          if (m.at(y, x)) sq.set(i, j, true);
        }
      }
    }
  }
  return sq;
}

std::vector<int> strided_kv_frames(int block_index, int t_l, int stride) {
  require(block_index >= 0 && t_l > 0 && stride > 0, "strided_kv_frames: bad arguments");
  std::vector<int> frames;
  const int start = stride == 1 ? 0 : block_index % 2;
  for (int t = start; t < t_l; t += stride) frames.push_back(t);
  if (frames.empty()) {
    for (int t = 0; t < t_l; ++t) frames.push_back(t);
  }
  return frames;
}

void softmax_inplace(std::span<double> logits) {
  if (logits.empty()) return;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    sum += v;
  }
  const double inv = 1.0 / sum;
  for (double& v : logits) v *= inv;
}

TokenMatrix attention(const TokenMatrix& q, const TokenMatrix& k, const TokenMatrix& v,
                      int heads, const Linear* out_proj) {
  require(heads > 0 && q.cols % heads == 0, "attention: width not divisible by heads");
  require(k.cols == q.cols && v.cols == q.cols && k.rows == v.rows && k.rows > 0,
          "attention: q/k/v dims disagree");
  const int d = q.cols / heads;
  const int nk = k.rows;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  TokenMatrix cat(q.rows, q.cols);
  // Transposed head slices so the inner loops run over keys.
  std::vector<double> kt(static_cast<std::size_t>(d) * nk);
  std::vector<double> vt(static_cast<std::size_t>(d) * nk);
  std::vector<double> logits(static_cast<std::size_t>(nk));
  for (int h = 0; h < heads; ++h) {
    for (int r = 0; r < nk; ++r) {
      for (int dd = 0; dd < d; ++dd) {
        kt[static_cast<std::size_t>(dd) * nk + r] = k.row(r)[h * d + dd];
        vt[static_cast<std::size_t>(dd) * nk + r] = v.row(r)[h * d + dd];
      }
    }
    for (int i = 0; i < q.rows; ++i) {
      std::fill(logits.begin(), logits.end(), 0.0);
      const double* qi = q.row(i) + h * d;
      for (int dd = 0; dd < d; ++dd) {
        simd::axpy(qi[dd] * scale, kt.data() + static_cast<std::size_t>(dd) * nk,
                   logits.data(), nk);
      }
      softmax_inplace(logits);
      double* dst = cat.row(i) + h * d;
      for (int dd = 0; dd < d; ++dd) {
        dst[dd] = simd::dot(logits.data(), vt.data() + static_cast<std::size_t>(dd) * nk, nk);
      }
    }
  }
  if (out_proj == nullptr) return cat;
  out_proj->validate();
  require(out_proj->in_features == q.cols, "attention: output projection width mismatch");
  TokenMatrix out(q.rows, out_proj->out_features);
  for (int i = 0; i < q.rows; ++i) out_proj->apply(cat.row(i), out.row(i));
  return out;
}

void LayerNorm::apply(const double* x, double* y, int n) const {
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += x[i];
  mean /= n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
  var /= n;
  const double inv = 1.0 / std::sqrt(var + eps);
  for (int i = 0; i < n; ++i) y[i] = (x[i] - mean) * inv * gamma[i] + beta[i];
}

LayerNorm LayerNorm::identity(int n) {
  LayerNorm ln;
  ln.gamma.assign(static_cast<std::size_t>(n), 1.0);
  ln.beta.assign(static_cast<std::size_t>(n), 0.0);
  return ln;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

namespace {

void check_linear(const Linear& l, int in, int out, const char* name) {
  l.validate();
  require(l.in_features == in && l.out_features == out,
          std::string("MsvtWeights: bad shape for ") + name);
}

void check_norm(const LayerNorm& n, int width) {
  require(static_cast<int>(n.gamma.size()) == width && static_cast<int>(n.beta.size()) == width,
          "MsvtWeights: layer norm width mismatch");
}

}  // namespace

void MsvtWeights::validate(const MsvtConfig& cfg) const {
  cfg.split.validate();
  require(feature_channels > 0 && token_channels > 0, "MsvtWeights: widths must be positive");
  require(heads > 0 && token_channels % heads == 0,
          "MsvtWeights: token width not divisible by head count");
  require(!blocks.empty(), "MsvtWeights: no blocks");
  const int patch = cfg.split.patch_size(feature_channels);
  for (const MsvtBlockWeights& b : blocks) {
    check_linear(b.split, patch, token_channels, "split");
    check_linear(b.compose, token_channels, patch, "compose");
    check_linear(b.q, token_channels, token_channels, "q");
    check_linear(b.k, token_channels, token_channels, "k");
    check_linear(b.v, token_channels, token_channels, "v");
    check_linear(b.out, token_channels, token_channels, "out");
    check_norm(b.norm1, token_channels);
    check_norm(b.norm2, token_channels);
    require(b.ffn1.in_features == token_channels && b.ffn2.out_features == token_channels &&
                b.ffn1.out_features == b.ffn2.in_features,
            "MsvtWeights: bad feed-forward shapes");
    b.ffn1.validate();
    b.ffn2.validate();
  }
}

MsvtWeights random_msvt_weights(Rng& rng, const MsvtConfig& cfg, int feature_channels,
                                int token_channels, int heads, int num_blocks) {
  MsvtWeights w;
  w.feature_channels = feature_channels;
  w.token_channels = token_channels;
  w.heads = heads;
  const int patch = cfg.split.patch_size(feature_channels);
  for (int b = 0; b < num_blocks; ++b) {
    MsvtBlockWeights bw;
    bw.split = random_linear(rng, patch, token_channels);
    bw.compose = random_linear(rng, token_channels, patch);
    bw.norm1 = LayerNorm::identity(token_channels);
    bw.q = random_linear(rng, token_channels, token_channels);
    bw.k = random_linear(rng, token_channels, token_channels);
    bw.v = random_linear(rng, token_channels, token_channels);
    bw.out = random_linear(rng, token_channels, token_channels, 0.5);
    bw.norm2 = LayerNorm::identity(token_channels);
    bw.ffn1 = random_linear(rng, token_channels, 2 * token_channels);
    bw.ffn2 = random_linear(rng, 2 * token_channels, token_channels, 0.5);
    w.blocks.push_back(std::move(bw));
  }
  return w;
}

namespace {

Grid normalize_tokens(const Grid& z, const LayerNorm& ln) {
  Grid out(z.height(), z.width(), z.channels());
  for (int y = 0; y < z.height(); ++y) {
    for (int x = 0; x < z.width(); ++x) {
      ln.apply(z.pixel(y, x).data(), out.pixel(y, x).data(), z.channels());
    }
  }
  return out;
}

Grid project_tokens(const Grid& z, const Linear& l) { return apply_pointwise(z, l); }

struct Span2 {
  int r0, r1, c0, c1;  // half-open
};

}  // namespace

TokenGrid msvt_attention_stage(const TokenGrid& z, const SparseQueryMask& sq,
                               std::span<const int> kv_frames, const MsvtBlockWeights& w,
                               int heads, const MsvtConfig& cfg, MsvtStats* stats) {
  require(!z.empty(), "attention stage: empty token grid");
  const int t_count = static_cast<int>(z.size());
  const int mh = z.front().height();
  const int nw = z.front().width();
  const int cz = z.front().channels();
  for (const Grid& g : z) require(g.same_shape(z.front()), "attention stage: token dims differ");
  require(!kv_frames.empty(), "attention stage: no key frames");
  for (int f : kv_frames) require(f >= 0 && f < t_count, "attention stage: key frame out of range");
  const WindowGrid wg{mh, nw, cfg.window_h, cfg.window_w};
  wg.validate();
  require(sq.height() == wg.rows() && sq.width() == wg.cols(),
          "attention stage: query mask does not match the window grid");

  TokenGrid out = z;
  std::vector<int> active;
  for (int i = 0; i < wg.rows(); ++i) {
    for (int j = 0; j < wg.cols(); ++j) {
      if (sq.at(i, j)) active.push_back(i * wg.cols() + j);
    }
  }
  MsvtStats local;
  local.windows = wg.rows() * wg.cols();
  local.active_windows = static_cast<int>(active.size());
  if (active.empty()) {
    if (stats) *stats = local;
    return out;
  }

  TokenGrid zn(t_count);
  parallel_for(0, t_count, [&](std::ptrdiff_t t) { zn[t] = normalize_tokens(z[t], w.norm1); });
  // Keys and values for every token of the key frames, plus pooled tokens.
  const int nkv = static_cast<int>(kv_frames.size());
  std::vector<Grid> keys(nkv), vals(nkv);
  TokenMatrix gk(nkv, cz), gv(nkv, cz);
  parallel_for(0, nkv, [&](std::ptrdiff_t f) {
    const Grid& src = zn[kv_frames[f]];
    keys[f] = project_tokens(src, w.k);
    vals[f] = project_tokens(src, w.v);
    std::vector<double> mean(static_cast<std::size_t>(cz), 0.0);
    for (int y = 0; y < mh; ++y) {
      for (int x = 0; x < nw; ++x) {
        const auto p = src.pixel(y, x);
        for (int c = 0; c < cz; ++c) mean[c] += p[c];
      }
    }
    for (double& m : mean) m /= static_cast<double>(mh) * nw;
    w.k.apply(mean.data(), gk.row(static_cast<int>(f)));
    w.v.apply(mean.data(), gv.row(static_cast<int>(f)));
  });

  const int eh = cfg.expansion ? cfg.window_h / 2 : 0;
  const int ew = cfg.expansion ? cfg.window_w / 2 : 0;
  std::vector<MsvtStats> per_window(active.size());
  // Windows own disjoint query tokens, so each task writes only its own.
  parallel_for(0, static_cast<std::ptrdiff_t>(active.size()), [&](std::ptrdiff_t a) {
    const int wi = active[a] / wg.cols();
    const int wj = active[a] % wg.cols();
    const Span2 qs{wi * cfg.window_h, std::min(mh, (wi + 1) * cfg.window_h), wj * cfg.window_w,
                   std::min(nw, (wj + 1) * cfg.window_w)};
    const Span2 ks{std::max(0, qs.r0 - eh), std::min(mh, qs.r1 + eh), std::max(0, qs.c0 - ew),
                   std::min(nw, qs.c1 + ew)};
    const int per_frame_q = (qs.r1 - qs.r0) * (qs.c1 - qs.c0);
    const int per_frame_k = (ks.r1 - ks.r0) * (ks.c1 - ks.c0);
    const int nq = per_frame_q * t_count;
    const int nk = per_frame_k * nkv + (cfg.global_tokens ? nkv : 0);

    TokenMatrix q(nq, cz), k(nk, cz), v(nk, cz);
    int r = 0;
    for (int t = 0; t < t_count; ++t) {
      for (int y = qs.r0; y < qs.r1; ++y) {
        for (int x = qs.c0; x < qs.c1; ++x) w.q.apply(zn[t].pixel(y, x).data(), q.row(r++));
      }
    }
    r = 0;
    for (int f = 0; f < nkv; ++f) {
      for (int y = ks.r0; y < ks.r1; ++y) {
        for (int x = ks.c0; x < ks.c1; ++x) {
          const auto kp = keys[f].pixel(y, x);
          const auto vp = vals[f].pixel(y, x);
          std::copy(kp.begin(), kp.end(), k.row(r));
          std::copy(vp.begin(), vp.end(), v.row(r));
          ++r;
        }
      }
    }
    if (cfg.global_tokens) {
      for (int f = 0; f < nkv; ++f) {
        std::copy(gk.row(f), gk.row(f) + cz, k.row(r));
        std::copy(gv.row(f), gv.row(f) + cz, v.row(r));
        ++r;
      }
    }
    const TokenMatrix o = attention(q, k, v, heads, &w.out);
    r = 0;
    for (int t = 0; t < t_count; ++t) {
      for (int y = qs.r0; y < qs.r1; ++y) {
        for (int x = qs.c0; x < qs.c1; ++x) {
          auto dst = out[t].pixel(y, x);
          const double* add = o.row(r++);
          for (int c = 0; c < cz; ++c) dst[c] += add[c];
        }
      }
    }
    MsvtStats& s = per_window[a];
    s.query_tokens = nq;
    s.key_tokens = nk;
    s.qk_macs = static_cast<long long>(nq) * nk * cz;
    s.av_macs = s.qk_macs;
  });
  for (const MsvtStats& s : per_window) {
    local.query_tokens += s.query_tokens;
    local.key_tokens += s.key_tokens;
    local.qk_macs += s.qk_macs;
    local.av_macs += s.av_macs;
  }
  if (stats) *stats = local;
  return out;
}

TokenGrid msvt_ffn_stage(const TokenGrid& z, const MsvtBlockWeights& w) {
  TokenGrid out(z.size());
  parallel_for(0, static_cast<std::ptrdiff_t>(z.size()), [&](std::ptrdiff_t t) {
    const Grid& src = z[t];
    const int cz = src.channels();
    Grid dst = src;
    std::vector<double> n(static_cast<std::size_t>(cz));
    std::vector<double> hidden(static_cast<std::size_t>(w.ffn1.out_features));
    std::vector<double> back(static_cast<std::size_t>(cz));
    for (int y = 0; y < src.height(); ++y) {
      for (int x = 0; x < src.width(); ++x) {
        w.norm2.apply(src.pixel(y, x).data(), n.data(), cz);
        w.ffn1.apply(n.data(), hidden.data());
        for (double& hv : hidden) hv = gelu(hv);
        w.ffn2.apply(hidden.data(), back.data());
        auto p = dst.pixel(y, x);
        for (int c = 0; c < cz; ++c) p[c] += back[c];
      }
    }
    out[t] = std::move(dst);
  });
  return out;
}

FeatureMap msvt_block_forward(const FeatureMap& feat, const MaskSequence& masks,
                              const MsvtWeights& w, int block_index, const MsvtConfig& cfg,
                              MsvtStats* stats) {
  w.validate(cfg);
  require(!feat.empty() && masks.size() == feat.size(),
          "msvt_block_forward: feature/mask count mismatch");
  require(block_index >= 0 && block_index < static_cast<int>(w.blocks.size()),
          "msvt_block_forward: block index out of range");
  for (const Grid& f : feat) {
    require(f.same_shape(feat.front()) && f.channels() == w.feature_channels,
            "msvt_block_forward: feature dims differ from the weights");
  }
  const MsvtBlockWeights& bw = w.blocks[block_index];
  const int t_count = static_cast<int>(feat.size());
  const int fh = feat.front().height();
  const int fw = feat.front().width();

  TokenGrid z(feat.size());
  for (int t = 0; t < t_count; ++t) z[t] = soft_split(feat[t], cfg.split, bw.split);
  const WindowGrid wg{z.front().height(), z.front().width(), cfg.window_h, cfg.window_w};
  const SparseQueryMask sq = sparse_query_mask(masks, wg, cfg.query_mode);
  const std::vector<int> kv = strided_kv_frames(block_index, t_count, cfg.kv_stride);
  z = msvt_attention_stage(z, sq, kv, bw, w.heads, cfg, stats);
  z = msvt_ffn_stage(z, bw);

  FeatureMap out(feat.size());
  for (int t = 0; t < t_count; ++t) out[t] = soft_composition(z[t], cfg.split, bw.compose, fh, fw);
  return out;
}

}  // namespace dualprop
