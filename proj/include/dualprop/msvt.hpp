#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dualprop/feature_prop.hpp"
#include "dualprop/grid.hpp"
#include "dualprop/layers.hpp"

namespace dualprop {

inline constexpr int kDefaultNumBlocks = 8;
inline constexpr int kDefaultWindowH = 5;
inline constexpr int kDefaultWindowW = 9;
inline constexpr int kDefaultKvStride = 2;
inline constexpr int kDefaultHeads = 4;
inline constexpr int kDefaultTokenChannels = 128;

// Overlapping patch extraction. Patches are flattened as [ky][kx][c].
struct SoftSplitGeometry {
  int kh = 7, kw = 7;
  int sh = 3, sw = 3;
  int ph = 3, pw = 3;  // zero padding on each side

  static SoftSplitGeometry non_overlapping(int k) { return {k, k, k, k, 0, 0}; }
  void validate() const;
  int tokens_h(int height) const;  // floor((H + 2p - k) / s) + 1
  int tokens_w(int width) const;
  int patch_size(int channels) const { return kh * kw * channels; }
};

// One M x N x C_z grid of patch embeddings per frame.
using TokenGrid = std::vector<Grid>;

Grid soft_split(const Grid& feat, const SoftSplitGeometry& g, const Linear& proj);
// Inverse projection, overlap-add, divide by the number of patches covering
// each pixel. The token grid must be what soft_split yields for out dims.
Grid soft_composition(const Grid& tokens, const SoftSplitGeometry& g, const Linear& inv_proj,
                      int out_h, int out_w);

// Token grid tiled by m x n windows of h x w tokens; bottom/right windows may
// be partial.
struct WindowGrid {
  int tokens_h = 0, tokens_w = 0;
  int window_h = kDefaultWindowH, window_w = kDefaultWindowW;

  int rows() const { return (tokens_h + window_h - 1) / window_h; }
  int cols() const { return (tokens_w + window_w - 1) / window_w; }
  void validate() const;
};

enum class QueryMaskMode {
  kAnyPixel,       // window marked if any mask pixel maps into it
  kStrictNearest,  // one nearest-neighbour sample per window and frame
};

using SparseQueryMask = Mask;  // rows() x cols()

// Mask pixel (y, x) maps to token (floor(y*M/H), floor(x*N/W)) and from there
// to its window.
SparseQueryMask sparse_query_mask(const MaskSequence& masks, const WindowGrid& g,
                                  QueryMaskMode mode = QueryMaskMode::kAnyPixel);

// Even blocks (0-based) use frames 0,2,4,..., odd blocks 1,3,5,...; stride 1
// returns every frame. If the parity has no frame (t_l = 1, odd block) every
// frame is returned instead.
std::vector<int> strided_kv_frames(int block_index, int t_l, int stride = kDefaultKvStride);

// Row-major rows x cols matrix of token vectors.
struct TokenMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  TokenMatrix() = default;
  TokenMatrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
  double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
};

void softmax_inplace(std::span<double> logits);

// Multi-head scaled dot-product attention: per head softmax(q k^T / sqrt(d)) v,
// heads concatenated and, if given, passed through out_proj.
TokenMatrix attention(const TokenMatrix& q, const TokenMatrix& k, const TokenMatrix& v,
                      int heads, const Linear* out_proj = nullptr);

struct LayerNorm {
  std::vector<double> gamma;
  std::vector<double> beta;
  double eps = 1e-5;

  void apply(const double* x, double* y, int n) const;
  static LayerNorm identity(int n);
};

struct MsvtBlockWeights {
  Linear split;    // patch -> C_z
  Linear compose;  // C_z -> patch
  LayerNorm norm1;
  Linear q, k, v, out;
  LayerNorm norm2;
  Linear ffn1;  // C_z -> hidden
  Linear ffn2;  // hidden -> C_z
};

struct MsvtConfig {
  SoftSplitGeometry split;
  int window_h = kDefaultWindowH;
  int window_w = kDefaultWindowW;
  int kv_stride = kDefaultKvStride;
  bool expansion = true;      // keys also cover half a window on each side
  bool global_tokens = true;  // one mean-pooled token per key frame
  QueryMaskMode query_mode = QueryMaskMode::kAnyPixel;
};

struct MsvtWeights {
  int feature_channels = 0;
  int token_channels = 0;
  int heads = kDefaultHeads;
  std::vector<MsvtBlockWeights> blocks;

  void validate(const MsvtConfig& cfg) const;
};

MsvtWeights random_msvt_weights(Rng& rng, const MsvtConfig& cfg, int feature_channels,
                                int token_channels = kDefaultTokenChannels,
                                int heads = kDefaultHeads, int num_blocks = kDefaultNumBlocks);

struct MsvtStats {
  int windows = 0;
  int active_windows = 0;
  long long query_tokens = 0;
  long long key_tokens = 0;  // summed over active windows
  long long qk_macs = 0;     // query-key multiply-accumulates
  long long av_macs = 0;     // probability-value multiply-accumulates
};

// Attention stage on tokens: windows with S_Q = 0 pass through unchanged;
// active windows get tokens + out(attention(norm1(tokens))).
TokenGrid msvt_attention_stage(const TokenGrid& z, const SparseQueryMask& sq,
                               std::span<const int> kv_frames, const MsvtBlockWeights& w,
                               int heads, const MsvtConfig& cfg, MsvtStats* stats = nullptr);

// tokens + ffn2(gelu(ffn1(norm2(tokens)))) for every token.
TokenGrid msvt_ffn_stage(const TokenGrid& z, const MsvtBlockWeights& w);

double gelu(double x);

// One block: soft split, attention stage, FFN stage, soft composition.
// `masks` are the clip's masks at any resolution.
FeatureMap msvt_block_forward(const FeatureMap& feat, const MaskSequence& masks,
                              const MsvtWeights& w, int block_index, const MsvtConfig& cfg,
                              MsvtStats* stats = nullptr);

}  // namespace dualprop
