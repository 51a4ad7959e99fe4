#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dualprop/msvt.hpp"

namespace dualprop {

// Softmax cost per logit: exp, shared sum, divide.
inline constexpr double kSoftmaxFlopsPerLogit = 5.0;
// Fraction of windows carrying mask content used for sparse estimates.
inline constexpr double kDefaultCostMaskRatio = 1.0 / 6.0;

struct CostConfig {
  int frames = 20;
  int height = 240;  // frame pixels; tokens are built on the 1/4-scale features
  int width = 432;
  int downsample = kFeatureDownsample;
  int feature_channels = kDefaultFeatureChannels;
  int token_channels = kDefaultTokenChannels;
  int ffn_hidden = 2 * kDefaultTokenChannels;
  SoftSplitGeometry split;
  int window_h = kDefaultWindowH;
  int window_w = kDefaultWindowW;
  double mask_ratio = 1.0;
  int kv_stride = 1;
  bool expansion = false;
  bool global_tokens = false;

  void validate() const;
};

// FLOPs of one block; one multiply-accumulate counts as 2 FLOPs.
struct CostReport {
  double split = 0;        // soft split projection
  double projections = 0;  // q on active queries, k/v on key frames, output
  double qk = 0;           // query-key logits
  double softmax = 0;
  double av = 0;  // probability-weighted values
  double ffn = 0;
  double compose = 0;  // soft composition projection
  double total = 0;

  long long windows = 0;
  long long active_windows = 0;
  long long key_frames = 0;
  long long queries_per_window = 0;  // over all frames
  long long keys_per_window = 0;     // over all key frames, plus pooled tokens

  double attention_stage() const { return projections + qk + softmax + av; }
};

// Closed form with nominal window sizes: active windows ceil(ratio*m*n), key
// frames ceil(T/stride), expanded windows (h + 2*(h/2)) x (w + 2*(w/2)).
CostReport block_flops(const CostConfig& c);

// Dense windowed attention vs. the sparse configuration (ratio, stride 2,
// expansion, pooled tokens) at the same geometry.
CostConfig dense_config(CostConfig c);
CostConfig sparse_config(CostConfig c, double mask_ratio = kDefaultCostMaskRatio,
                         int kv_stride = kDefaultKvStride);

enum class CurveAxis { kFrames, kResolution };

struct CurvePoint {
  std::string_view method;
  CurveAxis axis;
  double x;  // frames, or frame height in pixels (240/480/720/960)
  double gflops;
};

inline constexpr std::string_view kMethodOurs = "DualProp";

// Published per-block transformer GFLOPs: vs. frame count at 432x240, and vs.
// resolution at 10 frames.
std::span<const CurvePoint> reference_curves();
std::optional<double> reference_gflops(std::string_view method, CurveAxis axis, double x);
std::vector<std::string_view> reference_methods();

}  // namespace dualprop
