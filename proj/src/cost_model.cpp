#include "dualprop/cost_model.hpp"

#include <array>
#include <cmath>

namespace dualprop {

void CostConfig::validate() const {
  require(frames > 0 && height > 0 && width > 0 && downsample > 0 && feature_channels > 0 &&
              token_channels > 0 && ffn_hidden > 0 && window_h > 0 && window_w > 0 &&
              kv_stride > 0,
          "CostConfig: all dims must be positive");
  require(mask_ratio >= 0.0 && mask_ratio <= 1.0, "CostConfig: mask ratio outside [0, 1]");
  split.validate();
}

CostReport block_flops(const CostConfig& c) {
  c.validate();
  const double fh = std::max(1, c.height / c.downsample);
  const double fw = std::max(1, c.width / c.downsample);
  const double mh = c.split.tokens_h(static_cast<int>(fh));
  const double nw = c.split.tokens_w(static_cast<int>(fw));
  const long long rows = (static_cast<long long>(mh) + c.window_h - 1) / c.window_h;
  const long long cols = (static_cast<long long>(nw) + c.window_w - 1) / c.window_w;
  const double t = c.frames;
  const double cz = c.token_channels;
  const double patch = c.split.patch_size(c.feature_channels);

  CostReport r;
  r.windows = rows * cols;
  r.active_windows =
      static_cast<long long>(std::ceil(c.mask_ratio * static_cast<double>(r.windows)));
  r.key_frames = (c.frames + c.kv_stride - 1) / c.kv_stride;
  const long long eh = c.expansion ? c.window_h / 2 : 0;
  const long long ew = c.expansion ? c.window_w / 2 : 0;
  r.queries_per_window = static_cast<long long>(c.frames) * c.window_h * c.window_w;
  r.keys_per_window = r.key_frames * (c.window_h + 2 * eh) * (c.window_w + 2 * ew) +
                      (c.global_tokens ? r.key_frames : 0);

  const double tokens = t * mh * nw;
  const double active = static_cast<double>(r.active_windows);
  const double queries = active * static_cast<double>(r.queries_per_window);
  const double logits = queries * static_cast<double>(r.keys_per_window);

  r.split = 2.0 * tokens * patch * cz;
  r.compose = r.split;
  if (r.active_windows > 0) {
    const double kv_tokens = static_cast<double>(r.key_frames) * mh * nw;
    // q and output projection per query; k and v per key-frame token.
    r.projections = 2.0 * (2.0 * queries * cz * cz + 2.0 * kv_tokens * cz * cz);
    r.qk = 2.0 * logits * cz;
    r.softmax = kSoftmaxFlopsPerLogit * logits;
    r.av = 2.0 * logits * cz;
  }
  r.ffn = 2.0 * tokens * 2.0 * cz * c.ffn_hidden;
  r.total = r.split + r.projections + r.qk + r.softmax + r.av + r.ffn + r.compose;
  return r;
}

CostConfig dense_config(CostConfig c) {
  c.mask_ratio = 1.0;
  c.kv_stride = 1;
  c.expansion = false;
  c.global_tokens = false;
  return c;
}

CostConfig sparse_config(CostConfig c, double mask_ratio, int kv_stride) {
  c.mask_ratio = mask_ratio;
  c.kv_stride = kv_stride;
  c.expansion = true;
  c.global_tokens = true;
  return c;
}

namespace {

constexpr std::string_view kFuseFormer = "FuseFormer";
constexpr std::string_view kFgt = "FGT";
constexpr std::string_view kE2fgvi = "E2FGVI";

constexpr std::array kCurves = {
    CurvePoint{kFuseFormer, CurveAxis::kFrames, 10, 75.1},
    CurvePoint{kFuseFormer, CurveAxis::kFrames, 20, 256},
    CurvePoint{kFuseFormer, CurveAxis::kFrames, 30, 544},
    CurvePoint{kFuseFormer, CurveAxis::kFrames, 40, 937},
    CurvePoint{kFgt, CurveAxis::kFrames, 10, 70},
    CurvePoint{kFgt, CurveAxis::kFrames, 20, 168},
    CurvePoint{kFgt, CurveAxis::kFrames, 30, 292},
    CurvePoint{kFgt, CurveAxis::kFrames, 40, 443},
    CurvePoint{kFgt, CurveAxis::kFrames, 50, 620},
    CurvePoint{kFgt, CurveAxis::kFrames, 60, 824},
    CurvePoint{kE2fgvi, CurveAxis::kFrames, 10, 37.65},
    CurvePoint{kE2fgvi, CurveAxis::kFrames, 20, 106},
    CurvePoint{kE2fgvi, CurveAxis::kFrames, 30, 206},
    CurvePoint{kE2fgvi, CurveAxis::kFrames, 40, 336},
    CurvePoint{kE2fgvi, CurveAxis::kFrames, 50, 498},
    CurvePoint{kE2fgvi, CurveAxis::kFrames, 60, 690},
    CurvePoint{kMethodOurs, CurveAxis::kFrames, 10, 25.77},
    CurvePoint{kMethodOurs, CurveAxis::kFrames, 20, 58.1},
    CurvePoint{kMethodOurs, CurveAxis::kFrames, 30, 97},
    CurvePoint{kMethodOurs, CurveAxis::kFrames, 40, 143},
    CurvePoint{kMethodOurs, CurveAxis::kFrames, 50, 195},
    CurvePoint{kMethodOurs, CurveAxis::kFrames, 60, 253},
    CurvePoint{kFgt, CurveAxis::kResolution, 240, 70},
    CurvePoint{kFgt, CurveAxis::kResolution, 480, 463},
    CurvePoint{kFgt, CurveAxis::kResolution, 720, 1880},
    CurvePoint{kE2fgvi, CurveAxis::kResolution, 240, 37.65},
    CurvePoint{kE2fgvi, CurveAxis::kResolution, 480, 151},
    CurvePoint{kE2fgvi, CurveAxis::kResolution, 720, 339},
    CurvePoint{kE2fgvi, CurveAxis::kResolution, 960, 602},
    CurvePoint{kMethodOurs, CurveAxis::kResolution, 240, 25.77},
    CurvePoint{kMethodOurs, CurveAxis::kResolution, 480, 95},
    CurvePoint{kMethodOurs, CurveAxis::kResolution, 720, 212},
    CurvePoint{kMethodOurs, CurveAxis::kResolution, 960, 374},
};

}  // namespace

std::span<const CurvePoint> reference_curves() { return kCurves; }

std::optional<double> reference_gflops(std::string_view method, CurveAxis axis, double x) {
  for (const CurvePoint& p : kCurves) {
    if (p.method == method && p.axis == axis && p.x == x) return p.gflops;
  }
  return std::nullopt;
}

std::vector<std::string_view> reference_methods() {
  return {kMethodOurs, kE2fgvi, kFgt, kFuseFormer};
}

}  // namespace dualprop
