#include "dualprop/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>

#include "dualprop/feature_prop.hpp"
#include "dualprop/io.hpp"
#include "dualprop/parallel.hpp"
#include "dualprop/simd/kernels.hpp"

namespace dualprop {

MsvtConfig PipelineConfig::msvt() const {
  MsvtConfig m;
  m.split = split;
  m.window_h = window_h;
  m.window_w = window_w;
  m.kv_stride = kv_stride;
  m.expansion = expansion;
  m.global_tokens = global_tokens;
  m.query_mode = query_mode;
  return m;
}

void PipelineConfig::validate() const {
  auto check = [](bool ok, const char* what) {
    if (!ok) fail(ErrorKind::kConfig, std::string("config: ") + what);
  };
  check(epsilon > 0.0 && std::isfinite(epsilon), "epsilon must be positive");
  check(local_length > 0 && clip_length > 0, "clip lengths must be positive");
  check(num_blocks > 0, "num_blocks must be positive");
  check(window_h > 0 && window_w > 0, "window dims must be positive");
  check(kv_stride > 0, "kv_stride must be positive");
  check(max_passes > 0, "max_passes must be positive");
  check(split.kh > 0 && split.kw > 0 && split.sh > 0 && split.sw > 0 && split.ph >= 0 &&
            split.pw >= 0 && split.sh <= split.kh && split.sw <= split.kw,
        "soft split geometry is invalid");
}

PipelineMode parse_mode(const std::string& s) {
  if (s == "propagation-only") return PipelineMode::kPropagationOnly;
  if (s == "weighted") return PipelineMode::kWeighted;
  fail(ErrorKind::kConfig, "unknown mode '" + s + "' (propagation-only|weighted)");
}

std::string to_string(PipelineMode m) {
  return m == PipelineMode::kWeighted ? "weighted" : "propagation-only";
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end) {
    fail(ErrorKind::kConfig, "config: bad value '" + v + "' for " + key);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  fail(ErrorKind::kConfig, "config: bad boolean '" + v + "' for " + key);
}

}  // namespace

void apply_config(PipelineConfig& cfg, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, v] : kv) {
    if (key == "epsilon") cfg.epsilon = parse_number<double>(key, v);
    else if (key == "local_length") cfg.local_length = parse_number<int>(key, v);
    else if (key == "clip_length") cfg.clip_length = parse_number<int>(key, v);
    else if (key == "num_blocks") cfg.num_blocks = parse_number<int>(key, v);
    else if (key == "window_h") cfg.window_h = parse_number<int>(key, v);
    else if (key == "window_w") cfg.window_w = parse_number<int>(key, v);
    else if (key == "kv_stride") cfg.kv_stride = parse_number<int>(key, v);
    else if (key == "mode") cfg.mode = parse_mode(v);
    else if (key == "max_passes") cfg.max_passes = parse_number<int>(key, v);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, v);
    else if (key == "split_kernel") cfg.split.kh = cfg.split.kw = parse_number<int>(key, v);
    else if (key == "split_stride") cfg.split.sh = cfg.split.sw = parse_number<int>(key, v);
    else if (key == "split_padding") cfg.split.ph = cfg.split.pw = parse_number<int>(key, v);
    else if (key == "expansion") cfg.expansion = parse_bool(key, v);
    else if (key == "global_tokens") cfg.global_tokens = parse_bool(key, v);
    else if (key == "query_mask") {
      if (v == "any") cfg.query_mode = QueryMaskMode::kAnyPixel;
      else if (v == "nearest") cfg.query_mode = QueryMaskMode::kStrictNearest;
      else fail(ErrorKind::kConfig, "config: query_mask must be any|nearest");
    } else {
      fail(ErrorKind::kConfig, "config: unknown key " + key);
    }
  }
  cfg.validate();
}

PipelineConfig load_config(const std::filesystem::path& path) {
  PipelineConfig cfg;
  apply_config(cfg, io::parse_key_values(io::read_file(path)));
  return cfg;
}

std::vector<int> clip_starts(int frames, int clip) {
  require(frames > 0 && clip > 0, "clip_starts: bad arguments");
  if (frames <= clip) return {0};
  const int stride = std::max(1, clip / 2);
  std::vector<int> out;
  for (int s = 0; s + clip < frames; s += stride) out.push_back(s);
  if (out.back() != frames - clip) out.push_back(frames - clip);
  return out;
}

namespace {

// Fills remaining holes of every frame with the Laplacian solver. Frames that
// are entirely masked copy the nearest frame that could be filled.
FrameSequence fill_residual(const FrameSequence& frames, const MaskSequence& masks) {
  const int n = static_cast<int>(frames.size());
  FrameSequence out(frames.size());
  std::vector<char> done(frames.size(), 0);
  for (int t = 0; t < n; ++t) {
    if (masks[t].count() == masks[t].size()) continue;
    out[t] = masks[t].any() ? laplace_fill(frames[t], masks[t]) : frames[t];
    done[t] = 1;
  }
  for (int t = 0; t < n; ++t) {
    if (done[t]) continue;
    int best = -1;
    for (int d = 1; d < n && best < 0; ++d) {
      if (t - d >= 0 && done[t - d]) best = t - d;
      else if (t + d < n && done[t + d]) best = t + d;
    }
    out[t] = best >= 0 ? out[best] : Grid(frames[t].height(), frames[t].width(), frames[t].channels(), 0.5);
  }
  return out;
}

MaskSequence flow_masks(const MaskSequence& masks, std::size_t first, std::size_t count) {
  return MaskSequence(masks.begin() + static_cast<std::ptrdiff_t>(first),
                      masks.begin() + static_cast<std::ptrdiff_t>(first + count));
}

template <typename T>
std::vector<T> slice(const std::vector<T>& v, int start, int len) {
  return std::vector<T>(v.begin() + start, v.begin() + start + len);
}

}  // namespace

PipelineResult run_pipeline(const PipelineInput& in, const PipelineConfig& cfg,
                            const ModelWeights* weights) {
  cfg.validate();
  const int t_count = static_cast<int>(in.frames.size());
  require(t_count > 0, "run_pipeline: no frames");
  require(in.masks.size() == in.frames.size(), "run_pipeline: frame/mask count mismatch");
  const Grid& first = in.frames.front();
  require(first.channels() == 3, "run_pipeline: frames must be RGB");
  for (int t = 0; t < t_count; ++t) {
    require(in.frames[t].same_shape(first) && in.masks[t].same_spatial(first),
            "run_pipeline: frame/mask dims differ");
  }
  if (cfg.mode == PipelineMode::kWeighted && weights == nullptr) {
    fail(ErrorKind::kConfig, "weighted mode needs a weight archive");
  }

  PipelineResult r;
  PipelineDiagnostics& d = r.diagnostics;
  d.mode = to_string(cfg.mode);

  // 1. Flow completion.
  FlowSequence fwd = in.flows_fwd;
  FlowSequence bwd = in.flows_bwd;
  if (fwd.empty() && t_count > 1) {
    d.flows_provided = false;
    fwd.assign(static_cast<std::size_t>(t_count - 1), Grid(first.height(), first.width(), 2));
    bwd = fwd;
  }
  require(fwd.size() == bwd.size() && fwd.size() + 1 == in.frames.size(),
          "run_pipeline: flow count does not match frame count");
  for (std::size_t t = 0; t < fwd.size(); ++t) {
    require(fwd[t].channels() == 2 && fwd[t].same_spatial(first) && bwd[t].same_shape(fwd[t]),
            "run_pipeline: flow dims differ from frames");
  }
  if (t_count > 1) {
    const MaskSequence m_fwd = flow_masks(in.masks, 0, fwd.size());
    const MaskSequence m_bwd = flow_masks(in.masks, 1, bwd.size());
    if (weights != nullptr && weights->rfc &&
        first.height() % kRfcDownsample == 0 && first.width() % kRfcDownsample == 0) {
      d.flow_completion = "recurrent";
      fwd = rfc_forward(fwd, m_fwd, *weights->rfc);
      bwd = rfc_forward(bwd, m_bwd, *weights->rfc);
    } else {
      d.flow_completion = "laplacian";
      fwd = complete_flows_laplacian(fwd, m_fwd);
      bwd = complete_flows_laplacian(bwd, m_bwd);
    }
  } else {
    d.flow_completion = "none";
  }

  // 2. Image propagation.
  PropagationOptions popt;
  popt.epsilon = cfg.epsilon;
  popt.max_passes = cfg.max_passes;
  PropagationState ps = propagate_global(in.frames, in.masks, fwd, bwd, popt);
  for (const Mask& m : in.masks) d.masked_pixels += m.count();
  d.remaining_per_pass = ps.remaining;
  d.passes = ps.pass_count;
  for (const Mask& f : ps.filled) {
    d.propagated_per_frame.push_back(f.count());
    d.propagated_pixels += f.count();
  }
  for (const Mask& m : ps.masks) d.residual_pixels += m.count();
  d.fill_ratio = d.masked_pixels > 0
                     ? static_cast<double>(d.propagated_pixels) / static_cast<double>(d.masked_pixels)
                     : 0.0;

  // Cost of one block at these dims, dense windows vs. the sparse setup.
  CostConfig cc;
  cc.frames = std::min(t_count, cfg.clip_length);
  cc.height = first.height();
  cc.width = first.width();
  cc.split = cfg.split;
  cc.window_h = cfg.window_h;
  cc.window_w = cfg.window_w;
  if (weights != nullptr) {
    cc.feature_channels = weights->msvt.feature_channels;
    cc.token_channels = weights->msvt.token_channels;
    cc.ffn_hidden = weights->msvt.blocks.front().ffn1.out_features;
  }
  if (first.height() / kFeatureDownsample >= cfg.split.kh - 2 * cfg.split.ph &&
      first.width() / kFeatureDownsample >= cfg.split.kw - 2 * cfg.split.pw) {
    d.cost_dense = block_flops(dense_config(cc));
    d.cost_sparse = block_flops(sparse_config(cc, kDefaultCostMaskRatio, cfg.kv_stride));
  }

  // 3. Fill what is left.
  if (cfg.mode == PipelineMode::kPropagationOnly) {
    r.frames = fill_residual(ps.frames, ps.masks);
  } else {
    require(first.height() % kFeatureDownsample == 0 && first.width() % kFeatureDownsample == 0,
            "weighted mode: frame dims must be divisible by 4");
    const ModelWeights& w = *weights;
    const MsvtConfig mcfg = cfg.msvt();
    w.msvt.validate(mcfg);
    if (static_cast<int>(w.msvt.blocks.size()) < cfg.num_blocks) {
      fail(ErrorKind::kConfig, "weighted mode: archive has fewer transformer blocks than num_blocks");
    }

    // Accumulate clip outputs with linear cross-fade weights in overlaps.
    FrameSequence acc(static_cast<std::size_t>(t_count), Grid(first.height(), first.width(), 3));
    std::vector<double> weight_sum(static_cast<std::size_t>(t_count), 0.0);
    const std::vector<int> starts = clip_starts(t_count, cfg.clip_length);
    for (std::size_t ci = 0; ci < starts.size(); ++ci) {
      const int s = starts[ci];
      const int len = std::min(cfg.clip_length, t_count - s);
      ClipDiagnostics cd;
      cd.start = s;
      cd.length = len;

      LocalClip clip{slice(ps.frames, s, len), slice(ps.masks, s, len)};
      FeatureMap e = encode_frames(clip, w.encoder);
      if (len > 1) {
        const FeatureConditions cond = prepare_feature_conditions(
            slice(fwd, s, len - 1), slice(bwd, s, len - 1), slice(in.masks, s, len),
            clip.masks, cfg.epsilon);
        e = feature_propagate_bidir(e, cond, w.feature_prop).features;
      }
      const MaskSequence clip_masks = slice(in.masks, s, len);
      for (int b = 0; b < cfg.num_blocks; ++b) {
        MsvtStats st;
        e = msvt_block_forward(e, clip_masks, w.msvt, b, mcfg, &st);
        cd.active_windows.push_back(st.active_windows);
        cd.windows = st.windows;
        d.active_windows_total += st.active_windows;
      }
      const FrameSequence decoded = decode_features(e, w.decoder);

      for (int i = 0; i < len; ++i) {
        const int t = s + i;
        // Ramp weights across the overlap with the neighbouring clips.
        double wt = 1.0;
        if (ci > 0) {
          const int prev_end = starts[ci - 1] + std::min(cfg.clip_length, t_count - starts[ci - 1]);
          const int overlap = prev_end - s;
          if (i < overlap) wt = static_cast<double>(i + 1) / (overlap + 1);
        }
        if (ci + 1 < starts.size()) {
          const int next = starts[ci + 1];
          const int overlap = s + len - next;
          if (t >= next) wt *= static_cast<double>(s + len - t) / (overlap + 1);
        }
        simd::axpy(wt, decoded[i].values().data(), acc[t].values().data(), acc[t].size());
        weight_sum[t] += wt;
      }
      d.clips.push_back(std::move(cd));
    }
    // Composite: decoded content inside the original masks, input elsewhere.
    r.frames = in.frames;
    for (int t = 0; t < t_count; ++t) {
      const double inv = 1.0 / weight_sum[t];
      for (int y = 0; y < first.height(); ++y) {
        for (int x = 0; x < first.width(); ++x) {
          if (!in.masks[t].at(y, x)) continue;
          const auto src = acc[t].pixel(y, x);
          auto dst = r.frames[t].pixel(y, x);
          for (int c = 0; c < 3; ++c) dst[c] = src[c] * inv;
        }
      }
    }
  }

  r.filled = std::move(ps.filled);
  r.residual = std::move(ps.masks);
  r.flows_fwd = std::move(fwd);
  r.flows_bwd = std::move(bwd);
  return r;
}

namespace {

nlohmann::ordered_json cost_json(const CostReport& c) {
  return {{"split", c.split},       {"projections", c.projections},
          {"qk", c.qk},             {"softmax", c.softmax},
          {"av", c.av},             {"ffn", c.ffn},
          {"compose", c.compose},   {"total", c.total},
          {"windows", c.windows},   {"active_windows", c.active_windows},
          {"key_frames", c.key_frames}};
}

}  // namespace

std::string diagnostics_json(const PipelineDiagnostics& d) {
  nlohmann::ordered_json j;
  j["mode"] = d.mode;
  j["flow_completion"] = d.flow_completion;
  j["flows_provided"] = d.flows_provided;
  j["masked_pixels"] = d.masked_pixels;
  j["remaining_per_pass"] = d.remaining_per_pass;
  j["passes"] = d.passes;
  j["propagated_pixels"] = d.propagated_pixels;
  j["propagated_per_frame"] = d.propagated_per_frame;
  j["residual_pixels"] = d.residual_pixels;
  j["fill_ratio"] = d.fill_ratio;
  nlohmann::ordered_json clips = nlohmann::ordered_json::array();
  for (const ClipDiagnostics& c : d.clips) {
    clips.push_back({{"start", c.start},
                     {"length", c.length},
                     {"windows", c.windows},
                     {"active_windows", c.active_windows}});
  }
  j["clips"] = clips;
  j["active_windows_total"] = d.active_windows_total;
  j["cost_per_block"] = {{"dense", cost_json(d.cost_dense)}, {"sparse", cost_json(d.cost_sparse)}};
  return j.dump(2) + "\n";
}

}  // namespace dualprop
