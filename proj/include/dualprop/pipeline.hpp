#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dualprop/cost_model.hpp"
#include "dualprop/flow_completion.hpp"
#include "dualprop/image_prop.hpp"
#include "dualprop/msvt.hpp"
#include "dualprop/weights.hpp"

namespace dualprop {

enum class PipelineMode { kPropagationOnly, kWeighted };

inline constexpr int kDefaultClipLength = 20;

struct PipelineConfig {
  double epsilon = kDefaultConsistencyEpsilon;
  int local_length = kDefaultLocalLength;  // training-time clip length; cost-report default
  int clip_length = kDefaultClipLength;    // inference clip length
  int num_blocks = kDefaultNumBlocks;
  int window_h = kDefaultWindowH;
  int window_w = kDefaultWindowW;
  int kv_stride = kDefaultKvStride;
  PipelineMode mode = PipelineMode::kPropagationOnly;
  int max_passes = 4;
  std::uint64_t seed = 0;
  SoftSplitGeometry split;
  bool expansion = true;
  bool global_tokens = true;
  QueryMaskMode query_mode = QueryMaskMode::kAnyPixel;

  MsvtConfig msvt() const;
  // Failures are kConfig errors.
  void validate() const;
};

// Applies "key = value" settings; unknown keys and bad values are kConfig.
void apply_config(PipelineConfig& cfg, const std::map<std::string, std::string>& kv);
PipelineConfig load_config(const std::filesystem::path& path);
PipelineMode parse_mode(const std::string& s);
std::string to_string(PipelineMode m);

struct ClipDiagnostics {
  int start = 0;
  int length = 0;
  std::vector<int> active_windows;  // per block
  int windows = 0;
};

struct PipelineDiagnostics {
  std::string mode;
  std::string flow_completion;  // "laplacian" or "recurrent"
  bool flows_provided = true;
  std::size_t masked_pixels = 0;
  std::vector<std::size_t> remaining_per_pass;  // before the first pass, then after each
  std::size_t propagated_pixels = 0;
  std::size_t residual_pixels = 0;  // holes left after image propagation
  double fill_ratio = 0.0;          // propagated / masked
  std::vector<std::size_t> propagated_per_frame;
  int passes = 0;
  std::vector<ClipDiagnostics> clips;
  long long active_windows_total = 0;
  CostReport cost_dense;
  CostReport cost_sparse;
};

struct PipelineInput {
  FrameSequence frames;
  MaskSequence masks;
  FlowSequence flows_fwd;  // empty: zero motion is assumed
  FlowSequence flows_bwd;
};

struct PipelineResult {
  FrameSequence frames;
  MaskSequence filled;    // pixels filled by image propagation
  MaskSequence residual;  // holes left after image propagation
  FlowSequence flows_fwd; // completed flows
  FlowSequence flows_bwd;
  PipelineDiagnostics diagnostics;
};

// Clip starts for stitching: clip length `clip`, stride clip / 2, the last
// clip aligned to the end of the sequence.
std::vector<int> clip_starts(int frames, int clip);

PipelineResult run_pipeline(const PipelineInput& in, const PipelineConfig& cfg,
                            const ModelWeights* weights = nullptr);

std::string diagnostics_json(const PipelineDiagnostics& d);

}  // namespace dualprop
