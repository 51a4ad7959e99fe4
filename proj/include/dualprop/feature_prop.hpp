#pragma once

#include <vector>

#include "dualprop/align.hpp"
#include "dualprop/flow_ops.hpp"
#include "dualprop/grid.hpp"

namespace dualprop {

inline constexpr int kFeatureDownsample = 4;
inline constexpr int kDefaultLocalLength = 10;
inline constexpr int kDefaultFeatureChannels = 64;

// One grid per frame, h x w x C.
using FeatureMap = std::vector<Grid>;

// Frames of a local window with the masks left after image propagation.
struct LocalClip {
  FrameSequence frames;
  MaskSequence masks;
};

// Three 3x3 convolutions with strides 2, 2, 1: (RGB + mask) -> C at 1/4
// scale; leaky ReLU between layers.
struct EncoderWeights {
  std::vector<Kernel> layers;
  int channels() const { return layers.empty() ? 0 : layers.back().out_channels; }
  void validate() const;
};

// Upsample + conv, upsample + conv, conv: C at 1/4 scale -> RGB; leaky ReLU
// between layers; output clamped to [0, 1].
struct DecoderWeights {
  std::vector<Kernel> layers;
  void validate() const;
};

EncoderWeights random_encoder_weights(Rng& rng, int channels = kDefaultFeatureChannels);
DecoderWeights random_decoder_weights(Rng& rng, int channels = kDefaultFeatureChannels);

FeatureMap encode_frames(const LocalClip& clip, const EncoderWeights& w);
Grid encode_frame(const Grid& frame, const Mask& mask, const EncoderWeights& w);
FrameSequence decode_features(const FeatureMap& features, const DecoderWeights& w);
Grid decode_feature(const Grid& feature, const DecoderWeights& w);

// Per-frame conditions at feature resolution. For the backward pass at frame
// t: flows_fwd[t] (t -> t+1) and valid_fwd[t]; for the forward pass at frame
// t: flows_bwd[t-1] (t -> t-1) and valid_bwd[t-1].
struct FeatureConditions {
  FlowSequence flows_fwd;
  FlowSequence flows_bwd;
  std::vector<ValidMap> valid_fwd;
  std::vector<ValidMap> valid_bwd;
  MaskSequence masks;          // original masks, downsampled
  MaskSequence masks_updated;  // masks after image propagation, downsampled
};

// Builds conditions from full-resolution inputs: flows via resize_flow,
// validity maps (consistency check at full resolution) and masks via nearest.
FeatureConditions prepare_feature_conditions(const FlowSequence& flows_fwd,
                                             const FlowSequence& flows_bwd,
                                             const MaskSequence& masks,
                                             const MaskSequence& masks_updated,
                                             double epsilon = kDefaultConsistencyEpsilon,
                                             int downsample = kFeatureDownsample);

struct FeaturePropWeights {
  AlignmentWeights backward;
  AlignmentWeights forward;
  Kernel fuse;  // 1x1, 2C -> C
  void validate(int channels) const;
};

FeaturePropWeights random_feature_prop_weights(Rng& rng, int channels = kDefaultFeatureChannels);

// e_hat[T-1] = e[T-1]; e_hat[t] = align_flow_guided(e[t], e_hat[t+1], ...).
FeatureMap propagate_features_backward(const FeatureMap& e, const FeatureConditions& cond,
                                       const AlignmentWeights& w);
// e_hat[0] = e[0]; e_hat[t] = align_flow_guided(e[t], e_hat[t-1], ...).
FeatureMap propagate_features_forward(const FeatureMap& e, const FeatureConditions& cond,
                                      const AlignmentWeights& w);

struct FeaturePropResult {
  FeatureMap features;
  int backward_alignments = 0;
  int forward_alignments = 0;
};

// Both passes, fused per frame by concatenation + 1x1 convolution.
FeaturePropResult feature_propagate_bidir(const FeatureMap& e, const FeatureConditions& cond,
                                          const FeaturePropWeights& w);

}  // namespace dualprop
