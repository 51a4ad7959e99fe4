#include "dualprop/feature_prop.hpp"

#include "dualprop/parallel.hpp"

namespace dualprop {

void EncoderWeights::validate() const {
  require(layers.size() == 3, "EncoderWeights: expected 3 layers");
  require(layers.front().in_channels == 4, "EncoderWeights: input must be RGB + mask");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].validate();
    require(layers[i].kh == 3 && layers[i].kw == 3, "EncoderWeights: kernels must be 3x3");
    if (i > 0) require(layers[i].in_channels == layers[i - 1].out_channels,
                       "EncoderWeights: chain does not close");
  }
}

void DecoderWeights::validate() const {
  require(layers.size() == 3, "DecoderWeights: expected 3 layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].validate();
    require(layers[i].kh % 2 == 1 && layers[i].kh == layers[i].kw,
            "DecoderWeights: kernels must be square and odd");
    if (i > 0) require(layers[i].in_channels == layers[i - 1].out_channels,
                       "DecoderWeights: chain does not close");
  }
  require(layers.back().out_channels == 3, "DecoderWeights: last layer must emit RGB");
}

EncoderWeights random_encoder_weights(Rng& rng, int channels) {
  EncoderWeights w;
  const int half = std::max(1, channels / 2);
  w.layers.push_back(random_kernel(rng, half, 4, 3, 3));
  w.layers.push_back(random_kernel(rng, channels, half, 3, 3));
  w.layers.push_back(random_kernel(rng, channels, channels, 3, 3));
  return w;
}

DecoderWeights random_decoder_weights(Rng& rng, int channels) {
  DecoderWeights w;
  const int half = std::max(1, channels / 2);
  w.layers.push_back(random_kernel(rng, channels, channels, 3, 3));
  w.layers.push_back(random_kernel(rng, half, channels, 3, 3));
  w.layers.push_back(random_kernel(rng, 3, half, 3, 3, 0.5));
  return w;
}

Grid encode_frame(const Grid& frame, const Mask& mask, const EncoderWeights& w) {
  require(frame.channels() == 3 && mask.same_spatial(frame), "encode_frame: bad frame/mask");
  const Grid m = mask.to_grid();
  Grid x = concat_channels(frame, m);
  const int strides[3] = {2, 2, 1};
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    x = conv2d(x, w.layers[i], strides[i], 1);
    if (i + 1 < w.layers.size()) leaky_relu_inplace(x, kLeakySlope);
  }
  return x;
}

FeatureMap encode_frames(const LocalClip& clip, const EncoderWeights& w) {
  w.validate();
  require(!clip.frames.empty() && clip.frames.size() == clip.masks.size(),
          "encode_frames: frame/mask count mismatch");
  const Grid& first = clip.frames.front();
  require(first.height() % kFeatureDownsample == 0 && first.width() % kFeatureDownsample == 0,
          "encode_frames: frame dims must be divisible by 4");
  for (const Grid& f : clip.frames) require(f.same_shape(first), "encode_frames: frame dims differ");
  FeatureMap out(clip.frames.size());
  parallel_for(0, static_cast<std::ptrdiff_t>(out.size()), [&](std::ptrdiff_t t) {
    out[t] = encode_frame(clip.frames[t], clip.masks[t], w);
  });
  return out;
}

Grid decode_feature(const Grid& feature, const DecoderWeights& w) {
  Grid x = feature;
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    if (i < 2) x = upsample2x(x);
    x = conv_same(x, w.layers[i]);
    if (i + 1 < w.layers.size()) leaky_relu_inplace(x, kLeakySlope);
  }
  clamp_inplace(x, 0.0, 1.0);
  return x;
}

FrameSequence decode_features(const FeatureMap& features, const DecoderWeights& w) {
  w.validate();
  for (const Grid& f : features) {
    require(f.channels() == w.layers.front().in_channels,
            "decode_features: feature width != decoder input width");
  }
  FrameSequence out(features.size());
  parallel_for(0, static_cast<std::ptrdiff_t>(out.size()),
               [&](std::ptrdiff_t t) { out[t] = decode_feature(features[t], w); });
  return out;
}

FeatureConditions prepare_feature_conditions(const FlowSequence& flows_fwd,
                                             const FlowSequence& flows_bwd,
                                             const MaskSequence& masks,
                                             const MaskSequence& masks_updated, double epsilon,
                                             int downsample) {
  require(flows_fwd.size() == flows_bwd.size() && flows_fwd.size() + 1 == masks.size() &&
              masks.size() == masks_updated.size(),
          "prepare_feature_conditions: sequence length mismatch");
  const Factor down{1, downsample};
  FeatureConditions c;
  for (std::size_t t = 0; t < flows_fwd.size(); ++t) {
    c.flows_fwd.push_back(resize_flow(flows_fwd[t], down));
    c.flows_bwd.push_back(resize_flow(flows_bwd[t], down));
    c.valid_fwd.push_back(
        resize_mask(valid_map(consistency_error(flows_fwd[t], flows_bwd[t]), epsilon), down));
    c.valid_bwd.push_back(
        resize_mask(valid_map(consistency_error(flows_bwd[t], flows_fwd[t]), epsilon), down));
  }
  for (std::size_t t = 0; t < masks.size(); ++t) {
    c.masks.push_back(resize_mask(masks[t], down));
    c.masks_updated.push_back(resize_mask(masks_updated[t], down));
  }
  return c;
}

void FeaturePropWeights::validate(int channels) const {
  backward.validate(flow_guided_condition_channels(channels));
  forward.validate(flow_guided_condition_channels(channels));
  fuse.validate();
  require(fuse.kh == 1 && fuse.kw == 1 && fuse.in_channels == 2 * channels &&
              fuse.out_channels == channels,
          "FeaturePropWeights: fuse must be a 1x1 convolution 2C -> C");
}

FeaturePropWeights random_feature_prop_weights(Rng& rng, int channels) {
  FeaturePropWeights w;
  w.backward = random_alignment_weights(rng, channels, flow_guided_condition_channels(channels));
  w.forward = random_alignment_weights(rng, channels, flow_guided_condition_channels(channels));
  w.fuse = random_kernel(rng, channels, 2 * channels, 1, 1);
  return w;
}

namespace {

void check_conditions(const FeatureMap& e, const FeatureConditions& c) {
  require(!e.empty(), "feature propagation: empty clip");
  const std::size_t n = e.size();
  require(c.flows_fwd.size() + 1 == n && c.flows_bwd.size() + 1 == n &&
              c.valid_fwd.size() + 1 == n && c.valid_bwd.size() + 1 == n &&
              c.masks.size() == n && c.masks_updated.size() == n,
          "feature propagation: condition lengths do not match the clip");
  for (std::size_t t = 0; t < n; ++t) {
    require(e[t].same_shape(e.front()), "feature propagation: feature dims differ across frames");
  }
}

}  // namespace

FeatureMap propagate_features_backward(const FeatureMap& e, const FeatureConditions& cond,
                                       const AlignmentWeights& w) {
  check_conditions(e, cond);
  const std::size_t n = e.size();
  FeatureMap out(n);
  out[n - 1] = e[n - 1];
  for (std::size_t t = n - 1; t-- > 0;) {
    out[t] = align_flow_guided(e[t], out[t + 1], cond.flows_fwd[t], cond.valid_fwd[t],
                               cond.masks[t], cond.masks_updated[t], w);
  }
  return out;
}

FeatureMap propagate_features_forward(const FeatureMap& e, const FeatureConditions& cond,
                                      const AlignmentWeights& w) {
  check_conditions(e, cond);
  const std::size_t n = e.size();
  FeatureMap out(n);
  out[0] = e[0];
  for (std::size_t t = 1; t < n; ++t) {
    out[t] = align_flow_guided(e[t], out[t - 1], cond.flows_bwd[t - 1], cond.valid_bwd[t - 1],
                               cond.masks[t], cond.masks_updated[t], w);
  }
  return out;
}

FeaturePropResult feature_propagate_bidir(const FeatureMap& e, const FeatureConditions& cond,
                                          const FeaturePropWeights& w) {
  check_conditions(e, cond);
  w.validate(e.front().channels());
  FeaturePropResult r;
  const FeatureMap bwd = propagate_features_backward(e, cond, w.backward);
  const FeatureMap fwd = propagate_features_forward(e, cond, w.forward);
  r.backward_alignments = static_cast<int>(e.size()) - 1;
  r.forward_alignments = static_cast<int>(e.size()) - 1;
  r.features.resize(e.size());
  for (std::size_t t = 0; t < e.size(); ++t) {
    r.features[t] = conv2d(concat_channels(bwd[t], fwd[t]), w.fuse, 1, 0);
  }
  return r;
}

}  // namespace dualprop
