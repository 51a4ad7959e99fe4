#include <doctest.h>

#include "dualprop/feature_prop.hpp"
#include "reference.hpp"

using namespace dualprop;

namespace {

Kernel identity_1x1(int c) {
  Kernel k = Kernel::zeros(c, c, 1, 1, false);
  for (int i = 0; i < c; ++i) k.w(i, i, 0, 0) = 1.0;
  return k;
}

AlignmentWeights warp_only(int c) {
  AlignmentWeights w;
  Kernel net = Kernel::zeros(27, flow_guided_condition_channels(c), 3, 3, true);
  for (int t = 0; t < 9; ++t) net.bias[18 + t] = 40.0;
  w.offset_net.push_back(net);
  w.dcn = Kernel::zeros(c, c, 3, 3, false);
  for (int i = 0; i < c; ++i) w.dcn.w(i, i, 1, 1) = 1.0;
  Kernel fuse = Kernel::zeros(c, 2 * c, 1, 1, false);
  for (int i = 0; i < c; ++i) fuse.w(i, i, 0, 0) = 1.0;
  w.fusion.push_back(fuse);
  return w;
}

FeatureConditions random_conditions(Rng& rng, int n, int h, int w) {
  FeatureConditions c;
  for (int t = 0; t + 1 < n; ++t) {
    c.flows_fwd.push_back(ref::random_grid(rng, h, w, 2, -1.5, 1.5));
    c.flows_bwd.push_back(ref::random_grid(rng, h, w, 2, -1.5, 1.5));
    c.valid_fwd.push_back(ref::random_mask(rng, h, w, 0.8));
    c.valid_bwd.push_back(ref::random_mask(rng, h, w, 0.8));
  }
  for (int t = 0; t < n; ++t) {
    c.masks.push_back(ref::random_mask(rng, h, w, 0.3));
    c.masks_updated.push_back(ref::random_mask(rng, h, w, 0.1));
  }
  return c;
}

}  // namespace

TEST_CASE("encoder shape contract") {
  Rng rng(71);
  const EncoderWeights w = random_encoder_weights(rng, 8);
  LocalClip clip;
  for (int t = 0; t < 2; ++t) {
    clip.frames.push_back(ref::random_grid(rng, 240, 432, 3, 0, 1));
    clip.masks.push_back(ref::random_mask(rng, 240, 432, 0.1));
  }
  const FeatureMap e = encode_frames(clip, w);
  REQUIRE(e.size() == 2);
  CHECK(e[0].height() == 60);
  CHECK(e[0].width() == 108);
  CHECK(e[0].channels() == 8);
}

TEST_CASE("encoder matches the oracle and is deterministic") {
  Rng rng(72);
  const EncoderWeights w = random_encoder_weights(rng, 6);
  const Grid f = ref::random_grid(rng, 16, 20, 3, 0, 1);
  const Mask m = ref::random_mask(rng, 16, 20, 0.2);
  CHECK(max_abs_diff(encode_frame(f, m, w), ref::encode(f, m, w)) < 1e-5);
  LocalClip clip{{f, f}, {m, m}};
  const FeatureMap e = encode_frames(clip, w);
  CHECK(e[0] == e[1]);
}

TEST_CASE("encoder rejects indivisible dims") {
  Rng rng(73);
  const EncoderWeights w = random_encoder_weights(rng, 4);
  LocalClip clip{{Grid(18, 20, 3)}, {Mask(18, 20)}};
  CHECK_THROWS_AS(encode_frames(clip, w), Error);
}

TEST_CASE("decoder shape, oracle and clamping") {
  Rng rng(74);
  const DecoderWeights w = random_decoder_weights(rng, 6);
  const FeatureMap feats{ref::random_grid(rng, 5, 7, 6), ref::random_grid(rng, 5, 7, 6)};
  const FrameSequence out = decode_features(feats, w);
  REQUIRE(out.size() == 2);
  CHECK(out[0].height() == 20);
  CHECK(out[0].width() == 28);
  CHECK(out[0].channels() == 3);
  CHECK(max_abs_diff(out[1], ref::decode(feats[1], w)) < 1e-5);

  DecoderWeights clampw;
  clampw.layers = {identity_1x1(2), identity_1x1(2), Kernel::zeros(3, 2, 1, 1, true)};
  clampw.layers[2].bias = {-0.2, 1.3, 0.5};
  const Grid d = decode_feature(Grid(2, 2, 2), clampw);
  CHECK(d.at(3, 3, 0) == 0.0);
  CHECK(d.at(3, 3, 1) == 1.0);
  CHECK(d.at(3, 3, 2) == 0.5);
}

TEST_CASE("encode/decode round trip keeps the frame shape") {
  Rng rng(75);
  const EncoderWeights enc = random_encoder_weights(rng, 4);
  const DecoderWeights dec = random_decoder_weights(rng, 4);
  for (int trial = 0; trial < 5; ++trial) {
    const int h = 4 * rng.uniform_int(1, 8), w = 4 * rng.uniform_int(1, 8);
    const Grid f = ref::random_grid(rng, h, w, 3, 0, 1);
    const Grid y = decode_feature(encode_frame(f, Mask(h, w), enc), dec);
    CHECK(y.same_shape(f));
  }
}

TEST_CASE("degenerate weights chain warps across the clip") {
  Rng rng(76);
  const int c = 3, n = 4;
  FeatureMap e;
  for (int t = 0; t < n; ++t) e.push_back(ref::random_grid(rng, 8, 10, c));
  FeatureConditions cond = random_conditions(rng, n, 8, 10);
  Grid flow(8, 10, 2);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 10; ++x) flow.at(y, x, 0) = 1.0;
  for (auto& f : cond.flows_fwd) f = flow;
  const FeatureMap out = propagate_features_backward(e, cond, warp_only(c));
  Grid expect = e[n - 1];
  for (int t = n - 2; t >= 0; --t) {
    expect = warp_backward(expect, flow);
    CHECK(out[t] == expect);
  }
}

TEST_CASE("bidirectional propagation matches the oracle") {
  Rng rng(77);
  const int c = 4, n = 3;
  const FeaturePropWeights w = random_feature_prop_weights(rng, c);
  FeatureMap e;
  for (int t = 0; t < n; ++t) e.push_back(ref::random_grid(rng, 6, 8, c));
  const FeatureConditions cond = random_conditions(rng, n, 6, 8);
  const FeaturePropResult r = feature_propagate_bidir(e, cond, w);
  const auto want = ref::feature_prop(e, cond, w);
  for (int t = 0; t < n; ++t) CHECK(max_abs_diff(r.features[t], want[t]) < 1e-5);
}

TEST_CASE("two-frame clip runs one alignment per direction") {
  Rng rng(78);
  const FeaturePropWeights w = random_feature_prop_weights(rng, 3);
  FeatureMap e{ref::random_grid(rng, 4, 4, 3), ref::random_grid(rng, 4, 4, 3)};
  const FeaturePropResult r = feature_propagate_bidir(e, random_conditions(rng, 2, 4, 4), w);
  CHECK(r.backward_alignments == 1);
  CHECK(r.forward_alignments == 1);
  CHECK(r.features.size() == 2);
}

TEST_CASE("propagation is local to the clip") {
  Rng rng(79);
  const FeaturePropWeights w = random_feature_prop_weights(rng, 3);
  FeatureMap e;
  for (int t = 0; t < 5; ++t) e.push_back(ref::random_grid(rng, 6, 6, 3));
  const FeatureConditions cond = random_conditions(rng, 5, 6, 6);
  // Sub-clip [1, 4): its output depends only on its own frames and conditions.
  auto sub = [&](const FeatureMap& feats) {
    FeatureConditions c;
    c.flows_fwd = {cond.flows_fwd[1], cond.flows_fwd[2]};
    c.flows_bwd = {cond.flows_bwd[1], cond.flows_bwd[2]};
    c.valid_fwd = {cond.valid_fwd[1], cond.valid_fwd[2]};
    c.valid_bwd = {cond.valid_bwd[1], cond.valid_bwd[2]};
    c.masks = {cond.masks[1], cond.masks[2], cond.masks[3]};
    c.masks_updated = {cond.masks_updated[1], cond.masks_updated[2], cond.masks_updated[3]};
    return feature_propagate_bidir({feats[1], feats[2], feats[3]}, c, w).features;
  };
  const auto a = sub(e);
  FeatureMap changed = e;
  changed[0] = ref::random_grid(rng, 6, 6, 3);
  changed[4] = ref::random_grid(rng, 6, 6, 3);
  CHECK(sub(changed) == a);
}

TEST_CASE("conditions are built at feature resolution") {
  FlowSequence fwd(2, Grid(16, 16, 2)), bwd(2, Grid(16, 16, 2));
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      for (int t = 0; t < 2; ++t) {
        fwd[t].at(y, x, 0) = 8.0;
        bwd[t].at(y, x, 0) = -8.0;
      }
    }
  }
  MaskSequence masks(3, Mask(16, 16, 1));
  const FeatureConditions c = prepare_feature_conditions(fwd, bwd, masks, masks);
  REQUIRE(c.flows_fwd.size() == 2);
  CHECK(c.flows_fwd[0].height() == 4);
  CHECK(c.flows_fwd[0].at(1, 1, 0) == 2.0);
  CHECK(c.flows_bwd[1].at(2, 2, 0) == -2.0);
  CHECK(c.masks[0].height() == 4);
  CHECK(c.masks[0].count() == 16);
  CHECK(c.valid_fwd[0].height() == 4);
  CHECK_THROWS_AS(prepare_feature_conditions(fwd, bwd, MaskSequence(2, Mask(16, 16)), masks), Error);
}
