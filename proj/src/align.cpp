#include "dualprop/align.hpp"

#include <algorithm>
#include <cmath>

#include "dualprop/parallel.hpp"
#include "dualprop/simd/kernels.hpp"

namespace dualprop {

Grid dcn_forward(const Grid& x, const OffsetField& offsets, const ModulationField& modulation,
                 const Kernel& k) {
  k.validate();
  require(k.kh % 2 == 1 && k.kw % 2 == 1, "dcn_forward: kernel must be odd-sized");
  require(k.in_channels == x.channels(), "dcn_forward: kernel/input channel mismatch");
  const int taps = k.taps();
  require(offsets.values.same_spatial(x) && offsets.values.channels() == 2 * taps,
          "dcn_forward: offset field does not match input dims and kernel taps");
  require(modulation.values.same_spatial(x) && modulation.values.channels() == taps,
          "dcn_forward: modulation field does not match input dims and kernel taps");

  const int h = x.height();
  const int w = x.width();
  const int cin = x.channels();
  const int pad_y = (k.kh - 1) / 2;
  const int pad_x = (k.kw - 1) / 2;
  const std::size_t patch_len = static_cast<std::size_t>(taps) * cin;
  const std::vector<double> packed = k.pack_tap_major();

  Grid out(h, w, k.out_channels);
  parallel_for(0, h, [&](std::ptrdiff_t yy) {
    const int y = static_cast<int>(yy);
    std::vector<double> patch(patch_len);
    for (int px = 0; px < w; ++px) {
      const auto off = offsets.values.pixel(y, px);
      const auto mod = modulation.values.pixel(y, px);
      for (int t = 0; t < taps; ++t) {
        double* dst = patch.data() + static_cast<std::size_t>(t) * cin;
        const int by = y + t / k.kw - pad_y;
        const int bx = px + t % k.kw - pad_x;
        if (by < 0 || by >= h || bx < 0 || bx >= w) {
          std::fill(dst, dst + cin, 0.0);
          continue;
        }
        bilinear_sample(x, bx + off[2 * t], by + off[2 * t + 1],
                        std::span<double>(dst, static_cast<std::size_t>(cin)));
        const double m = mod[t];
        for (int c = 0; c < cin; ++c) dst[c] *= m;
      }
      auto o = out.pixel(y, px);
      for (int oc = 0; oc < k.out_channels; ++oc) {
        const double b = k.bias.empty() ? 0.0 : k.bias[oc];
        o[oc] = b + simd::dot(packed.data() + oc * patch_len, patch.data(), patch_len);
      }
    }
  });
  return out;
}

void AlignmentWeights::validate(int condition_channels) const {
  dcn.validate();
  require(dcn.in_channels == dcn.out_channels, "AlignmentWeights: DCN must map C -> C");
  require(!offset_net.empty(), "AlignmentWeights: empty offset net");
  require(offset_net.front().in_channels == condition_channels,
          "AlignmentWeights: offset net input width does not match condition stack");
  for (std::size_t i = 0; i < offset_net.size(); ++i) {
    offset_net[i].validate();
    if (i > 0) {
      require(offset_net[i].in_channels == offset_net[i - 1].out_channels,
              "AlignmentWeights: offset net chain does not close");
    }
  }
  require(offset_net.back().out_channels == 3 * taps(),
          "AlignmentWeights: offset net must emit 3*taps channels");
  require(!fusion.empty(), "AlignmentWeights: empty fusion block");
  require(fusion.front().in_channels == 2 * channels(),
          "AlignmentWeights: fusion input must be concat(aligned, current)");
  for (std::size_t i = 0; i < fusion.size(); ++i) {
    fusion[i].validate();
    if (i > 0) {
      require(fusion[i].in_channels == fusion[i - 1].out_channels,
              "AlignmentWeights: fusion chain does not close");
    }
  }
  require(fusion.back().out_channels == channels(),
          "AlignmentWeights: fusion must output C channels");
}

AlignmentWeights random_alignment_weights(Rng& rng, int channels, int condition_channels,
                                          double offset_gain) {
  AlignmentWeights w;
  const int taps = 9;
  w.offset_net.push_back(random_kernel(rng, channels, condition_channels, 3, 3));
  w.offset_net.push_back(random_kernel(rng, channels, channels, 3, 3));
  w.offset_net.push_back(random_kernel(rng, 3 * taps, channels, 3, 3, offset_gain));
  w.dcn = random_kernel(rng, channels, channels, 3, 3);
  w.fusion.push_back(random_kernel(rng, channels, 2 * channels, 3, 3));
  w.fusion.push_back(random_kernel(rng, channels, channels, 3, 3));
  return w;
}

OffsetPrediction predict_offsets(const Grid& condition, const AlignmentWeights& w) {
  const Grid raw = apply_conv_stack(condition, w.offset_net, Activation::kRelu);
  const int taps = w.taps();
  OffsetPrediction p{{Grid(raw.height(), raw.width(), 2 * taps)},
                     {Grid(raw.height(), raw.width(), taps)}};
  for (int y = 0; y < raw.height(); ++y) {
    for (int x = 0; x < raw.width(); ++x) {
      const auto src = raw.pixel(y, x);
      auto off = p.offsets.values.pixel(y, x);
      auto mod = p.modulation.values.pixel(y, x);
      std::copy(src.begin(), src.begin() + 2 * taps, off.begin());
      for (int t = 0; t < taps; ++t) mod[t] = 1.0 / (1.0 + std::exp(-src[2 * taps + t]));
    }
  }
  return p;
}

Grid align_plain(const Grid& f_t, const Grid& prop_next, const AlignmentWeights& w) {
  require(f_t.same_shape(prop_next), "align_plain: f_t and prop_next differ in shape");
  w.validate(plain_condition_channels(f_t.channels()));
  require(w.channels() == f_t.channels(), "align_plain: weight width != feature width");
  const OffsetPrediction pred = predict_offsets(concat_channels(f_t, prop_next), w);
  const Grid aligned = dcn_forward(prop_next, pred.offsets, pred.modulation, w.dcn);
  return apply_conv_stack(concat_channels(aligned, f_t), w.fusion, Activation::kLeakyRelu);
}

Grid align_flow_guided(const Grid& e_t, const Grid& prop_next, const FlowField& flow_ds,
                       const ValidMap& valid, const Mask& m_orig, const Mask& m_updated,
                       const AlignmentWeights& w) {
  require(e_t.same_shape(prop_next), "align_flow_guided: e_t and prop_next differ in shape");
  require(flow_ds.channels() == 2 && flow_ds.same_spatial(e_t),
          "align_flow_guided: flow dims differ from feature dims");
  require(valid.same_spatial(e_t) && m_orig.same_spatial(e_t) && m_updated.same_spatial(e_t),
          "align_flow_guided: condition maps differ from feature dims");
  w.validate(flow_guided_condition_channels(e_t.channels()));
  require(w.channels() == e_t.channels(), "align_flow_guided: weight width != feature width");

  const Grid warped = warp_backward(prop_next, flow_ds);
  const Grid v = valid.to_grid();
  const Grid mo = m_orig.to_grid();
  const Grid mu = m_updated.to_grid();
  const Grid* parts[] = {&e_t, &warped, &flow_ds, &v, &mo, &mu};
  OffsetPrediction pred = predict_offsets(concat_channels(parts), w);

  // Flow is the base offset of every tap; the net predicts the residue.
  const int taps = w.taps();
  for (int y = 0; y < e_t.height(); ++y) {
    for (int x = 0; x < e_t.width(); ++x) {
      auto off = pred.offsets.values.pixel(y, x);
      for (int t = 0; t < taps; ++t) {
        off[2 * t] += flow_ds.at(y, x, 0);
        off[2 * t + 1] += flow_ds.at(y, x, 1);
      }
    }
  }
  const Grid aligned = dcn_forward(prop_next, pred.offsets, pred.modulation, w.dcn);
  return apply_conv_stack(concat_channels(aligned, e_t), w.fusion, Activation::kLeakyRelu);
}

}  // namespace dualprop
