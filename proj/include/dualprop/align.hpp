#pragma once

#include <vector>

#include "dualprop/flow_ops.hpp"
#include "dualprop/grid.hpp"
#include "dualprop/layers.hpp"
#include "dualprop/rng.hpp"

namespace dualprop {

// Per output pixel and kernel tap, a (dx, dy) displacement in pixels.
// Stored as an H x W x (2*taps) grid, tap-major: channel 2*t is dx of tap t.
struct OffsetField {
  Grid values;
  int taps() const { return values.channels() / 2; }
};

// Per output pixel and tap, a modulation scalar in [0, 1]; H x W x taps.
struct ModulationField {
  Grid values;
  int taps() const { return values.channels(); }
};

// Modulated deformable convolution, stride 1, zero padding (kh-1)/2:
//   out(p) = b + sum_taps w_tap * m(p,tap) * x(p + base_tap + offset(p,tap))
// Taps whose regular-grid position p + base_tap lies in the padding zone
// contribute zero; displaced positions are sampled bilinearly with
// clamp-to-edge.
Grid dcn_forward(const Grid& x, const OffsetField& offsets, const ModulationField& modulation,
                 const Kernel& k);

// Learned pieces of one alignment step.
//  offset_net: 3x3 convolutions with ReLU between; the last layer emits
//              2*taps offset channels followed by taps modulation logits.
//  dcn:        the deformable kernel (C -> C).
//  fusion:     R(aligned, current) over concat(aligned, current); leaky ReLU
//              between layers.
struct AlignmentWeights {
  std::vector<Kernel> offset_net;
  Kernel dcn;
  std::vector<Kernel> fusion;

  int taps() const { return dcn.taps(); }
  int channels() const { return dcn.out_channels; }
  void validate(int condition_channels) const;
};

// Offset-net input widths for the two variants at feature width C.
inline int plain_condition_channels(int c) { return 2 * c; }
inline int flow_guided_condition_channels(int c) { return 2 * c + 5; }

// Random weights with hidden width = channels, 3 offset layers, a 3x3 DCN
// and a two-layer 3x3 fusion block. Offsets start small (scale `offset_gain`).
AlignmentWeights random_alignment_weights(Rng& rng, int channels, int condition_channels,
                                          double offset_gain = 0.1);

struct OffsetPrediction {
  OffsetField offsets;
  ModulationField modulation;
};

// Runs the offset net on a condition stack and splits its output; modulation
// goes through the logistic function.
OffsetPrediction predict_offsets(const Grid& condition, const AlignmentWeights& w);

// Deformable alignment without flow guidance: offsets from concat(f_t,
// prop_next), aligned = D(prop_next), output = R(aligned, f_t).
Grid align_plain(const Grid& f_t, const Grid& prop_next, const AlignmentWeights& w);

// Flow-guided deformable alignment: conditions are
// concat(e_t, W(prop_next, flow), flow, valid, m_orig, m_updated); the DCN
// offset per tap is flow + residue.
Grid align_flow_guided(const Grid& e_t, const Grid& prop_next, const FlowField& flow_ds,
                       const ValidMap& valid, const Mask& m_orig, const Mask& m_updated,
                       const AlignmentWeights& w);

}  // namespace dualprop
