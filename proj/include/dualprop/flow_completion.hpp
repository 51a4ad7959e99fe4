#pragma once

#include <vector>

#include "dualprop/align.hpp"
#include "dualprop/grid.hpp"

namespace dualprop {

struct LaplaceOptions {
  // Stop when ||b - A x||_2 <= tolerance * max(||b||_2, 1).
  double tolerance = 1e-12;
  // 0 selects 4 * unknowns + 100.
  int max_iterations = 0;
};

struct LaplaceStats {
  int unknowns = 0;
  int iterations = 0;     // worst channel
  double residual = 0.0;  // worst channel, absolute 2-norm
};

// Solves the discrete Laplace equation on masked pixels, channel by channel,
// with unmasked pixels as Dirichlet data. Each masked pixel equals the mean of
// its in-image 4-neighbours. Unmasked pixels are returned unchanged. Requires
// at least one unmasked pixel when the mask is non-empty.
Grid laplace_fill(const Grid& g, const Mask& m, const LaplaceOptions& options = {},
                  LaplaceStats* stats = nullptr);

// Laplacian flow completion. A fully masked frame copies `neighbor` (error if
// none is given).
FlowField complete_flow_laplacian(const FlowField& f, const Mask& m,
                                  const FlowField* neighbor = nullptr,
                                  const LaplaceOptions& options = {});

// Completes a whole flow list; fully masked frames borrow the nearest
// completed frame.
FlowSequence complete_flows_laplacian(const FlowSequence& flows, const MaskSequence& masks,
                                      const LaplaceOptions& options = {});

inline constexpr int kRfcDownsample = 8;
inline constexpr int kDefaultRfcChannels = 32;

// Recurrent flow completion network.
//  encoder:  3x3 stride-2 convolutions, (2 flow + 1 mask) -> C_f at 1/8 scale,
//            leaky ReLU after each layer.
//  backward/forward: deformable alignment for the two recurrent passes.
//  fuse:     1x1 convolution over concat(backward, forward) -> C_f.
//  decoder:  each layer is 2x bilinear upsampling + 3x3 convolution, leaky
//            ReLU between layers, last layer emits 2 channels.
struct RfcWeights {
  std::vector<Kernel> encoder;
  AlignmentWeights backward;
  AlignmentWeights forward;
  Kernel fuse;
  std::vector<Kernel> decoder;

  int feature_channels() const { return encoder.empty() ? 0 : encoder.back().out_channels; }
  void validate() const;
};

RfcWeights random_rfc_weights(Rng& rng, int feature_channels = kDefaultRfcChannels);

// Encodes one (flow, mask) pair to the 1/8-scale feature.
Grid rfc_encode(const FlowField& flow, const Mask& mask, const RfcWeights& w);
Grid rfc_decode(const Grid& feature, const RfcWeights& w);

// Completes a list of flows; masked flow values are zeroed before encoding and
// the output keeps input flow outside the masks (hard compositing).
FlowSequence rfc_forward(const FlowSequence& flows, const MaskSequence& masks,
                         const RfcWeights& w);

}  // namespace dualprop
