#pragma once

#include <optional>
#include <string>

#include "dualprop/grid.hpp"

namespace dualprop {

// Per-pixel forward-backward consistency error (squared pixels), 1 channel.
using ConsistencyMap = Grid;
// Per-pixel binary validity: 1 where the consistency error is below epsilon.
using ValidMap = Mask;

inline constexpr double kDefaultConsistencyEpsilon = 5.0;

// out(p) = src sampled bilinearly at p + flow(p), clamp-to-edge.
Grid warp_backward(const Grid& src, const FlowField& flow);

// E(p) = || f_fwd(p) + f_bwd(p + f_fwd(p)) ||^2
ConsistencyMap consistency_error(const FlowField& f_fwd, const FlowField& f_bwd);

// valid(p) = E(p) < epsilon (strict).
ValidMap valid_map(const ConsistencyMap& e, double epsilon = kDefaultConsistencyEpsilon);

// True when p + flow(p) lies inside [0, W-1] x [0, H-1].
bool lands_inside(const FlowField& flow, int y, int x);

// Mean end-point error, optionally restricted to region pixels.
double endpoint_error(const FlowField& f_hat, const FlowField& f_gt,
                      const Mask* region = nullptr);

struct WarpingErrorOptions {
  // Restrict to pixels passing the consistency check when backward flows are
  // supplied.
  bool use_consistency = true;
  double epsilon = kDefaultConsistencyEpsilon;
  // Skip pixels whose warped location falls outside the frame.
  bool exclude_out_of_frame = true;
};

struct WarpingError {
  double value = 0.0;         // mean squared colour error (raw units)
  std::size_t pixels = 0;     // number of (t, p) samples averaged
  std::string mode;           // which pixel-selection rule produced the value
};

// Flow warping error between consecutive frames: mean over t and selected
// pixels of || frame_t(p) - W(frame_{t+1}, flow_t)(p) ||^2.
WarpingError warping_error(const FrameSequence& frames, const FlowSequence& flows_fwd,
                           const FlowSequence* flows_bwd = nullptr,
                           const WarpingErrorOptions& options = {});

// L1 reconstruction loss applied separately to masked and unmasked regions,
// each normalised by its pixel count.
double flow_rec_loss(const FlowField& f_hat, const FlowField& f_gt, const Mask& m);

// Mean over interior pixels of the channel-summed |5-point Laplacian|.
double flow_smooth_loss(const FlowField& f);

}  // namespace dualprop
