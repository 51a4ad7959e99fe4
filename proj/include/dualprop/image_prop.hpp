#pragma once

#include <cstddef>
#include <vector>

#include "dualprop/flow_ops.hpp"
#include "dualprop/grid.hpp"

namespace dualprop {

// Masked pixels that can be filled reliably from the neighbouring frame.
using ReliableArea = Mask;

// A_r(p) = 1 iff
//   C1: consistency error E(p) < epsilon,
//   C2: m_t(p) = 1,
//   C3: p + f_fwd(p) lies inside the frame and m_next is 0 at the nearest
//       pixel and at every bilinear-footprint pixel with non-zero weight.
// f_fwd maps the current frame to the neighbour, f_bwd maps back.
ReliableArea reliable_area(const Mask& m_t, const Mask& m_next, const FlowField& f_fwd,
                           const FlowField& f_bwd, double epsilon = kDefaultConsistencyEpsilon);

struct PropagationStep {
  Grid frame;          // X_t filled where A_r = 1
  Mask mask;           // m_t AND NOT A_r
  ReliableArea filled; // A_r
  double max_fill_error = 0.0;  // largest E(p) among filled pixels
};

// X_t' = W(x_next, f_fwd) * A_r + x_t * (1 - A_r);  M_t' = M_t - A_r.
PropagationStep propagate_step(const Grid& x_t, const Grid& x_next, const Mask& m_t,
                               const Mask& m_next, const FlowField& f_fwd,
                               const FlowField& f_bwd,
                               double epsilon = kDefaultConsistencyEpsilon);

enum class SweepOrder { kBackwardFirst, kForwardFirst };

struct PropagationOptions {
  double epsilon = kDefaultConsistencyEpsilon;
  int max_passes = 4;
  SweepOrder order = SweepOrder::kBackwardFirst;
};

// One fill event: frame `target` pulled `pixels` values from frame `source`.
struct FillEvent {
  int pass = 0;
  bool backward = true;
  int target = 0;
  int source = 0;
  std::size_t pixels = 0;
  double max_error = 0.0;
};

struct PropagationState {
  FrameSequence frames;
  MaskSequence masks;
  int pass_count = 0;
  // Total masked pixels before the first pass and after each pass.
  std::vector<std::size_t> remaining;
  std::vector<FillEvent> events;
  // Pixels filled by propagation, per frame (union over passes).
  MaskSequence filled;
};

// Global bidirectional image propagation. f_fwd[t] maps t -> t+1 and f_bwd[t]
// maps t+1 -> t. A backward sweep fills frame t from t+1 (t = T-2 .. 0); a
// forward sweep fills t from t-1 (t = 1 .. T-1); masks are updated as soon as
// a frame is filled. Stops after a pass that fills nothing or at max_passes.
PropagationState propagate_global(const FrameSequence& frames, const MaskSequence& masks,
                                  const FlowSequence& f_fwd, const FlowSequence& f_bwd,
                                  const PropagationOptions& options = {});

}  // namespace dualprop
