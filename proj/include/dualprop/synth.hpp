#pragma once

#include <cstdint>

#include "dualprop/grid.hpp"

namespace dualprop {

inline constexpr double kDefaultMaskCoverage = 0.136;

// Textured plane translating by an integer velocity per frame.
struct SceneSpec {
  std::uint64_t seed = 0;
  int frames = 10;
  int height = 128;
  int width = 192;
  int vx = 1;
  int vy = 0;
  int octaves = 4;
  int base_cell = 32;  // lattice spacing of the coarsest noise octave

  // |vx| * T < W / 2 and |vy| * T < H / 2.
  void validate() const;
};

struct SyntheticSequence {
  FrameSequence frames;
  FlowSequence flows_fwd;  // t -> t+1, on frame t's grid
  FlowSequence flows_bwd;  // t+1 -> t, on frame t+1's grid
  Grid texture;            // canonical texture the frames are cut from
};

// Frame t is the texture shifted by t * (vx, vy): frame_{t+1}(p + v) =
// frame_t(p) wherever both are defined. Flows are exactly +-v.
SyntheticSequence gen_sequence(const SceneSpec& s);

// Seeded multi-octave value noise in [0, 1], smoothstep-interpolated.
Grid value_noise(std::uint64_t seed, int height, int width, int channels, int octaves,
                 int base_cell);

enum class MaskKind { kStationary, kObject };

// One blob per frame; the blob radius is searched so that the mean coverage
// is as close to `coverage` as the pixel grid allows. Stationary masks are
// identical across frames; object masks translate with their own integer
// velocity and stay inside the frame.
MaskSequence gen_masks(const SceneSpec& s, MaskKind kind, std::uint64_t seed,
                       double coverage = kDefaultMaskCoverage);

double mask_coverage(const MaskSequence& masks);

struct CorruptedSequence {
  FrameSequence frames;
  FlowSequence flows_fwd;
  FlowSequence flows_bwd;
};

// Zeroes masked pixels of every frame; forward flow t is zeroed under mask t
// and backward flow t under mask t+1 (the grids they live on).
CorruptedSequence corrupt(const FrameSequence& frames, const MaskSequence& masks,
                          const FlowSequence& flows_fwd, const FlowSequence& flows_bwd);

}  // namespace dualprop
