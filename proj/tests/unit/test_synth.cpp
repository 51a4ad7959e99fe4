#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <utility>

#include "dualprop/flow_ops.hpp"
#include "dualprop/synth.hpp"

using namespace dualprop;

namespace {

SceneSpec scene(std::uint64_t seed, int frames, int vx, int vy) {
  SceneSpec s;
  s.seed = seed;
  s.frames = frames;
  s.height = 40;
  s.width = 56;
  s.vx = vx;
  s.vy = vy;
  return s;
}

}  // namespace

TEST_CASE("zero velocity gives identical frames and zero flow") {
  const SyntheticSequence seq = gen_sequence(scene(1, 4, 0, 0));
  REQUIRE(seq.frames.size() == 4);
  REQUIRE(seq.flows_fwd.size() == 3);
  for (int t = 1; t < 4; ++t) CHECK(seq.frames[t] == seq.frames[0]);
  for (const Grid& f : seq.flows_fwd) CHECK(f == Grid(40, 56, 2));
}

TEST_CASE("frames are exact integer shifts of each other") {
  for (auto [vx, vy] : {std::pair{1, 0}, std::pair{-2, 1}, std::pair{0, -1}}) {
    const SyntheticSequence seq = gen_sequence(scene(2, 3, vx, vy));
    for (int t = 0; t + 1 < 3; ++t) {
      // frame_{t+1}(p + v) = frame_t(p)
      for (int y = 0; y < 40; ++y) {
        for (int x = 0; x < 56; ++x) {
          const int ny = y + vy, nx = x + vx;
          if (ny < 0 || nx < 0 || ny >= 40 || nx >= 56) continue;
          for (int c = 0; c < 3; ++c) CHECK(seq.frames[t + 1].at(ny, nx, c) == seq.frames[t].at(y, x, c));
        }
      }
      // Backward warping the next frame with the forward flow recovers frame t
      // wherever the target is inside.
      const Grid w = warp_backward(seq.frames[t + 1], seq.flows_fwd[t]);
      for (int y = 1; y < 39; ++y)
        for (int x = 2; x < 54; ++x)
          if (x + vx >= 0 && x + vx < 56 && y + vy >= 0 && y + vy < 40)
            CHECK(w.at(y, x, 0) == seq.frames[t].at(y, x, 0));
    }
  }
}

TEST_CASE("ground-truth flows are perfectly consistent") {
  const SyntheticSequence seq = gen_sequence(scene(3, 5, 2, -1));
  for (std::size_t t = 0; t < seq.flows_fwd.size(); ++t) {
    const Grid e = consistency_error(seq.flows_fwd[t], seq.flows_bwd[t]);
    for (double v : e.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("generation is deterministic and seed dependent") {
  const SyntheticSequence a = gen_sequence(scene(4, 3, 1, 0));
  const SyntheticSequence b = gen_sequence(scene(4, 3, 1, 0));
  const SyntheticSequence c = gen_sequence(scene(5, 3, 1, 0));
  CHECK(a.frames == b.frames);
  CHECK(a.frames != c.frames);
  for (const Grid& f : a.frames) {
    for (double v : f.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("scene validation") {
  CHECK_THROWS_AS(gen_sequence(scene(1, 20, 2, 0)), Error);  // 2*2*20 >= 56
  CHECK_THROWS_AS(gen_sequence(scene(1, 0, 0, 0)), Error);
}

TEST_CASE("mask coverage") {
  SceneSpec s = scene(6, 6, 1, 0);
  s.height = 64;
  s.width = 96;
  CHECK(mask_coverage(gen_masks(s, MaskKind::kStationary, 1, 0.0)) == 0.0);
  for (MaskKind kind : {MaskKind::kStationary, MaskKind::kObject}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const MaskSequence m = gen_masks(s, kind, seed);
      REQUIRE(m.size() == 6);
      CHECK(std::abs(mask_coverage(m) - kDefaultMaskCoverage) <= 0.02);
      CHECK(gen_masks(s, kind, seed) == m);
    }
  }
  const MaskSequence st = gen_masks(s, MaskKind::kStationary, 9);
  for (const Mask& m : st) CHECK(m == st[0]);
  const MaskSequence ob = gen_masks(s, MaskKind::kObject, 9);
  CHECK(ob[0] != ob[5]);
  CHECK_THROWS_AS(gen_masks(s, MaskKind::kObject, 1, 1.5), Error);
}

TEST_CASE("corruption zeroes masked content") {
  const SyntheticSequence seq = gen_sequence(scene(7, 3, 1, 0));
  MaskSequence none(3, Mask(40, 56));
  const CorruptedSequence a = corrupt(seq.frames, none, seq.flows_fwd, seq.flows_bwd);
  CHECK(a.frames == seq.frames);
  CHECK(a.flows_fwd == seq.flows_fwd);

  MaskSequence full(3, Mask(40, 56, 1));
  const CorruptedSequence b = corrupt(seq.frames, full, seq.flows_fwd, seq.flows_bwd);
  for (const Grid& f : b.frames) CHECK(f == Grid(40, 56, 3));
  for (const Grid& f : b.flows_bwd) CHECK(f == Grid(40, 56, 2));

  MaskSequence mixed{Mask(40, 56, 1), Mask(40, 56), Mask(40, 56)};
  const CorruptedSequence c = corrupt(seq.frames, mixed, seq.flows_fwd, seq.flows_bwd);
  CHECK(c.flows_fwd[0] == Grid(40, 56, 2));
  CHECK(c.flows_bwd[0] == seq.flows_bwd[0]);
  CHECK_THROWS_AS(corrupt(seq.frames, MaskSequence(2, Mask(40, 56)), seq.flows_fwd, seq.flows_bwd), Error);
}

TEST_CASE("value noise stays in the unit range") {
  const Grid n = value_noise(11, 33, 47, 3, 4, 16);
  double lo = 1.0, hi = 0.0;
  for (double v : n.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= 0.0);
  CHECK(hi <= 1.0);
  CHECK(hi - lo > 0.2);
}
