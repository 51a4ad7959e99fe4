#include <doctest.h>

#include "dualprop/image_prop.hpp"
#include "dualprop/parallel.hpp"
#include "dualprop/synth.hpp"
#include "reference.hpp"

using namespace dualprop;

namespace {

Grid constant_flow(int h, int w, double dx, double dy) {
  Grid f(h, w, 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      f.at(y, x, 0) = dx;
      f.at(y, x, 1) = dy;
    }
  }
  return f;
}

Mask square(int h, int w, int y0, int x0, int size) {
  Mask m(h, w);
  for (int y = y0; y < y0 + size; ++y)
    for (int x = x0; x < x0 + size; ++x) m.set(y, x, true);
  return m;
}

}  // namespace

TEST_CASE("reliable area conditions") {
  const Grid fwd = constant_flow(6, 6, 1, 0);
  const Grid bwd = constant_flow(6, 6, -1, 0);
  CHECK(reliable_area(Mask(6, 6), Mask(6, 6), fwd, bwd).count() == 0);

  Mask m(6, 6);
  m.set(2, 2, true);
  const Mask a = reliable_area(m, Mask(6, 6), fwd, bwd);
  CHECK(a.at(2, 2));
  CHECK(a.count() == 1);

  // C1: f_bwd = 0 against f_fwd = (3, 0) gives E = 9.
  CHECK(reliable_area(m, Mask(6, 6), constant_flow(6, 6, 3, 0), Grid(6, 6, 2)).count() == 0);

  // C3: target masked in the neighbour.
  Mask next(6, 6);
  next.set(2, 3, true);
  CHECK(reliable_area(m, next, fwd, bwd).count() == 0);

  // C3 conservative footprint: sub-pixel target next to a masked pixel.
  const Grid half = constant_flow(6, 6, 0.5, 0);
  const Grid half_back = constant_flow(6, 6, -0.5, 0);
  Mask right(6, 6);
  right.set(2, 3, true);
  CHECK(reliable_area(m, right, half, half_back).count() == 0);
  CHECK(reliable_area(m, Mask(6, 6), half, half_back).count() == 1);

  // Leaving the frame fails C3.
  Mask edge(6, 6);
  edge.set(2, 5, true);
  CHECK(reliable_area(edge, Mask(6, 6), fwd, bwd).count() == 0);

  CHECK_THROWS_AS(reliable_area(m, Mask(6, 5), fwd, bwd), Error);
  CHECK_THROWS_AS(reliable_area(m, Mask(6, 6), fwd, bwd, 0.0), Error);
}

TEST_CASE("reliable area implies masked and consistent") {
  Rng rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    const Mask mt = ref::random_mask(rng, 10, 12, 0.4);
    const Mask mn = ref::random_mask(rng, 10, 12, 0.2);
    const Grid f = ref::random_grid(rng, 10, 12, 2, -3, 3);
    const Grid b = ref::random_grid(rng, 10, 12, 2, -3, 3);
    const Mask a = reliable_area(mt, mn, f, b);
    const Grid e = consistency_error(f, b);
    for (int y = 0; y < 10; ++y) {
      for (int x = 0; x < 12; ++x) {
        if (!a.at(y, x)) continue;
        CHECK(mt.at(y, x));
        CHECK(e.at(y, x) < 5.0);
      }
    }
  }
}

TEST_CASE("propagate step examples") {
  const Grid xt(5, 5, 3, 0.0);
  const Grid xn(5, 5, 3, 0.5);
  Mask m(5, 5);
  m.set(2, 2, true);
  const auto step = propagate_step(xt, xn, m, Mask(5, 5), constant_flow(5, 5, 0.3, 0.2),
                                   constant_flow(5, 5, -0.3, -0.2));
  CHECK(step.frame.at(2, 2, 1) == doctest::Approx(0.5));
  CHECK_FALSE(step.mask.at(2, 2));
  CHECK(step.filled.count() == 1);

  const auto none = propagate_step(xt, xn, m, Mask(5, 5), constant_flow(5, 5, 3, 0), Grid(5, 5, 2));
  CHECK(none.frame == xt);
  CHECK(none.mask == m);
}

TEST_CASE("propagate step fills the exact value on a 1 px translation") {
  SceneSpec s;
  s.seed = 3;
  s.frames = 2;
  s.height = 16;
  s.width = 24;
  s.vx = 1;
  s.vy = 0;
  const SyntheticSequence seq = gen_sequence(s);
  Mask m(16, 24);
  m.set(7, 9, true);
  Grid hole = seq.frames[0];
  for (int c = 0; c < 3; ++c) hole.at(7, 9, c) = 0.0;
  const auto step = propagate_step(hole, seq.frames[1], m, Mask(16, 24), seq.flows_fwd[0], seq.flows_bwd[0]);
  CHECK(step.frame == seq.frames[0]);
  CHECK(step.mask.count() == 0);
}

TEST_CASE("global propagation with empty masks is the identity") {
  Rng rng(62);
  FrameSequence frames{ref::random_grid(rng, 8, 8, 3), ref::random_grid(rng, 8, 8, 3)};
  const auto st = propagate_global(frames, {Mask(8, 8), Mask(8, 8)}, {Grid(8, 8, 2)}, {Grid(8, 8, 2)});
  CHECK(st.frames == frames);
  CHECK(st.pass_count == 1);
}

TEST_CASE("static mask over a 2 px/frame translation is filled bit-exactly") {
  SceneSpec s;
  s.seed = 9;
  s.frames = 10;
  s.height = 48;
  s.width = 64;
  s.vx = 2;
  s.vy = 0;
  const SyntheticSequence seq = gen_sequence(s);
  const Mask hole = square(48, 64, 20, 28, 8);
  MaskSequence masks(10, hole);
  const CorruptedSequence bad = corrupt(seq.frames, masks, seq.flows_fwd, seq.flows_bwd);
  const PropagationState st = propagate_global(bad.frames, masks, seq.flows_fwd, seq.flows_bwd);
  for (int t = 0; t < 10; ++t) {
    CHECK(st.masks[t].count() == 0);
    CHECK(st.frames[t] == seq.frames[t]);
  }
  for (std::size_t i = 1; i < st.remaining.size(); ++i) CHECK(st.remaining[i] <= st.remaining[i - 1]);
  for (const FillEvent& e : st.events) CHECK(e.max_error < 5.0);
}

TEST_CASE("inconsistent flows block all propagation") {
  Rng rng(63);
  FrameSequence frames(4, ref::random_grid(rng, 10, 10, 3));
  MaskSequence masks{square(10, 10, 3, 3, 3), Mask(10, 10), square(10, 10, 1, 1, 4), Mask(10, 10)};
  FlowSequence fwd(3, constant_flow(10, 10, 3, 0));
  FlowSequence bwd(3, Grid(10, 10, 2));
  PropagationOptions opt;
  opt.max_passes = 3;
  const auto st = propagate_global(frames, masks, fwd, bwd, opt);
  CHECK(st.masks == masks);
  CHECK(st.frames == frames);
  CHECK(st.events.empty());
}

TEST_CASE("global propagation invariants on random inputs") {
  Rng rng(64);
  for (int trial = 0; trial < 5; ++trial) {
    FrameSequence frames;
    MaskSequence masks;
    FlowSequence fwd, bwd;
    for (int t = 0; t < 5; ++t) {
      frames.push_back(ref::random_grid(rng, 12, 14, 3, 0, 1));
      masks.push_back(ref::random_mask(rng, 12, 14, 0.3));
    }
    for (int t = 0; t < 4; ++t) {
      fwd.push_back(ref::random_grid(rng, 12, 14, 2, -1.5, 1.5));
      bwd.push_back(ref::random_grid(rng, 12, 14, 2, -1.5, 1.5));
    }
    const int saved = thread_count();
    set_thread_count(1);
    const auto a = propagate_global(frames, masks, fwd, bwd);
    set_thread_count(4);
    const auto b = propagate_global(frames, masks, fwd, bwd);
    set_thread_count(saved);
    CHECK(a.frames == b.frames);
    CHECK(a.masks == b.masks);
    for (std::size_t i = 1; i < a.remaining.size(); ++i) CHECK(a.remaining[i] <= a.remaining[i - 1]);
    for (int t = 0; t < 5; ++t) {
      for (int y = 0; y < 12; ++y) {
        for (int x = 0; x < 14; ++x) {
          if (!masks[t].at(y, x)) {
            CHECK_FALSE(a.masks[t].at(y, x));
            for (int c = 0; c < 3; ++c) CHECK(a.frames[t].at(y, x, c) == frames[t].at(y, x, c));
          }
        }
      }
    }
    for (const FillEvent& e : a.events) CHECK(e.max_error < 5.0);
  }
}

TEST_CASE("global propagation errors") {
  FrameSequence frames(3, Grid(4, 4, 3));
  MaskSequence masks(3, Mask(4, 4));
  CHECK_THROWS_AS(propagate_global(frames, masks, FlowSequence(1, Grid(4, 4, 2)), FlowSequence(2, Grid(4, 4, 2))), Error);
  CHECK_THROWS_AS(propagate_global(frames, MaskSequence(2, Mask(4, 4)), FlowSequence(2, Grid(4, 4, 2)), FlowSequence(2, Grid(4, 4, 2))), Error);
}
