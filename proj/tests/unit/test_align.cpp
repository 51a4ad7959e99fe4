#include <doctest.h>

#include <cmath>

#include "dualprop/align.hpp"
#include "reference.hpp"

using namespace dualprop;

namespace {

Kernel center_tap(int c) {
  Kernel k = Kernel::zeros(c, c, 3, 3, false);
  for (int i = 0; i < c; ++i) k.w(i, i, 1, 1) = 1.0;
  return k;
}

// 1x1 fusion keeping channels [first, first + c) of the 2c-wide input.
Kernel select_half(int c, int first) {
  Kernel k = Kernel::zeros(c, 2 * c, 1, 1, false);
  for (int i = 0; i < c; ++i) k.w(i, first + i, 0, 0) = 1.0;
  return k;
}

// Zero offsets and saturated modulation logits (sigmoid(40) == 1.0 in double).
AlignmentWeights degenerate(int c, int condition, int fusion_first) {
  AlignmentWeights w;
  Kernel net = Kernel::zeros(27, condition, 3, 3, true);
  for (int t = 0; t < 9; ++t) net.bias[18 + t] = 40.0;
  w.offset_net.push_back(net);
  w.dcn = center_tap(c);
  w.fusion.push_back(select_half(c, fusion_first));
  return w;
}

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

}  // namespace

TEST_CASE("dcn with zero offsets and unit modulation is conv2d") {
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const int cin = rng.uniform_int(1, 4), cout = rng.uniform_int(1, 4);
    const int ks = rng.uniform_int(0, 1) ? 3 : 5;
    const Grid x = ref::random_grid(rng, rng.uniform_int(4, 10), rng.uniform_int(4, 10), cin);
    const Kernel k = ref::random_kernel(rng, cout, cin, ks, ks);
    OffsetField off{Grid(x.height(), x.width(), 2 * k.taps())};
    ModulationField mod{Grid(x.height(), x.width(), k.taps(), 1.0)};
    CHECK(max_abs_diff(dcn_forward(x, off, mod, k), conv2d(x, k, 1, ks / 2)) < 1e-5);
  }
}

TEST_CASE("single-tap dcn with constant offset is a warp") {
  Rng rng(32);
  const Grid x = ref::random_grid(rng, 9, 11, 3);
  Kernel k = Kernel::zeros(3, 3, 1, 1, false);
  for (int c = 0; c < 3; ++c) k.w(c, c, 0, 0) = 1.0;
  const double dx = 1.3, dy = -0.6;
  OffsetField off{constant_flow(9, 11, dx, dy)};
  ModulationField mod{Grid(9, 11, 1, 1.0)};
  const Grid out = dcn_forward(x, off, mod, k);
  CHECK(max_abs_diff(out, warp_backward(x, constant_flow(9, 11, dx, dy))) < 1e-6);
}

TEST_CASE("dcn matches the per-tap oracle") {
  Rng rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    const Grid x = ref::random_grid(rng, 7, 8, 3);
    const Kernel k = ref::random_kernel(rng, 2, 3, 3, 3);
    const Grid off = ref::random_grid(rng, 7, 8, 18, -2.5, 2.5);
    const Grid mod = ref::random_grid(rng, 7, 8, 9, 0, 1);
    CHECK(max_abs_diff(dcn_forward(x, {off}, {mod}, k), ref::dcn(x, off, mod, k)) < 1e-5);
  }
}

TEST_CASE("dcn is linear in the input") {
  Rng rng(34);
  Kernel k = ref::random_kernel(rng, 3, 2, 3, 3, false);
  const Grid a = ref::random_grid(rng, 6, 6, 2);
  const Grid b = ref::random_grid(rng, 6, 6, 2);
  Grid sum = a;
  for (std::size_t i = 0; i < sum.size(); ++i) sum.storage()[i] += b.storage()[i];
  const OffsetField off{ref::random_grid(rng, 6, 6, 18, -1.5, 1.5)};
  const ModulationField mod{ref::random_grid(rng, 6, 6, 9, 0, 1)};
  const Grid fa = dcn_forward(a, off, mod, k);
  const Grid fb = dcn_forward(b, off, mod, k);
  Grid fab = fa;
  for (std::size_t i = 0; i < fab.size(); ++i) fab.storage()[i] += fb.storage()[i];
  CHECK(max_abs_diff(dcn_forward(sum, off, mod, k), fab) < 1e-5);
}

TEST_CASE("dcn rejects mismatched fields") {
  const Grid x(5, 5, 2);
  const Kernel k = Kernel::zeros(2, 2, 3, 3);
  CHECK_THROWS_AS(dcn_forward(x, {Grid(5, 5, 16)}, {Grid(5, 5, 9)}, k), Error);
  CHECK_THROWS_AS(dcn_forward(x, {Grid(5, 4, 18)}, {Grid(5, 5, 9)}, k), Error);
  CHECK_THROWS_AS(dcn_forward(x, {Grid(5, 5, 18)}, {Grid(5, 5, 8)}, k), Error);
}

TEST_CASE("predicted modulation lies in [0, 1]") {
  Rng rng(35);
  AlignmentWeights w = random_alignment_weights(rng, 4, plain_condition_channels(4), 3.0);
  const Grid cond = ref::random_grid(rng, 8, 8, 8, -5, 5);
  const OffsetPrediction p = predict_offsets(cond, w);
  for (double v : p.modulation.values.values()) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("plain alignment identity configuration returns f_t") {
  Rng rng(36);
  const Grid f = ref::random_grid(rng, 8, 8, 4);
  const Grid prop = ref::random_grid(rng, 8, 8, 4);
  const AlignmentWeights w = degenerate(4, plain_condition_channels(4), 4);
  CHECK(align_plain(f, prop, w) == f);
}

TEST_CASE("plain alignment matches the oracle") {
  Rng rng(37);
  for (int trial = 0; trial < 3; ++trial) {
    const AlignmentWeights w = random_alignment_weights(rng, 4, plain_condition_channels(4), 0.5);
    const Grid f = ref::random_grid(rng, 8, 8, 4);
    const Grid prop = ref::random_grid(rng, 8, 8, 4);
    CHECK(max_abs_diff(align_plain(f, prop, w), ref::align_plain(f, prop, w)) < 1e-5);
  }
}

TEST_CASE("plain alignment keeps constant inputs constant away from borders") {
  Rng rng(38);
  const AlignmentWeights w = random_alignment_weights(rng, 3, plain_condition_channels(3), 0.2);
  const Grid f(24, 24, 3, 0.4);
  const Grid prop(24, 24, 3, -0.3);
  const Grid out = align_plain(f, prop, w);
  for (int y = 8; y < 16; ++y) {
    for (int x = 8; x < 16; ++x) {
      for (int c = 0; c < 3; ++c) CHECK(std::abs(out.at(y, x, c) - out.at(12, 12, c)) < 1e-12);
    }
  }
}

TEST_CASE("flow-guided alignment degenerates to warping") {
  Rng rng(39);
  const int c = 3;
  const Grid e = ref::random_grid(rng, 10, 12, c);
  const Grid prop = ref::random_grid(rng, 10, 12, c);
  Grid flow(10, 12, 2);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 12; ++x) {
      flow.at(y, x, 0) = 1.5 * std::sin(0.3 * x + 0.1 * y);
      flow.at(y, x, 1) = 0.8 * std::cos(0.2 * y);
    }
  }
  const Mask valid(10, 12, 1), mo(10, 12, 0), mu(10, 12, 0);
  const AlignmentWeights w = degenerate(c, flow_guided_condition_channels(c), 0);
  CHECK(max_abs_diff(align_flow_guided(e, prop, flow, valid, mo, mu, w), warp_backward(prop, flow)) < 1e-6);
  CHECK(align_flow_guided(e, prop, Grid(10, 12, 2), valid, mo, mu, w) == prop);
}

TEST_CASE("flow-guided alignment matches the oracle") {
  Rng rng(40);
  const int c = 4;
  const AlignmentWeights w = random_alignment_weights(rng, c, flow_guided_condition_channels(c), 0.5);
  const Grid e = ref::random_grid(rng, 8, 8, c);
  const Grid prop = ref::random_grid(rng, 8, 8, c);
  const Grid flow = ref::random_grid(rng, 8, 8, 2, -1.5, 1.5);
  const Mask valid = ref::random_mask(rng, 8, 8, 0.7);
  const Mask mo = ref::random_mask(rng, 8, 8, 0.3);
  const Mask mu = ref::random_mask(rng, 8, 8, 0.1);
  const Grid got = align_flow_guided(e, prop, flow, valid, mo, mu, w);
  CHECK(max_abs_diff(got, ref::align_flow_guided(e, prop, flow, valid, mo, mu, w)) < 1e-5);
}

TEST_CASE("alignment validates weights and shapes") {
  Rng rng(41);
  const AlignmentWeights w = random_alignment_weights(rng, 4, plain_condition_channels(4));
  CHECK_THROWS_AS(align_plain(Grid(8, 8, 3), Grid(8, 8, 3), w), Error);
  CHECK_THROWS_AS(align_plain(Grid(8, 8, 4), Grid(8, 7, 4), w), Error);
  const Mask m(8, 8);
  CHECK_THROWS_AS(align_flow_guided(Grid(8, 8, 4), Grid(8, 8, 4), Grid(8, 8, 2), m, m, m, w), Error);
}
