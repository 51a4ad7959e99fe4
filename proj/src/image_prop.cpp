#include "dualprop/image_prop.hpp"

#include <algorithm>
#include <cmath>

#include "dualprop/parallel.hpp"

namespace dualprop {
namespace {

void check_dims(const Mask& m_t, const Mask& m_next, const FlowField& f_fwd,
                const FlowField& f_bwd) {
  require(f_fwd.channels() == 2 && f_bwd.channels() == 2, "image propagation: flows need 2 channels");
  require(m_t.same_spatial(f_fwd) && m_next.same_spatial(f_fwd) && f_bwd.same_spatial(f_fwd),
          "image propagation: mask/flow dims differ");
}

// C3 at a continuous target location.
bool target_unmasked(const Mask& m_next, double tx, double ty) {
  const int w = m_next.width();
  const int h = m_next.height();
  if (!(tx >= 0.0 && ty >= 0.0 && tx <= w - 1 && ty <= h - 1)) return false;
  const int nx = std::min(static_cast<int>(std::lround(tx)), w - 1);
  const int ny = std::min(static_cast<int>(std::lround(ty)), h - 1);
  if (m_next.at(ny, nx)) return false;
  const int x0 = static_cast<int>(std::floor(tx));
  const int y0 = static_cast<int>(std::floor(ty));
  const bool has_x1 = tx > x0 && x0 + 1 < w;
  const bool has_y1 = ty > y0 && y0 + 1 < h;
  if (m_next.at(y0, x0)) return false;
  if (has_x1 && m_next.at(y0, x0 + 1)) return false;
  if (has_y1 && m_next.at(y0 + 1, x0)) return false;
  if (has_x1 && has_y1 && m_next.at(y0 + 1, x0 + 1)) return false;
  return true;
}

ReliableArea reliable_area_impl(const Mask& m_t, const Mask& m_next, const FlowField& f_fwd,
                                const FlowField& f_bwd, double epsilon, Grid* error_out) {
  require(epsilon > 0.0, "reliable_area: epsilon must be positive");
  check_dims(m_t, m_next, f_fwd, f_bwd);
  const ConsistencyMap e = consistency_error(f_fwd, f_bwd);
  ReliableArea area(m_t.height(), m_t.width());
  for (int y = 0; y < m_t.height(); ++y) {
    for (int x = 0; x < m_t.width(); ++x) {
      if (!m_t.at(y, x)) continue;                 // C2
      if (!(e.at(y, x) < epsilon)) continue;       // C1
      if (!target_unmasked(m_next, x + f_fwd.at(y, x, 0), y + f_fwd.at(y, x, 1))) continue;  // C3
      area.set(y, x, true);
    }
  }
  if (error_out) *error_out = e;
  return area;
}

}  // namespace

ReliableArea reliable_area(const Mask& m_t, const Mask& m_next, const FlowField& f_fwd,
                           const FlowField& f_bwd, double epsilon) {
  return reliable_area_impl(m_t, m_next, f_fwd, f_bwd, epsilon, nullptr);
}

PropagationStep propagate_step(const Grid& x_t, const Grid& x_next, const Mask& m_t,
                               const Mask& m_next, const FlowField& f_fwd,
                               const FlowField& f_bwd, double epsilon) {
  require(x_t.same_shape(x_next) && x_t.same_spatial(f_fwd),
          "propagate_step: frame dims differ from flow dims");
  Grid error;
  PropagationStep step;
  step.filled = reliable_area_impl(m_t, m_next, f_fwd, f_bwd, epsilon, &error);
  step.frame = x_t;
  step.mask = m_t;
  std::vector<double> sample(static_cast<std::size_t>(x_t.channels()));
  for (int y = 0; y < x_t.height(); ++y) {
    for (int x = 0; x < x_t.width(); ++x) {
      if (!step.filled.at(y, x)) continue;
      bilinear_sample(x_next, x + f_fwd.at(y, x, 0), y + f_fwd.at(y, x, 1), sample);
      std::ranges::copy(sample, step.frame.pixel(y, x).begin());
      step.mask.set(y, x, false);  // AND-NOT keeps the mask binary
      step.max_fill_error = std::max(step.max_fill_error, error.at(y, x));
    }
  }
  return step;
}

PropagationState propagate_global(const FrameSequence& frames, const MaskSequence& masks,
                                  const FlowSequence& f_fwd, const FlowSequence& f_bwd,
                                  const PropagationOptions& options) {
  const std::size_t n = frames.size();
  require(n >= 1, "propagate_global: empty sequence");
  require(masks.size() == n, "propagate_global: mask count != frame count");
  require(f_fwd.size() + 1 == n && f_bwd.size() + 1 == n,
          "propagate_global: expected T-1 forward and backward flows");
  require(options.max_passes >= 1, "propagate_global: max_passes must be >= 1");
  for (std::size_t t = 0; t < n; ++t) {
    require(frames[t].same_shape(frames.front()) && masks[t].same_spatial(frames.front()),
            "propagate_global: inconsistent frame/mask dims");
  }

  PropagationState state;
  state.frames = frames;
  state.masks = masks;
  state.filled.assign(n, Mask(frames.front().height(), frames.front().width()));
  auto total = [&] {
    std::size_t s = 0;
    for (const Mask& m : state.masks) s += m.count();
    return s;
  };
  state.remaining.push_back(total());

  auto apply = [&](int pass, bool backward, std::size_t target, std::size_t source,
                   const FlowField& to_source, const FlowField& from_source) {
    if (!state.masks[target].any()) return std::size_t{0};
    PropagationStep step =
        propagate_step(state.frames[target], state.frames[source], state.masks[target],
                       state.masks[source], to_source, from_source, options.epsilon);
    const std::size_t filled = step.filled.count();
    if (filled == 0) return filled;
    for (std::size_t i = 0; i < step.filled.size(); ++i)
      if (step.filled[i]) state.filled[target].bits()[i] = 1;
    state.frames[target] = std::move(step.frame);
    state.masks[target] = std::move(step.mask);
    state.events.push_back({pass, backward, static_cast<int>(target), static_cast<int>(source),
                            filled, step.max_fill_error});
    return filled;
  };

  auto backward_sweep = [&](int pass) {
    std::size_t filled = 0;
    for (std::size_t t = n - 1; t-- > 0;) filled += apply(pass, true, t, t + 1, f_fwd[t], f_bwd[t]);
    return filled;
  };
  auto forward_sweep = [&](int pass) {
    std::size_t filled = 0;
    for (std::size_t t = 1; t < n; ++t)
      filled += apply(pass, false, t, t - 1, f_bwd[t - 1], f_fwd[t - 1]);
    return filled;
  };

  for (int pass = 0; pass < options.max_passes; ++pass) {
    std::size_t filled = 0;
    if (options.order == SweepOrder::kBackwardFirst) {
      filled += backward_sweep(pass);
      filled += forward_sweep(pass);
    } else {
      filled += forward_sweep(pass);
      filled += backward_sweep(pass);
    }
    ++state.pass_count;
    state.remaining.push_back(total());
    if (filled == 0) break;
  }
  return state;
}

}  // namespace dualprop
