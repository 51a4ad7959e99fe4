#include "dualprop/flow_ops.hpp"

#include <cmath>

#include "dualprop/parallel.hpp"

namespace dualprop {

Grid warp_backward(const Grid& src, const FlowField& flow) {
  require(flow.channels() == 2, "warp_backward: flow must have 2 channels");
  require(src.same_spatial(flow), "warp_backward: flow and source dims differ");
  Grid out(src.height(), src.width(), src.channels());
  parallel_for(0, src.height(), [&](std::ptrdiff_t yy) {
    const int y = static_cast<int>(yy);
    for (int x = 0; x < src.width(); ++x) {
      bilinear_sample(src, x + flow.at(y, x, 0), y + flow.at(y, x, 1), out.pixel(y, x));
    }
  });
  return out;
}

ConsistencyMap consistency_error(const FlowField& f_fwd, const FlowField& f_bwd) {
  require(f_fwd.channels() == 2 && f_bwd.channels() == 2,
          "consistency_error: flows must have 2 channels");
  require(f_fwd.same_spatial(f_bwd), "consistency_error: flow dims differ");
  ConsistencyMap e(f_fwd.height(), f_fwd.width(), 1);
  parallel_for(0, f_fwd.height(), [&](std::ptrdiff_t yy) {
    const int y = static_cast<int>(yy);
    double back[2];
    for (int x = 0; x < f_fwd.width(); ++x) {
      const double u = f_fwd.at(y, x, 0);
      const double v = f_fwd.at(y, x, 1);
      bilinear_sample(f_bwd, x + u, y + v, back);
      const double dx = u + back[0];
      const double dy = v + back[1];
      e.at(y, x) = dx * dx + dy * dy;
    }
  });
  return e;
}

ValidMap valid_map(const ConsistencyMap& e, double epsilon) {
  require(epsilon > 0.0, "valid_map: epsilon must be positive");
  require(e.channels() == 1, "valid_map: expected a single-channel error map");
  ValidMap v(e.height(), e.width());
  for (int y = 0; y < e.height(); ++y)
    for (int x = 0; x < e.width(); ++x) v.set(y, x, e.at(y, x) < epsilon);
  return v;
}

bool lands_inside(const FlowField& flow, int y, int x) {
  const double tx = x + flow.at(y, x, 0);
  const double ty = y + flow.at(y, x, 1);
  return tx >= 0.0 && ty >= 0.0 && tx <= flow.width() - 1 && ty <= flow.height() - 1;
}

double endpoint_error(const FlowField& f_hat, const FlowField& f_gt, const Mask* region) {
  require(f_hat.channels() == 2 && f_gt.same_shape(f_hat), "endpoint_error: shape mismatch");
  if (region) require(region->same_spatial(f_hat), "endpoint_error: region dims differ");
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < f_hat.height(); ++y) {
    for (int x = 0; x < f_hat.width(); ++x) {
      if (region && !region->at(y, x)) continue;
      const double dx = f_hat.at(y, x, 0) - f_gt.at(y, x, 0);
      const double dy = f_hat.at(y, x, 1) - f_gt.at(y, x, 1);
      sum += std::sqrt(dx * dx + dy * dy);
      ++n;
    }
  }
  require(n > 0, "endpoint_error: empty region");
  return sum / static_cast<double>(n);
}

WarpingError warping_error(const FrameSequence& frames, const FlowSequence& flows_fwd,
                           const FlowSequence* flows_bwd,
                           const WarpingErrorOptions& options) {
  require(frames.size() >= 2, "warping_error: need at least two frames");
  require(flows_fwd.size() + 1 == frames.size(),
          "warping_error: expected len(flows) == len(frames) - 1");
  if (flows_bwd) {
    require(flows_bwd->size() == flows_fwd.size(),
            "warping_error: forward/backward flow counts differ");
  }
  const bool check = options.use_consistency && flows_bwd != nullptr;

  WarpingError result;
  result.mode = check ? "consistent-pixels" : "all-pixels";
  if (options.exclude_out_of_frame) result.mode += ",in-frame";

  double sum = 0.0;
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
    const Grid& cur = frames[t];
    const FlowField& flow = flows_fwd[t];
    require(cur.same_shape(frames[t + 1]) && cur.same_spatial(flow),
            "warping_error: frame/flow dims differ");
    const Grid warped = warp_backward(frames[t + 1], flow);
    std::optional<ValidMap> valid;
    if (check) valid = valid_map(consistency_error(flow, (*flows_bwd)[t]), options.epsilon);
    for (int y = 0; y < cur.height(); ++y) {
      for (int x = 0; x < cur.width(); ++x) {
        if (valid && !valid->at(y, x)) continue;
        if (options.exclude_out_of_frame && !lands_inside(flow, y, x)) continue;
        const auto a = cur.pixel(y, x);
        const auto b = warped.pixel(y, x);
        double d2 = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) d2 += (a[k] - b[k]) * (a[k] - b[k]);
        sum += d2;
        ++result.pixels;
      }
    }
  }
  result.value = result.pixels ? sum / static_cast<double>(result.pixels) : 0.0;
  return result;
}

double flow_rec_loss(const FlowField& f_hat, const FlowField& f_gt, const Mask& m) {
  require(f_hat.channels() == 2 && f_gt.same_shape(f_hat) && m.same_spatial(f_hat),
          "flow_rec_loss: shape mismatch");
  double in_sum = 0.0, out_sum = 0.0;
  std::size_t in_n = 0, out_n = 0;
  for (int y = 0; y < f_hat.height(); ++y) {
    for (int x = 0; x < f_hat.width(); ++x) {
      const double l1 = std::abs(f_hat.at(y, x, 0) - f_gt.at(y, x, 0)) +
                        std::abs(f_hat.at(y, x, 1) - f_gt.at(y, x, 1));
      if (m.at(y, x)) {
        in_sum += l1;
        ++in_n;
      } else {
        out_sum += l1;
        ++out_n;
      }
    }
  }
  require(in_n > 0 && out_n > 0,
          "flow_rec_loss: mask must contain both masked and unmasked pixels");
  return in_sum / static_cast<double>(in_n) + out_sum / static_cast<double>(out_n);
}

double flow_smooth_loss(const FlowField& f) {
  require(f.channels() == 2, "flow_smooth_loss: flow must have 2 channels");
  require(f.height() >= 3 && f.width() >= 3, "flow_smooth_loss: grid smaller than 3x3");
  double sum = 0.0;
  for (int y = 1; y + 1 < f.height(); ++y) {
    for (int x = 1; x + 1 < f.width(); ++x) {
      for (int c = 0; c < 2; ++c) {
        const double lap = f.at(y - 1, x, c) + f.at(y + 1, x, c) + f.at(y, x - 1, c) +
                           f.at(y, x + 1, c) - 4.0 * f.at(y, x, c);
        sum += std::abs(lap);
      }
    }
  }
  const double interior = static_cast<double>(f.height() - 2) * (f.width() - 2);
  return sum / interior;
}

}  // namespace dualprop
