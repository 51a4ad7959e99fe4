#pragma once

#include <limits>
#include <span>
#include <string_view>

#include "dualprop/grid.hpp"

namespace dualprop {

inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();
inline constexpr double kPsnrReportCap = 99.0;

// -10 log10(MSE) for values in [0, 1]; +inf when the grids are identical.
double psnr(const Grid& a, const Grid& b);
// PSNR over the pixels selected by `region` (all channels); +inf if equal.
double psnr_masked(const Grid& a, const Grid& b, const Mask& region);
// Mean of the per-frame PSNR values; +inf as soon as one frame is exact.
double psnr_sequence(const FrameSequence& a, const FrameSequence& b);
// The value written to text reports (infinity and anything above capped).
double psnr_for_report(double db);

// BT.601 luma for 3-channel grids; single-channel grids pass through.
Grid luma(const Grid& g);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double range = 1.0;
};

// Mean local SSIM of the luma over all fully contained Gaussian windows.
double ssim(const Grid& a, const Grid& b, const SsimParams& p = {});
double ssim_sequence(const FrameSequence& a, const FrameSequence& b, const SsimParams& p = {});

// Mean absolute error over all values of all frames.
double rec_loss(const FrameSequence& y_hat, const FrameSequence& y);

enum class DiscriminatorForm {
  kAsPrinted,     // E[log D(Y)] + E[1 - log D(Y_hat)]
  kConventional,  // E[log D(Y)] + E[log(1 - D(Y_hat))]
};

struct GanLosses {
  double l_d = 0;
  double l_g = 0;  // -E[log D(Y_hat)]
};

// Scores must lie strictly inside (0, 1).
GanLosses gan_losses(const Grid& scores_real, const Grid& scores_fake,
                     DiscriminatorForm form = DiscriminatorForm::kAsPrinted);

struct LossConfig {
  double alpha1 = 1.0;   // flow reconstruction
  double alpha2 = 0.5;   // flow smoothness
  double lambda1 = 1.0;  // frame reconstruction
  double lambda2 = 0.01; // generator adversarial term

  void validate() const;
  double flow_total(double rec, double smooth) const { return alpha1 * rec + alpha2 * smooth; }
  double inpaint_total(double rec, double l_g) const { return lambda1 * rec + lambda2 * l_g; }
};

// Published flow-completion endpoint errors (lower is better) and runtime in
// seconds per frame, for report generation.
struct FlowCompletionReference {
  std::string_view method;
  double epe_youtube_vos;
  double epe_davis;
  double seconds_per_frame;
};

std::span<const FlowCompletionReference> flow_completion_reference();

}  // namespace dualprop
