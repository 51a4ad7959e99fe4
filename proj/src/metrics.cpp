#include "dualprop/metrics.hpp"

#include <array>
#include <cmath>

#include "dualprop/simd/kernels.hpp"

namespace dualprop {

namespace {

double db_from_mse(double mse) {
  if (mse == 0.0) return kPsnrInfinity;
  return -10.0 * std::log10(mse);
}

}  // namespace

double psnr(const Grid& a, const Grid& b) {
  require(a.same_shape(b) && !a.empty(), "psnr: dims differ");
  const double sse = simd::sum_sq_diff(a.values().data(), b.values().data(), a.size());
  return db_from_mse(sse / static_cast<double>(a.size()));
}

double psnr_masked(const Grid& a, const Grid& b, const Mask& region) {
  require(a.same_shape(b) && region.same_spatial(a), "psnr_masked: dims differ");
  const std::size_t n = region.count();
  require(n > 0, "psnr_masked: empty region");
  const int c = a.channels();
  double sse = 0.0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (!region.at(y, x)) continue;
      sse += simd::sum_sq_diff(a.pixel(y, x).data(), b.pixel(y, x).data(), c);
    }
  }
  return db_from_mse(sse / static_cast<double>(n * c));
}

double psnr_sequence(const FrameSequence& a, const FrameSequence& b) {
  require(a.size() == b.size() && !a.empty(), "psnr_sequence: length mismatch");
  double total = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    const double db = psnr(a[t], b[t]);
    if (std::isinf(db)) return kPsnrInfinity;  // caller reports the cap
    total += db;
  }
  return total / static_cast<double>(a.size());
}

double psnr_for_report(double db) { return std::isinf(db) || db > kPsnrReportCap ? kPsnrReportCap : db; }

Grid luma(const Grid& g) {
  if (g.channels() == 1) return g;
  require(g.channels() == 3, "luma: expected 1 or 3 channels");
  Grid out(g.height(), g.width(), 1);
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      const auto p = g.pixel(y, x);
      out.at(y, x) = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
  }
  return out;
}

namespace {

std::vector<double> gaussian_taps(int n, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(n));
  const double c = (n - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    g[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Valid-mode separable filtering of a single-channel plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::vector<double>& taps) {
  const int n = static_cast<int>(taps.size());
  const int ow = w - n + 1;
  const int oh = h - n + 1;
  std::vector<double> horiz(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      horiz[static_cast<std::size_t>(y) * ow + x] =
          simd::dot(src.data() + static_cast<std::size_t>(y) * w + x, taps.data(), n);
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    double* dst = out.data() + static_cast<std::size_t>(y) * ow;
    for (int k = 0; k < n; ++k) {
      simd::axpy(taps[k], horiz.data() + static_cast<std::size_t>(y + k) * ow, dst, ow);
    }
  }
  return out;
}

}  // namespace

double ssim(const Grid& a, const Grid& b, const SsimParams& p) {
  require(a.same_shape(b), "ssim: dims differ");
  require(a.height() >= p.window && a.width() >= p.window, "ssim: grids smaller than the window");
  const Grid la = luma(a);
  const Grid lb = luma(b);
  const int h = a.height();
  const int w = a.width();
  const std::size_t n = static_cast<std::size_t>(h) * w;
  std::vector<double> xa(la.storage()), xb(lb.storage()), aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = xa[i] * xa[i];
    bb[i] = xb[i] * xb[i];
    ab[i] = xa[i] * xb[i];
  }
  const auto taps = gaussian_taps(p.window, p.sigma);
  const auto mu_a = filter_valid(xa, h, w, taps);
  const auto mu_b = filter_valid(xb, h, w, taps);
  const auto e_aa = filter_valid(aa, h, w, taps);
  const auto e_bb = filter_valid(bb, h, w, taps);
  const auto e_ab = filter_valid(ab, h, w, taps);
  const double c1 = (p.k1 * p.range) * (p.k1 * p.range);
  const double c2 = (p.k2 * p.range) * (p.k2 * p.range);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i];
    const double mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

double ssim_sequence(const FrameSequence& a, const FrameSequence& b, const SsimParams& p) {
  require(a.size() == b.size() && !a.empty(), "ssim_sequence: length mismatch");
  double total = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) total += ssim(a[t], b[t], p);
  return total / static_cast<double>(a.size());
}

double rec_loss(const FrameSequence& y_hat, const FrameSequence& y) {
  require(y_hat.size() == y.size() && !y.empty(), "rec_loss: length mismatch");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    require(y_hat[t].same_shape(y[t]), "rec_loss: frame dims differ");
    const auto a = y_hat[t].values();
    const auto b = y[t].values();
    for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
    count += a.size();
  }
  return sum / static_cast<double>(count);
}

namespace {

double mean_of(const Grid& g, double (*f)(double)) {
  require(!g.empty(), "gan_losses: empty score grid");
  double s = 0.0;
  for (double v : g.values()) {
    require(v > 0.0 && v < 1.0, "gan_losses: scores must lie in (0, 1)");
    s += f(v);
  }
  return s / static_cast<double>(g.size());
}

double log_of(double v) { return std::log(v); }
double one_minus_log(double v) { return 1.0 - std::log(v); }
double log_one_minus(double v) { return std::log1p(-v); }

}  // namespace

GanLosses gan_losses(const Grid& scores_real, const Grid& scores_fake, DiscriminatorForm form) {
  GanLosses r;
  const double real_term = mean_of(scores_real, log_of);
  const double fake_term = form == DiscriminatorForm::kAsPrinted
                               ? mean_of(scores_fake, one_minus_log)
                               : mean_of(scores_fake, log_one_minus);
  r.l_d = real_term + fake_term;
  r.l_g = -mean_of(scores_fake, log_of);
  return r;
}

void LossConfig::validate() const {
  if (alpha1 < 0 || alpha2 < 0 || lambda1 < 0 || lambda2 < 0) {
    fail(ErrorKind::kConfig, "loss weights must be non-negative");
  }
}

namespace {

constexpr std::array<FlowCompletionReference, 5> kFlowReference = {{
    {"DFVI", 0.046, 0.107, 0.130},
    {"FGVC", 0.032, 0.082, 1.125},
    {"FGT", 0.021, 0.052, 0.312},
    {"ISVI", 0.019, 0.051, 0.231},
    {"DualProp", 0.020, 0.051, 0.005},
}};

}  // namespace

std::span<const FlowCompletionReference> flow_completion_reference() { return kFlowReference; }

}  // namespace dualprop
