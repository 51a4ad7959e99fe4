// dualprop command-line front end: synthetic data, flow completion,
// propagation, inpainting, metrics and cost reports.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "dualprop/cost_model.hpp"
#include "dualprop/error.hpp"
#include "dualprop/flow_ops.hpp"
#include "dualprop/io.hpp"
#include "dualprop/metrics.hpp"
#include "dualprop/parallel.hpp"
#include "dualprop/pipeline.hpp"
#include "dualprop/simd/kernels.hpp"
#include "dualprop/synth.hpp"
#include "dualprop/weights.hpp"

namespace fs = std::filesystem;
using namespace dualprop;

namespace {

struct Common {
  std::string config;
  std::string mode;
  std::optional<double> epsilon;
  std::optional<std::uint64_t> seed;
  std::string weights;
  std::string out_dir;
  std::string format = "png";
  int threads = 0;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "key = value config file");
  app->add_option("--mode", c.mode, "propagation-only | weighted");
  app->add_option("--epsilon", c.epsilon, "flow consistency threshold");
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--weights", c.weights, "weight archive");
  app->add_option("--out-dir", c.out_dir, "output directory");
  app->add_option("--format", c.format, "frame format: png | pfm");
  app->add_option("--threads", c.threads, "worker threads (default: DUALPROP_THREADS or 1)");
}

PipelineConfig resolve_config(const Common& c) {
  PipelineConfig cfg;
  if (!c.config.empty()) cfg = load_config(c.config);
  if (!c.mode.empty()) cfg.mode = parse_mode(c.mode);
  if (c.epsilon) cfg.epsilon = *c.epsilon;
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

std::optional<ModelWeights> resolve_weights(const Common& c, const PipelineConfig& cfg) {
  if (c.weights.empty()) return std::nullopt;
  return from_archive(WeightArchive::load(c.weights), cfg.msvt());
}

fs::path require_out_dir(const Common& c) {
  if (c.out_dir.empty()) fail(ErrorKind::kBadInput, "--out-dir is required");
  fs::create_directories(c.out_dir);
  return c.out_dir;
}

PipelineInput load_input(const std::string& dir) {
  io::SequenceFiles s = io::read_sequence(dir);
  return {std::move(s.frames), std::move(s.masks), std::move(s.flows_fwd), std::move(s.flows_bwd)};
}

void write_text(const fs::path& p, const std::string& text) { io::write_file(p, text); }

// ---- gen ----

struct GenArgs {
  int frames = 12;
  int height = 64;
  int width = 96;
  int vx = 1;
  int vy = 0;
  std::string mask = "stationary";
  double coverage = kDefaultMaskCoverage;
  std::string random_weights;
  ModelShape shape;
};

int run_gen(const Common& c, const GenArgs& g) {
  const fs::path out = require_out_dir(c);
  const io::FrameFormat format = io::parse_frame_format(c.format);
  SceneSpec spec;
  spec.seed = c.seed.value_or(0);
  spec.frames = g.frames;
  spec.height = g.height;
  spec.width = g.width;
  spec.vx = g.vx;
  spec.vy = g.vy;
  MaskKind kind;
  if (g.mask == "stationary") kind = MaskKind::kStationary;
  else if (g.mask == "object") kind = MaskKind::kObject;
  else fail(ErrorKind::kBadInput, "--mask must be stationary|object");

  const SyntheticSequence seq = gen_sequence(spec);
  const MaskSequence masks = gen_masks(spec, kind, spec.seed + 1, g.coverage);
  const CorruptedSequence bad = corrupt(seq.frames, masks, seq.flows_fwd, seq.flows_bwd);
  io::write_frames(out, bad.frames, format);
  io::write_masks(out, masks);
  io::write_flows(out, bad.flows_fwd, bad.flows_bwd);
  io::write_frames(out / "gt", seq.frames, format);
  io::write_flows(out / "gt", seq.flows_fwd, seq.flows_bwd);

  if (!g.random_weights.empty()) {
    const PipelineConfig cfg = resolve_config(c);
    const ModelWeights w = random_model_weights(spec.seed + 2, g.shape, cfg.msvt());
    to_archive(w).save(g.random_weights);
  }
  std::printf("wrote %d frames (%dx%d), mask coverage %.4f to %s\n", g.frames, g.width, g.height,
              mask_coverage(masks), out.string().c_str());
  return 0;
}

// ---- complete-flow ----

int run_complete_flow(const Common& c, const std::string& input) {
  const fs::path out = require_out_dir(c);
  PipelineConfig cfg = resolve_config(c);
  const auto weights = resolve_weights(c, cfg);
  PipelineInput in = load_input(input);
  if (in.flows_fwd.empty()) fail(ErrorKind::kBadInput, "input has no flow files");
  const MaskSequence m_fwd(in.masks.begin(), in.masks.end() - 1);
  const MaskSequence m_bwd(in.masks.begin() + 1, in.masks.end());
  FlowSequence fwd, bwd;
  if (weights && weights->rfc) {
    fwd = rfc_forward(in.flows_fwd, m_fwd, *weights->rfc);
    bwd = rfc_forward(in.flows_bwd, m_bwd, *weights->rfc);
  } else {
    fwd = complete_flows_laplacian(in.flows_fwd, m_fwd);
    bwd = complete_flows_laplacian(in.flows_bwd, m_bwd);
  }
  io::write_flows(out, fwd, bwd);
  return 0;
}

// ---- propagate ----

int run_propagate(const Common& c, const std::string& input) {
  const fs::path out = require_out_dir(c);
  const io::FrameFormat format = io::parse_frame_format(c.format);
  const PipelineConfig cfg = resolve_config(c);
  PipelineInput in = load_input(input);
  if (in.flows_fwd.empty()) fail(ErrorKind::kBadInput, "input has no flow files");
  const MaskSequence m_fwd(in.masks.begin(), in.masks.end() - 1);
  const MaskSequence m_bwd(in.masks.begin() + 1, in.masks.end());
  const FlowSequence fwd = complete_flows_laplacian(in.flows_fwd, m_fwd);
  const FlowSequence bwd = complete_flows_laplacian(in.flows_bwd, m_bwd);
  PropagationOptions opt;
  opt.epsilon = cfg.epsilon;
  opt.max_passes = cfg.max_passes;
  const PropagationState ps = propagate_global(in.frames, in.masks, fwd, bwd, opt);
  io::write_frames(out, ps.frames, format);
  io::write_masks(out, ps.masks);
  nlohmann::ordered_json j;
  j["passes"] = ps.pass_count;
  j["remaining_per_pass"] = ps.remaining;
  nlohmann::ordered_json events = nlohmann::ordered_json::array();
  for (const FillEvent& e : ps.events) {
    events.push_back({{"pass", e.pass},
                      {"direction", e.backward ? "backward" : "forward"},
                      {"target", e.target},
                      {"source", e.source},
                      {"pixels", e.pixels}});
  }
  j["events"] = events;
  write_text(out / "propagation.json", j.dump(2) + "\n");
  return 0;
}

// ---- inpaint ----

int run_inpaint(const Common& c, const std::string& input) {
  const fs::path out = require_out_dir(c);
  const io::FrameFormat format = io::parse_frame_format(c.format);
  const PipelineConfig cfg = resolve_config(c);
  const auto weights = resolve_weights(c, cfg);
  const PipelineResult r = run_pipeline(load_input(input), cfg, weights ? &*weights : nullptr);
  io::write_frames(out, r.frames, format);
  write_text(out / "diagnostics.json", diagnostics_json(r.diagnostics));
  return 0;
}

// ---- metrics ----

nlohmann::json number_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

int run_metrics(const Common& c, const std::string& pred_dir, const std::string& gt_dir) {
  const FrameSequence pred = io::read_frames(pred_dir);
  const FrameSequence gt = io::read_frames(gt_dir);
  if (pred.empty() || pred.size() != gt.size()) {
    fail(ErrorKind::kBadInput, "prediction and ground truth frame counts differ");
  }
  nlohmann::ordered_json j;
  j["frames"] = pred.size();
  j["psnr"] = psnr_for_report(psnr_sequence(pred, gt));
  j["ssim"] = ssim_sequence(pred, gt);

  FlowSequence gt_fwd, gt_bwd, pr_fwd;
  for (const auto& p : io::numbered_files(gt_dir, "flow_fwd", "flo")) gt_fwd.push_back(io::read_flo(p));
  for (const auto& p : io::numbered_files(gt_dir, "flow_bwd", "flo")) gt_bwd.push_back(io::read_flo(p));
  for (const auto& p : io::numbered_files(pred_dir, "flow_fwd", "flo")) pr_fwd.push_back(io::read_flo(p));
  double e_warp = std::nan("");
  if (!gt_fwd.empty()) {
    WarpingErrorOptions opt;
    if (c.epsilon) opt.epsilon = *c.epsilon;
    const WarpingError we = warping_error(pred, gt_fwd, gt_bwd.size() == gt_fwd.size() ? &gt_bwd : nullptr, opt);
    e_warp = we.value * 1e3;
  }
  j["e_warp"] = number_or_null(e_warp);
  j["e_warp_scale"] = 1e-3;
  double epe = std::nan("");
  if (!pr_fwd.empty() && pr_fwd.size() == gt_fwd.size()) {
    double sum = 0.0;
    for (std::size_t t = 0; t < pr_fwd.size(); ++t) sum += endpoint_error(pr_fwd[t], gt_fwd[t]);
    epe = sum / static_cast<double>(pr_fwd.size());
  }
  j["epe"] = number_or_null(epe);
  const std::string text = j.dump(2) + "\n";
  if (!c.out_dir.empty()) {
    fs::create_directories(c.out_dir);
    write_text(fs::path(c.out_dir) / "metrics.json", text);
  }
  std::cout << text;
  return 0;
}

// ---- cost-report ----

int run_cost_report(const Common& c, int height, int width, const std::string& csv_path) {
  const PipelineConfig cfg = resolve_config(c);
  CostConfig base;
  base.height = height;
  base.width = width;
  base.split = cfg.split;
  base.window_h = cfg.window_h;
  base.window_w = cfg.window_w;
  auto gflops = [&](const CostConfig& cc) { return block_flops(cc).total * cfg.num_blocks / 1e9; };

  std::string csv = "method,x,gflops\n";
  auto csv_row = [&](std::string_view method, double x, double v) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.*s,%g,%.6g\n", static_cast<int>(method.size()), method.data(), x, v);
    csv += buf;
  };
  for (const CurvePoint& p : reference_curves()) {
    const std::string name = std::string(p.method) + (p.axis == CurveAxis::kFrames ? "/frames" : "/resolution");
    csv_row(name, p.x, p.gflops);
  }

  std::printf("transformer GFLOPs (%d blocks), %dx%d frames\n", cfg.num_blocks, width, height);
  std::printf("%8s %12s %12s %10s %12s %12s %12s %12s\n", "frames", "model-dense", "model-sparse",
              "ratio", "DualProp", "E2FGVI", "FGT", "FuseFormer");
  for (int t = 10; t <= 60; t += 10) {
    CostConfig cc = base;
    cc.frames = t;
    const double dense = gflops(dense_config(cc));
    const double sparse = gflops(sparse_config(cc, kDefaultCostMaskRatio, cfg.kv_stride));
    csv_row("model-dense/frames", t, dense);
    csv_row("model-sparse/frames", t, sparse);
    std::printf("%8d %12.2f %12.2f %10.3f", t, dense, sparse, sparse / dense);
    for (std::string_view m : {std::string_view(kMethodOurs), std::string_view("E2FGVI"),
                               std::string_view("FGT"), std::string_view("FuseFormer")}) {
      const auto ref = reference_gflops(m, CurveAxis::kFrames, t);
      if (ref) std::printf(" %12.2f", *ref);
      else std::printf(" %12s", "-");
    }
    std::printf("\n");
  }
  std::printf("\n%8s %12s %12s %10s %12s %12s %12s\n", "height", "model-dense", "model-sparse",
              "ratio", "DualProp", "E2FGVI", "FGT");
  for (int h : {240, 480, 720, 960}) {
    CostConfig cc = base;
    cc.frames = 10;
    cc.height = h;
    cc.width = h * 9 / 5;  // 432x240 aspect
    const double dense = gflops(dense_config(cc));
    const double sparse = gflops(sparse_config(cc, kDefaultCostMaskRatio, cfg.kv_stride));
    csv_row("model-dense/resolution", h, dense);
    csv_row("model-sparse/resolution", h, sparse);
    std::printf("%8d %12.2f %12.2f %10.3f", h, dense, sparse, sparse / dense);
    for (std::string_view m : {std::string_view(kMethodOurs), std::string_view("E2FGVI"),
                               std::string_view("FGT")}) {
      const auto ref = reference_gflops(m, CurveAxis::kResolution, h);
      if (ref) std::printf(" %12.2f", *ref);
      else std::printf(" %12s", "-");
    }
    std::printf("\n");
  }
  std::printf("\nabsolute counts follow this model's conventions; compare shapes, not values\n");
  fs::path csv_file = csv_path;
  if (csv_file.empty() && !c.out_dir.empty()) {
    fs::create_directories(c.out_dir);
    csv_file = fs::path(c.out_dir) / "cost_curves.csv";
  }
  if (!csv_file.empty()) write_text(csv_file, csv);
  return 0;
}

// ---- selftest ----

int run_selftest(const Common& c) {
  int failures = 0;
  auto report = [&](const char* name, bool ok) {
    std::printf("%s %s\n", ok ? "PASS" : "FAIL", name);
    if (!ok) ++failures;
  };

  {
    Rng rng(c.seed.value_or(1));
    std::vector<double> a(1003), b(1003);
    for (auto& v : a) v = rng.uniform(-1, 1);
    for (auto& v : b) v = rng.uniform(-1, 1);
    const auto& ref = simd::table(simd::Backend::kScalar);
    bool ok = true;
    for (auto be : {simd::Backend::kAvx2, simd::Backend::kNeon}) {
      if (!simd::is_supported(be)) continue;
      const auto& t = simd::table(be);
      ok &= std::abs(t.dot(a.data(), b.data(), a.size()) - ref.dot(a.data(), b.data(), a.size())) < 1e-9;
      std::vector<double> y1 = b, y2 = b;
      t.axpy(0.37, a.data(), y1.data(), a.size());
      ref.axpy(0.37, a.data(), y2.data(), a.size());
      ok &= y1 == y2;
    }
    report("simd backends agree with the scalar kernels", ok);
  }
  {
    Rng rng(2);
    FlowField f(9, 13, 2);
    for (double& v : f.values()) v = static_cast<float>(rng.uniform(-20, 20));
    report(".flo round trip", io::decode_flo(io::encode_flo(f)) == f);
  }
  {
    const ModelWeights w = random_model_weights(3, {8, 16, 2, 2, 8});
    const WeightArchive ar = to_archive(w);
    report("weight archive round trip", WeightArchive::decode(ar.encode()) == ar);
  }
  {
    SceneSpec spec;
    spec.seed = 7;
    spec.frames = 8;
    spec.height = 48;
    spec.width = 64;
    spec.vx = 2;
    const SyntheticSequence seq = gen_sequence(spec);
    const MaskSequence masks = gen_masks(spec, MaskKind::kObject, 8);
    const CorruptedSequence bad = corrupt(seq.frames, masks, seq.flows_fwd, seq.flows_bwd);
    PipelineConfig cfg;
    const PipelineInput in{bad.frames, masks, bad.flows_fwd, bad.flows_bwd};
    const PipelineResult r1 = run_pipeline(in, cfg);
    const PipelineResult r2 = run_pipeline(in, cfg);
    report("pipeline is deterministic", r1.frames == r2.frames &&
                                            diagnostics_json(r1.diagnostics) ==
                                                diagnostics_json(r2.diagnostics));
    bool unmasked_kept = true;
    for (std::size_t t = 0; t < masks.size(); ++t) {
      for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
          if (masks[t].at(y, x)) continue;
          for (int ch = 0; ch < 3; ++ch) unmasked_kept &= r1.frames[t].at(y, x, ch) == bad.frames[t].at(y, x, ch);
        }
      }
    }
    report("unmasked pixels untouched", unmasked_kept);
  }
  std::printf("simd backend: %.*s\n",
              static_cast<int>(simd::backend_name(simd::active_backend()).size()),
              simd::backend_name(simd::active_backend()).data());
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dualprop: flow-guided video inpainting toolkit"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen", "write a synthetic sequence with ground truth");
  GenArgs g;
  add_common(gen, common);
  gen->add_option("--frames", g.frames, "sequence length");
  gen->add_option("--height", g.height, "frame height in pixels");
  gen->add_option("--width", g.width, "frame width in pixels");
  gen->add_option("--vx", g.vx, "scene motion per frame, integer pixels");
  gen->add_option("--vy", g.vy, "vertical scene motion per frame");
  gen->add_option("--mask", g.mask, "stationary | object");
  gen->add_option("--coverage", g.coverage, "masked fraction of each frame");
  gen->add_option("--random-weights", g.random_weights, "also write a random weight archive here");
  gen->add_option("--feature-channels", g.shape.feature_channels);
  gen->add_option("--token-channels", g.shape.token_channels);
  gen->add_option("--heads", g.shape.heads, "attention heads");
  gen->add_option("--blocks", g.shape.blocks, "transformer blocks");
  gen->add_option("--rfc-channels", g.shape.rfc_channels, "0 leaves out the flow network");

  std::string input, gt_dir, csv_path;
  int cost_h = 240, cost_w = 432;
  auto* complete = app.add_subcommand("complete-flow", "complete masked flows");
  add_common(complete, common);
  complete->add_option("input", input, "sequence directory")->required();
  auto* propagate = app.add_subcommand("propagate", "image-domain propagation only");
  add_common(propagate, common);
  propagate->add_option("input", input, "sequence directory")->required();
  auto* inpaint = app.add_subcommand("inpaint", "full pipeline");
  add_common(inpaint, common);
  inpaint->add_option("input", input, "sequence directory")->required();
  auto* metrics = app.add_subcommand("metrics", "PSNR, SSIM, warping error, EPE");
  add_common(metrics, common);
  metrics->add_option("prediction", input, "predicted frames (and optional flows)")->required();
  metrics->add_option("ground_truth", gt_dir, "ground truth frames and flows")->required();
  auto* cost = app.add_subcommand("cost-report", "transformer FLOPs vs. frames and resolution");
  add_common(cost, common);
  cost->add_option("--height", cost_h, "frame height for the model series");
  cost->add_option("--width", cost_w, "frame width for the model series");
  cost->add_option("--csv", csv_path, "series file (method,x,gflops)");
  auto* selftest = app.add_subcommand("selftest", "quick internal checks");
  add_common(selftest, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (common.threads > 0) set_thread_count(common.threads);
    if (*gen) return run_gen(common, g);
    if (*complete) return run_complete_flow(common, input);
    if (*propagate) return run_propagate(common, input);
    if (*inpaint) return run_inpaint(common, input);
    if (*metrics) return run_metrics(common, input, gt_dir);
    if (*cost) return run_cost_report(common, cost_h, cost_w, csv_path);
    if (*selftest) return run_selftest(common);
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
