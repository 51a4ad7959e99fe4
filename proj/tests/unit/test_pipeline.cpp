#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cmath>

#include "dualprop/metrics.hpp"
#include "dualprop/parallel.hpp"
#include "dualprop/pipeline.hpp"
#include "dualprop/synth.hpp"

using namespace dualprop;

namespace {

SyntheticSequence scene(std::uint64_t seed, int frames, int h, int w, int vx) {
  SceneSpec s;
  s.seed = seed;
  s.frames = frames;
  s.height = h;
  s.width = w;
  s.vx = vx;
  s.vy = 0;
  return gen_sequence(s);
}

PipelineInput corrupted_input(const SyntheticSequence& seq, const MaskSequence& masks) {
  const CorruptedSequence c = corrupt(seq.frames, masks, seq.flows_fwd, seq.flows_bwd);
  return {c.frames, masks, c.flows_fwd, c.flows_bwd};
}

ModelShape tiny_shape() {
  ModelShape s;
  s.feature_channels = 4;
  s.token_channels = 8;
  s.heads = 2;
  s.blocks = 2;
  s.rfc_channels = 4;
  return s;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::kBadInput;
}

}  // namespace

TEST_CASE("clip starts cover the sequence") {
  CHECK(clip_starts(10, 20) == std::vector<int>{0});
  CHECK(clip_starts(20, 20) == std::vector<int>{0});
  CHECK(clip_starts(25, 20) == std::vector<int>{0, 5});
  CHECK(clip_starts(50, 20) == std::vector<int>{0, 10, 20, 30});
  for (int n = 1; n < 60; ++n) {
    for (int clip : {1, 3, 8, 20}) {
      const auto s = clip_starts(n, clip);
      CHECK(s.front() == 0);
      CHECK(s.back() + std::min(clip, n) == n);
      for (std::size_t i = 1; i < s.size(); ++i) {
        CHECK(s[i] > s[i - 1]);
        CHECK(s[i] <= s[i - 1] + clip);
      }
    }
  }
}

TEST_CASE("config parsing") {
  PipelineConfig c;
  apply_config(c, {{"epsilon", "2.5"}, {"mode", "weighted"}, {"expansion", "off"},
                   {"query_mask", "nearest"}, {"split_kernel", "5"}});
  CHECK(c.epsilon == 2.5);
  CHECK(c.mode == PipelineMode::kWeighted);
  CHECK_FALSE(c.expansion);
  CHECK(c.query_mode == QueryMaskMode::kStrictNearest);
  CHECK(c.split.kh == 5);
  CHECK(c.msvt().split.kw == 5);

  PipelineConfig d;
  CHECK(kind_of([&] { apply_config(d, {{"bogus", "1"}}); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { apply_config(d, {{"epsilon", "abc"}}); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { apply_config(d, {{"epsilon", "-1"}}); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { apply_config(d, {{"mode", "fast"}}); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { apply_config(d, {{"expansion", "maybe"}}); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { apply_config(d, {{"split_stride", "9"}}); }) == ErrorKind::kConfig);
  CHECK(to_string(parse_mode("propagation-only")) == "propagation-only");
}

TEST_CASE("empty masks leave the video untouched") {
  const SyntheticSequence seq = scene(1, 4, 32, 48, 1);
  const MaskSequence masks(4, Mask(32, 48));
  const PipelineInput in{seq.frames, masks, seq.flows_fwd, seq.flows_bwd};
  const PipelineResult a = run_pipeline(in, {});
  CHECK(a.frames == seq.frames);
  CHECK(a.diagnostics.masked_pixels == 0);

  const ModelWeights w = random_model_weights(3, tiny_shape());
  PipelineConfig cfg;
  cfg.mode = PipelineMode::kWeighted;
  cfg.num_blocks = 2;
  const PipelineResult b = run_pipeline(in, cfg, &w);
  CHECK(b.frames == seq.frames);
  CHECK(b.diagnostics.active_windows_total == 0);
}

TEST_CASE("translation with a stationary hole is recovered") {
  const SyntheticSequence seq = scene(7, 10, 128, 192, 2);
  SceneSpec s;
  s.seed = 7;
  s.frames = 10;
  s.vx = 2;
  const MaskSequence masks = gen_masks(s, MaskKind::kStationary, 7);
  const PipelineResult r = run_pipeline(corrupted_input(seq, masks), {});
  // Filled region: pixels that image propagation wrote.
  double sse = 0.0;
  std::size_t n = 0;
  for (int t = 0; t < 10; ++t) {
    for (int y = 0; y < 128; ++y) {
      for (int x = 0; x < 192; ++x) {
        if (!r.filled[t].at(y, x)) continue;
        for (int c = 0; c < 3; ++c) {
          const double d = r.frames[t].at(y, x, c) - seq.frames[t].at(y, x, c);
          sse += d * d;
          ++n;
        }
      }
    }
  }
  REQUIRE(n > 0);
  CHECK((sse == 0.0 || -10.0 * std::log10(sse / static_cast<double>(n)) >= 50.0));
  CHECK(r.diagnostics.fill_ratio > 0.3);
  CHECK(r.diagnostics.flow_completion == "laplacian");
}

TEST_CASE("pipeline invariants") {
  const SyntheticSequence seq = scene(11, 6, 32, 40, 1);
  SceneSpec s;
  s.frames = 6;
  s.height = 32;
  s.width = 40;
  s.vx = 1;
  const MaskSequence masks = gen_masks(s, MaskKind::kObject, 4, 0.1);
  const PipelineInput in = corrupted_input(seq, masks);

  const int saved = thread_count();
  set_thread_count(1);
  const PipelineResult a = run_pipeline(in, {});
  set_thread_count(3);
  const PipelineResult b = run_pipeline(in, {});
  set_thread_count(saved);
  CHECK(a.frames == b.frames);
  CHECK(diagnostics_json(a.diagnostics) == diagnostics_json(b.diagnostics));

  for (int t = 0; t < 6; ++t) {
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 40; ++x) {
        if (masks[t].at(y, x)) continue;
        for (int c = 0; c < 3; ++c) CHECK(a.frames[t].at(y, x, c) == in.frames[t].at(y, x, c));
      }
    }
  }
  const auto& rem = a.diagnostics.remaining_per_pass;
  REQUIRE_FALSE(rem.empty());
  CHECK(rem.front() == a.diagnostics.masked_pixels);
  for (std::size_t i = 1; i < rem.size(); ++i) CHECK(rem[i] <= rem[i - 1]);
  CHECK(a.diagnostics.propagated_pixels + a.diagnostics.residual_pixels ==
        a.diagnostics.masked_pixels);
}

TEST_CASE("missing flows are treated as zero motion") {
  const SyntheticSequence seq = scene(12, 3, 16, 24, 0);
  MaskSequence masks(3, Mask(16, 24));
  masks[1].set(5, 5, true);
  PipelineInput in = corrupted_input(seq, masks);
  in.flows_fwd.clear();
  in.flows_bwd.clear();
  const PipelineResult r = run_pipeline(in, {});
  CHECK_FALSE(r.diagnostics.flows_provided);
  CHECK(r.frames[1] == seq.frames[1]);
}

TEST_CASE("weighted mode runs end to end") {
  const SyntheticSequence seq = scene(13, 5, 32, 48, 1);
  SceneSpec s;
  s.frames = 5;
  s.height = 32;
  s.width = 48;
  s.vx = 1;
  const MaskSequence masks = gen_masks(s, MaskKind::kObject, 2, 0.12);
  const PipelineInput in = corrupted_input(seq, masks);
  const ModelWeights w = random_model_weights(4, tiny_shape());
  PipelineConfig cfg;
  cfg.mode = PipelineMode::kWeighted;
  cfg.num_blocks = 2;
  cfg.clip_length = 3;
  const PipelineResult r = run_pipeline(in, cfg, &w);
  CHECK(r.diagnostics.flow_completion == "recurrent");
  CHECK(r.diagnostics.clips.size() == clip_starts(5, 3).size());
  CHECK(r.diagnostics.active_windows_total > 0);
  for (int t = 0; t < 5; ++t) {
    for (double v : r.frames[t].values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  const auto j = nlohmann::json::parse(diagnostics_json(r.diagnostics));
  CHECK(j["mode"] == "weighted");
  // Clips this small cost more sparse than dense (expanded windows, pooled
  // tokens); only the bookkeeping is checked here.
  const auto& dense = j["cost_per_block"]["dense"];
  const auto& sparse = j["cost_per_block"]["sparse"];
  CHECK(dense["total"].get<double>() > 0.0);
  CHECK(sparse["active_windows"].get<long long>() <= dense["active_windows"].get<long long>());
  CHECK(sparse["key_frames"].get<long long>() < dense["key_frames"].get<long long>());
}

TEST_CASE("pipeline input errors") {
  const SyntheticSequence seq = scene(14, 3, 16, 24, 0);
  const MaskSequence masks(3, Mask(16, 24));
  CHECK(kind_of([&] {
          run_pipeline({seq.frames, MaskSequence(2, Mask(16, 24)), {}, {}}, {});
        }) == ErrorKind::kBadInput);
  PipelineConfig cfg;
  cfg.mode = PipelineMode::kWeighted;
  CHECK(kind_of([&] { run_pipeline({seq.frames, masks, {}, {}}, cfg); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] {
          run_pipeline({seq.frames, masks, {seq.flows_fwd[0]}, {seq.flows_bwd[0]}}, {});
        }) == ErrorKind::kBadInput);
}
