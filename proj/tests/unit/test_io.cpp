#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>

#include "dualprop/io.hpp"
#include "reference.hpp"

using namespace dualprop;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("dualprop_test_io_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::kBadInput;
}

// Values that survive the float32 round trip exactly.
Grid float_exact(Rng& rng, int h, int w, int c) {
  Grid g = ref::random_grid(rng, h, w, c, -40, 40);
  for (double& v : g.values()) v = static_cast<float>(v);
  return g;
}

}  // namespace

TEST_CASE(".flo round trip is bitwise") {
  Rng rng(121);
  const Grid f = float_exact(rng, 7, 11, 2);
  const std::string bytes = io::encode_flo(f);
  CHECK(bytes.size() == 12 + 7 * 11 * 2 * 4);
  float magic = 0;
  std::memcpy(&magic, bytes.data(), 4);
  CHECK(magic == io::kFloMagic);
  CHECK(io::decode_flo(bytes) == f);

  TempDir d("flo");
  io::write_flo(d.path / "a.flo", f);
  CHECK(io::read_flo(d.path / "a.flo") == f);
}

TEST_CASE(".flo errors") {
  Rng rng(122);
  const std::string good = io::encode_flo(float_exact(rng, 3, 4, 2));
  std::string bad = good;
  bad[0] ^= 0x01;
  CHECK(kind_of([&] { io::decode_flo(bad); }) == ErrorKind::kBadMagic);
  CHECK(kind_of([&] { io::decode_flo(good.substr(0, good.size() - 1)); }) == ErrorKind::kTruncated);
  CHECK(kind_of([&] { io::decode_flo(good.substr(0, 8)); }) == ErrorKind::kTruncated);
  CHECK(kind_of([&] { io::decode_flo(good.substr(0, 2)); }) == ErrorKind::kTruncated);
  CHECK(kind_of([&] { io::decode_flo(good + "xxxx"); }) == ErrorKind::kShapeMismatch);
  std::string neg = good;
  const std::int32_t w = -3;
  std::memcpy(neg.data() + 4, &w, 4);
  CHECK(kind_of([&] { io::decode_flo(neg); }) == ErrorKind::kShapeMismatch);
  CHECK_THROWS_AS(io::encode_flo(Grid(2, 2, 3)), Error);
  CHECK(kind_of([] { io::read_flo("/nonexistent/dir/x.flo"); }) == ErrorKind::kIo);
}

TEST_CASE("pfm round trip for both channel counts") {
  Rng rng(123);
  TempDir d("pfm");
  for (int c : {1, 3}) {
    const Grid g = float_exact(rng, 5, 9, c);
    io::write_pfm(d.path / "g.pfm", g);
    CHECK(io::read_pfm(d.path / "g.pfm") == g);
  }
  io::write_file(d.path / "bad.pfm", "P5\n1 1\n-1.0\n");
  CHECK(kind_of([&] { io::read_pfm(d.path / "bad.pfm"); }) == ErrorKind::kBadMagic);
  io::write_file(d.path / "short.pfm", "PF\n2 2\n-1.0\nabc");
  CHECK(kind_of([&] { io::read_pfm(d.path / "short.pfm"); }) == ErrorKind::kTruncated);
}

TEST_CASE("png frames and masks") {
  TempDir d("png");
  Grid g(3, 4, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c) g.at(y, x, c) = (y * 4 + x + c * 50) / 255.0;
  io::write_png_frame(d.path / "f.png", g);
  CHECK(max_abs_diff(io::read_png_frame(d.path / "f.png"), g) < 1e-12);

  Grid gray(1, 2, 1);
  gray.at(0, 0) = 128 / 255.0;
  gray.at(0, 1) = 127 / 255.0;
  io::write_png_frame(d.path / "m.png", gray);
  const Mask m = io::read_png_mask(d.path / "m.png");
  CHECK(m.at(0, 0));
  CHECK_FALSE(m.at(0, 1));

  Mask mm(5, 6);
  mm.set(1, 2, true);
  mm.set(4, 5, true);
  io::write_png_mask(d.path / "mm.png", mm);
  CHECK(io::read_png_mask(d.path / "mm.png") == mm);

  io::write_file(d.path / "junk.png", "not a png");
  CHECK(kind_of([&] { io::read_png_frame(d.path / "junk.png"); }) == ErrorKind::kBadMagic);
}

TEST_CASE("sequence directories") {
  Rng rng(124);
  TempDir d("seq");
  FrameSequence frames;
  MaskSequence masks;
  FlowSequence fwd, bwd;
  for (int t = 0; t < 3; ++t) {
    frames.push_back(float_exact(rng, 6, 8, 3));
    for (double& v : frames.back().values()) v = std::abs(v) / 64.0;
    for (double& v : frames.back().values()) v = static_cast<float>(v);
    masks.push_back(ref::random_mask(rng, 6, 8, 0.3));
  }
  for (int t = 0; t < 2; ++t) {
    fwd.push_back(float_exact(rng, 6, 8, 2));
    bwd.push_back(float_exact(rng, 6, 8, 2));
  }
  io::write_frames(d.path, frames, io::FrameFormat::kPfm);
  io::write_masks(d.path, masks);
  io::write_flows(d.path, fwd, bwd);
  CHECK(fs::exists(d.path / "frame_0000.pfm"));
  CHECK(fs::exists(d.path / "flow_bwd_0001.flo"));
  const io::SequenceFiles s = io::read_sequence(d.path);
  CHECK(s.frames == frames);
  CHECK(s.masks == masks);
  CHECK(s.flows_fwd == fwd);
  CHECK(s.flows_bwd == bwd);

  fs::remove(d.path / "flow_bwd_0001.flo");
  CHECK(kind_of([&] { io::read_sequence(d.path); }) == ErrorKind::kBadInput);
  fs::remove(d.path / "frame_0001.pfm");
  CHECK(kind_of([&] { io::numbered_files(d.path, "frame", "pfm"); }) == ErrorKind::kBadInput);
}

TEST_CASE("key = value parsing") {
  const auto kv = io::parse_key_values("# comment\n epsilon = 5 \n\nmode=weighted # trailing\n");
  REQUIRE(kv.size() == 2);
  CHECK(kv.at("epsilon") == "5");
  CHECK(kv.at("mode") == "weighted");
  CHECK(kind_of([] { io::parse_key_values("a = 1\na = 2\n"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { io::parse_key_values("novalue\n"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { io::parse_key_values(" = 3\n"); }) == ErrorKind::kConfig);
}

TEST_CASE("frame format names") {
  CHECK(io::parse_frame_format("png") == io::FrameFormat::kPng);
  CHECK(io::parse_frame_format("pfm") == io::FrameFormat::kPfm);
  CHECK(kind_of([] { io::parse_frame_format("jpg"); }) == ErrorKind::kConfig);
}
