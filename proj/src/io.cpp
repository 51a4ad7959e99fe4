#include "dualprop/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dualprop::io {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::string& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(const char* p) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "write failed for " + path.string());
}

std::string encode_flo(const FlowField& flow) {
  require(flow.channels() == 2, "encode_flo: flow must have 2 channels");
  std::string out;
  out.reserve(12 + flow.size() * 4);
  put_le<float>(out, kFloMagic);
  put_le<std::int32_t>(out, flow.width());
  put_le<std::int32_t>(out, flow.height());
  for (double v : flow.values()) put_le<float>(out, static_cast<float>(v));
  return out;
}

FlowField decode_flo(std::string_view bytes) {
  if (bytes.size() < 4) fail(ErrorKind::kTruncated, ".flo: file shorter than the magic");
  const float magic = get_le<float>(bytes.data());
  if (std::memcmp(&magic, &kFloMagic, sizeof(float)) != 0) {
    fail(ErrorKind::kBadMagic, ".flo: bad magic number");
  }
  if (bytes.size() < 12) fail(ErrorKind::kTruncated, ".flo: header truncated");
  const auto w = get_le<std::int32_t>(bytes.data() + 4);
  const auto h = get_le<std::int32_t>(bytes.data() + 8);
  if (w <= 0 || h <= 0 || w > (1 << 20) || h > (1 << 20)) {
    fail(ErrorKind::kShapeMismatch, ".flo: implausible dimensions");
  }
  const std::size_t n = static_cast<std::size_t>(w) * h * 2;
  const std::size_t need = 12 + n * 4;
  if (bytes.size() < need) fail(ErrorKind::kTruncated, ".flo: payload truncated");
  if (bytes.size() > need) fail(ErrorKind::kShapeMismatch, ".flo: trailing bytes after payload");
  FlowField f(h, w, 2);
  auto vals = f.values();
  for (std::size_t i = 0; i < n; ++i) vals[i] = get_le<float>(bytes.data() + 12 + 4 * i);
  return f;
}

FlowField read_flo(const fs::path& path) { return decode_flo(read_file(path)); }
void write_flo(const fs::path& path, const FlowField& flow) { write_file(path, encode_flo(flow)); }

void write_pfm(const fs::path& path, const Grid& g) {
  require(g.channels() == 1 || g.channels() == 3, "write_pfm: need 1 or 3 channels");
  std::string out = g.channels() == 3 ? "PF\n" : "Pf\n";
  out += std::to_string(g.width()) + " " + std::to_string(g.height()) + "\n-1.0\n";
  for (int y = g.height() - 1; y >= 0; --y) {
    for (int x = 0; x < g.width(); ++x) {
      for (double v : g.pixel(y, x)) put_le<float>(out, static_cast<float>(v));
    }
  }
  write_file(path, out);
}

Grid read_pfm(const fs::path& path) {
  const std::string bytes = read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) fail(ErrorKind::kTruncated, "pfm: header truncated");
    return bytes.substr(start, pos - start);
  };
  const std::string kind = token();
  int channels = 0;
  if (kind == "PF") channels = 3;
  else if (kind == "Pf") channels = 1;
  else fail(ErrorKind::kBadMagic, "pfm: bad magic in " + path.string());
  int w = 0, h = 0;
  double scale = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    scale = std::stod(token());
  } catch (const std::logic_error&) {
    fail(ErrorKind::kShapeMismatch, "pfm: malformed header in " + path.string());
  }
  if (w <= 0 || h <= 0 || scale == 0.0) fail(ErrorKind::kShapeMismatch, "pfm: bad header values");
  ++pos;  // single whitespace byte before the raster
  const std::size_t n = static_cast<std::size_t>(w) * h * channels;
  if (bytes.size() < pos + n * 4) fail(ErrorKind::kTruncated, "pfm: raster truncated");
  const bool little = scale < 0;
  Grid g(h, w, channels);
  std::size_t i = 0;
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c, ++i) {
        const char* p = bytes.data() + pos + 4 * i;
        float v;
        if (little) {
          v = get_le<float>(p);
        } else {
          char b[4] = {p[3], p[2], p[1], p[0]};
          v = get_le<float>(b);
        }
        g.at(y, x, c) = v;
      }
    }
  }
  return g;
}

namespace {

struct PngImage {
  png_image image{};
  PngImage() { image.version = PNG_IMAGE_VERSION; }
  ~PngImage() { png_image_free(&image); }
};

std::vector<std::uint8_t> read_png_raw(const fs::path& path, png_uint_32 format, int& w, int& h) {
  const std::string bytes = read_file(path);
  PngImage img;
  if (!png_image_begin_read_from_memory(&img.image, bytes.data(), bytes.size())) {
    fail(ErrorKind::kBadMagic, "png: cannot decode " + path.string() + ": " + img.image.message);
  }
  img.image.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img.image));
  if (!png_image_finish_read(&img.image, nullptr, buf.data(), 0, nullptr)) {
    fail(ErrorKind::kTruncated, "png: cannot decode " + path.string() + ": " + img.image.message);
  }
  w = static_cast<int>(img.image.width);
  h = static_cast<int>(img.image.height);
  return buf;
}

void write_png_raw(const fs::path& path, const std::vector<std::uint8_t>& buf, int w, int h,
                   png_uint_32 format) {
  PngImage img;
  img.image.width = static_cast<png_uint_32>(w);
  img.image.height = static_cast<png_uint_32>(h);
  img.image.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img.image, nullptr, &size, 0, buf.data(), 0, nullptr)) {
    fail(ErrorKind::kIo, "png: encode failed: " + std::string(img.image.message));
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&img.image, out.data(), &size, 0, buf.data(), 0, nullptr)) {
    fail(ErrorKind::kIo, "png: encode failed: " + std::string(img.image.message));
  }
  out.resize(size);
  write_file(path, out);
}

}  // namespace

Grid read_png_frame(const fs::path& path) {
  int w = 0, h = 0;
  const auto buf = read_png_raw(path, PNG_FORMAT_RGB, w, h);
  Grid g(h, w, 3);
  auto vals = g.values();
  for (std::size_t i = 0; i < buf.size(); ++i) vals[i] = buf[i] / 255.0;
  return g;
}

void write_png_frame(const fs::path& path, const Grid& g) {
  require(g.channels() == 3 || g.channels() == 1, "write_png_frame: need 1 or 3 channels");
  std::vector<std::uint8_t> buf(g.size());
  const auto vals = g.values();
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const double v = std::clamp(vals[i], 0.0, 1.0);
    buf[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  write_png_raw(path, buf, g.width(), g.height(),
                g.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY);
}

Mask read_png_mask(const fs::path& path) {
  int w = 0, h = 0;
  const auto buf = read_png_raw(path, PNG_FORMAT_GRAY, w, h);
  Mask m(h, w, 0);
  for (std::size_t i = 0; i < buf.size(); ++i) m.bits()[i] = buf[i] > 127 ? 1 : 0;
  return m;
}

void write_png_mask(const fs::path& path, const Mask& m) {
  std::vector<std::uint8_t> buf(m.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = m[i] ? 255 : 0;
  write_png_raw(path, buf, m.width(), m.height(), PNG_FORMAT_GRAY);
}

FrameFormat parse_frame_format(std::string_view s) {
  if (s == "png") return FrameFormat::kPng;
  if (s == "pfm") return FrameFormat::kPfm;
  fail(ErrorKind::kConfig, "unknown frame format '" + std::string(s) + "' (png|pfm)");
}

std::string_view extension(FrameFormat f) { return f == FrameFormat::kPng ? "png" : "pfm"; }

namespace {

std::string numbered_name(std::string_view prefix, std::size_t i, std::string_view ext) {
  char idx[16];
  std::snprintf(idx, sizeof idx, "%04zu", i);
  return std::string(prefix) + "_" + idx + "." + std::string(ext);
}

}  // namespace

std::vector<fs::path> numbered_files(const fs::path& dir, std::string_view prefix,
                                     std::string_view ext) {
  if (!fs::is_directory(dir)) fail(ErrorKind::kIo, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (std::size_t i = 0;; ++i) {
    const fs::path p = dir / numbered_name(prefix, i, ext);
    if (!fs::exists(p)) break;
    out.push_back(p);
  }
  // A file past the first gap means the numbering is broken.
  const fs::path next = dir / numbered_name(prefix, out.size() + 1, ext);
  if (fs::exists(next)) fail(ErrorKind::kBadInput, "gap in numbered files under " + dir.string());
  return out;
}

void write_frames(const fs::path& dir, const FrameSequence& frames, FrameFormat format,
                  std::string_view prefix) {
  fs::create_directories(dir);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const fs::path p = dir / numbered_name(prefix, t, extension(format));
    if (format == FrameFormat::kPng) write_png_frame(p, frames[t]);
    else write_pfm(p, frames[t]);
  }
}

void write_masks(const fs::path& dir, const MaskSequence& masks, std::string_view prefix) {
  fs::create_directories(dir);
  for (std::size_t t = 0; t < masks.size(); ++t) {
    write_png_mask(dir / numbered_name(prefix, t, "png"), masks[t]);
  }
}

void write_flows(const fs::path& dir, const FlowSequence& fwd, const FlowSequence& bwd) {
  fs::create_directories(dir);
  for (std::size_t t = 0; t < fwd.size(); ++t) write_flo(dir / numbered_name("flow_fwd", t, "flo"), fwd[t]);
  for (std::size_t t = 0; t < bwd.size(); ++t) write_flo(dir / numbered_name("flow_bwd", t, "flo"), bwd[t]);
}

FrameSequence read_frames(const fs::path& dir, std::string_view prefix) {
  auto png = numbered_files(dir, prefix, "png");
  auto pfm = numbered_files(dir, prefix, "pfm");
  if (!png.empty() && !pfm.empty()) {
    fail(ErrorKind::kBadInput, "both png and pfm frames present in " + dir.string());
  }
  FrameSequence out;
  for (const auto& p : png) out.push_back(read_png_frame(p));
  for (const auto& p : pfm) out.push_back(read_pfm(p));
  return out;
}

MaskSequence read_masks(const fs::path& dir, std::string_view prefix) {
  MaskSequence out;
  for (const auto& p : numbered_files(dir, prefix, "png")) out.push_back(read_png_mask(p));
  return out;
}

SequenceFiles read_sequence(const fs::path& dir) {
  SequenceFiles s;
  s.frames = read_frames(dir);
  if (s.frames.empty()) fail(ErrorKind::kBadInput, "no frames in " + dir.string());
  s.masks = read_masks(dir);
  if (s.masks.empty()) {
    s.masks.assign(s.frames.size(), Mask(s.frames[0].height(), s.frames[0].width(), 0));
  }
  if (s.masks.size() != s.frames.size()) {
    fail(ErrorKind::kBadInput, "frame/mask count mismatch in " + dir.string());
  }
  for (const auto& p : numbered_files(dir, "flow_fwd", "flo")) s.flows_fwd.push_back(read_flo(p));
  for (const auto& p : numbered_files(dir, "flow_bwd", "flo")) s.flows_bwd.push_back(read_flo(p));
  if (s.flows_fwd.size() != s.flows_bwd.size() ||
      (!s.flows_fwd.empty() && s.flows_fwd.size() + 1 != s.frames.size())) {
    fail(ErrorKind::kBadInput, "flow count does not match frame count in " + dir.string());
  }
  for (std::size_t t = 0; t < s.frames.size(); ++t) {
    if (!s.frames[t].same_shape(s.frames[0]) || !s.masks[t].same_spatial(s.frames[0])) {
      fail(ErrorKind::kShapeMismatch, "frame or mask dims differ in " + dir.string());
    }
  }
  for (std::size_t t = 0; t < s.flows_fwd.size(); ++t) {
    if (!s.flows_fwd[t].same_spatial(s.frames[0]) || !s.flows_bwd[t].same_spatial(s.frames[0])) {
      fail(ErrorKind::kShapeMismatch, "flow dims differ from frames in " + dir.string());
    }
  }
  return s;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  int line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorKind::kConfig, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) fail(ErrorKind::kConfig, "config line " + std::to_string(line_no) + ": empty key");
    if (!out.emplace(key, value).second) fail(ErrorKind::kConfig, "config: duplicate key " + key);
  }
  return out;
}

}  // namespace dualprop::io
