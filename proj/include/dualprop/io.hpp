#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dualprop/grid.hpp"

namespace dualprop::io {

namespace fs = std::filesystem;

inline constexpr float kFloMagic = 202021.25f;

// Middlebury .flo: float magic, int32 width, int32 height, then row-major
// interleaved (u, v) float32, all little-endian. Values pass through float32.
FlowField read_flo(const fs::path& path);
void write_flo(const fs::path& path, const FlowField& flow);
FlowField decode_flo(std::string_view bytes);
std::string encode_flo(const FlowField& flow);

// PFM: "PF" (3 channels) or "Pf" (1 channel), scale -1.0 (little-endian),
// rows stored bottom to top.
Grid read_pfm(const fs::path& path);
void write_pfm(const fs::path& path, const Grid& g);

// 8-bit PNG. Frames are read as RGB in [0, 1]; writing rounds clamp(v) * 255.
Grid read_png_frame(const fs::path& path);
void write_png_frame(const fs::path& path, const Grid& g);
// Grayscale masks: value > 127 means masked; written as 0/255.
Mask read_png_mask(const fs::path& path);
void write_png_mask(const fs::path& path, const Mask& m);

enum class FrameFormat { kPng, kPfm };
FrameFormat parse_frame_format(std::string_view s);
std::string_view extension(FrameFormat f);

// Sequence directory layout: frame_0000.{png,pfm}, mask_0000.png,
// flow_fwd_0000.flo (t -> t+1), flow_bwd_0000.flo (t+1 -> t).
struct SequenceFiles {
  FrameSequence frames;
  MaskSequence masks;
  FlowSequence flows_fwd;  // empty if the directory has none
  FlowSequence flows_bwd;
};

SequenceFiles read_sequence(const fs::path& dir);
void write_frames(const fs::path& dir, const FrameSequence& frames, FrameFormat format,
                  std::string_view prefix = "frame");
void write_masks(const fs::path& dir, const MaskSequence& masks, std::string_view prefix = "mask");
void write_flows(const fs::path& dir, const FlowSequence& fwd, const FlowSequence& bwd);
FrameSequence read_frames(const fs::path& dir, std::string_view prefix = "frame");
MaskSequence read_masks(const fs::path& dir, std::string_view prefix = "mask");

// Files named <prefix>_NNNN.<ext> in index order; gaps are an error.
std::vector<fs::path> numbered_files(const fs::path& dir, std::string_view prefix,
                                     std::string_view ext);

std::string read_file(const fs::path& path);
void write_file(const fs::path& path, std::string_view bytes);

// Flat "key = value" text; '#' starts a comment. Duplicate keys are an error.
std::map<std::string, std::string> parse_key_values(std::string_view text);

}  // namespace dualprop::io
