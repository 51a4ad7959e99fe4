#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dualprop/align.hpp"
#include "dualprop/feature_prop.hpp"
#include "dualprop/flow_completion.hpp"
#include "dualprop/msvt.hpp"

namespace dualprop {

struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t elements() const;
  bool operator==(const Tensor& other) const;  // bitwise on the payload
};

// Named float32 tensors. File layout, little-endian:
//   "DPWA" u32 version u32 count
//   per entry: u32 name_len, name bytes, u8 dtype (0 = f32), u32 ndim,
//              u32 dims[ndim], f32 payload[prod(dims)]
// Entries are written in name order.
class WeightArchive {
 public:
  static constexpr char kMagic[4] = {'D', 'P', 'W', 'A'};
  static constexpr std::uint32_t kVersion = 1;

  void put(const std::string& name, std::vector<std::uint32_t> dims, std::vector<float> data);
  void put(const std::string& name, std::vector<std::uint32_t> dims, std::span<const double> data);
  bool contains(const std::string& name) const { return entries_.count(name) > 0; }
  // kMissingWeight if absent; kShapeMismatch if dims differ from `expected`.
  const Tensor& get(const std::string& name) const;
  const Tensor& get(const std::string& name, std::span<const std::uint32_t> expected) const;
  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }

  std::string encode() const;
  static WeightArchive decode(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static WeightArchive load(const std::filesystem::path& path);

  bool operator==(const WeightArchive& other) const { return entries_ == other.entries_; }

 private:
  std::map<std::string, Tensor> entries_;
};

void save_kernel(WeightArchive& ar, const std::string& prefix, const Kernel& k);
Kernel load_kernel(const WeightArchive& ar, const std::string& prefix);
void save_linear(WeightArchive& ar, const std::string& prefix, const Linear& l);
Linear load_linear(const WeightArchive& ar, const std::string& prefix);

void save_alignment(WeightArchive& ar, const std::string& prefix, const AlignmentWeights& w);
AlignmentWeights load_alignment(const WeightArchive& ar, const std::string& prefix);
void save_rfc(WeightArchive& ar, const RfcWeights& w);
RfcWeights load_rfc(const WeightArchive& ar);
void save_msvt(WeightArchive& ar, const MsvtWeights& w);
MsvtWeights load_msvt(const WeightArchive& ar);

// Everything the weighted pipeline uses. The flow completion network is
// optional; without it flows are completed by the Laplacian solver.
struct ModelWeights {
  std::optional<RfcWeights> rfc;
  EncoderWeights encoder;
  DecoderWeights decoder;
  FeaturePropWeights feature_prop;
  MsvtWeights msvt;
};

struct ModelShape {
  int feature_channels = kDefaultFeatureChannels;
  int token_channels = kDefaultTokenChannels;
  int heads = kDefaultHeads;
  int blocks = kDefaultNumBlocks;
  int rfc_channels = kDefaultRfcChannels;  // 0 leaves the flow network out
};

ModelWeights random_model_weights(std::uint64_t seed, const ModelShape& shape,
                                  const MsvtConfig& cfg = {});
WeightArchive to_archive(const ModelWeights& w);
// Shapes are taken from the archive and then checked for consistency;
// structural problems are reported as kShapeMismatch.
ModelWeights from_archive(const WeightArchive& ar, const MsvtConfig& cfg = {});

}  // namespace dualprop
