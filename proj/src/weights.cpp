#include "dualprop/weights.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "dualprop/io.hpp"

namespace dualprop {

std::size_t Tensor::elements() const {
  std::size_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return n;
}

bool Tensor::operator==(const Tensor& other) const {
  return dims == other.dims && data.size() == other.data.size() &&
         std::memcmp(data.data(), other.data.data(), data.size() * sizeof(float)) == 0;
}

void WeightArchive::put(const std::string& name, std::vector<std::uint32_t> dims,
                        std::vector<float> data) {
  require(!name.empty(), "WeightArchive: empty tensor name");
  Tensor t{std::move(dims), std::move(data)};
  require(t.elements() == t.data.size(), "WeightArchive: dims do not match payload for " + name);
  entries_[name] = std::move(t);
}

void WeightArchive::put(const std::string& name, std::vector<std::uint32_t> dims,
                        std::span<const double> data) {
  std::vector<float> f(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) f[i] = static_cast<float>(data[i]);
  put(name, std::move(dims), std::move(f));
}

const Tensor& WeightArchive::get(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) fail(ErrorKind::kMissingWeight, "weights: missing tensor " + name);
  return it->second;
}

const Tensor& WeightArchive::get(const std::string& name,
                                 std::span<const std::uint32_t> expected) const {
  const Tensor& t = get(name);
  if (!std::equal(t.dims.begin(), t.dims.end(), expected.begin(), expected.end())) {
    fail(ErrorKind::kShapeMismatch, "weights: unexpected shape for " + name);
  }
  return t;
}

std::vector<std::string> WeightArchive::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

namespace {

template <typename T>
void put_le(std::string& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char b[sizeof(T)];
    std::memcpy(b, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    const std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail(ErrorKind::kTruncated, "weights: archive truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string WeightArchive::encode() const {
  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, t] : entries_) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    out.push_back('\0');  // dtype f32
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    for (std::uint32_t d : t.dims) put_le<std::uint32_t>(out, d);
    for (float v : t.data) put_le<float>(out, v);
  }
  return out;
}

WeightArchive WeightArchive::decode(std::string_view bytes) {
  if (bytes.size() < 4) fail(ErrorKind::kTruncated, "weights: archive shorter than the magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) fail(ErrorKind::kBadMagic, "weights: bad magic");
  Reader r(bytes.substr(4));
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) fail(ErrorKind::kBadMagic, "weights: unsupported archive version");
  const auto count = r.get<std::uint32_t>();
  WeightArchive ar;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = r.get<std::uint32_t>();
    const std::string name(r.take(name_len));
    const auto dtype = r.get<std::uint8_t>();
    if (dtype != 0) fail(ErrorKind::kShapeMismatch, "weights: unsupported dtype for " + name);
    const auto ndim = r.get<std::uint32_t>();
    if (ndim > 8) fail(ErrorKind::kShapeMismatch, "weights: too many dims for " + name);
    Tensor t;
    for (std::uint32_t d = 0; d < ndim; ++d) t.dims.push_back(r.get<std::uint32_t>());
    const std::size_t n = t.elements();
    if (n > r.remaining() / 4) fail(ErrorKind::kTruncated, "weights: payload truncated for " + name);
    t.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) t.data[i] = r.get<float>();
    if (name.empty() || ar.entries_.count(name)) {
      fail(ErrorKind::kShapeMismatch, "weights: empty or duplicate tensor name");
    }
    ar.entries_[name] = std::move(t);
  }
  if (!r.done()) fail(ErrorKind::kShapeMismatch, "weights: trailing bytes after the last entry");
  return ar;
}

void WeightArchive::save(const std::filesystem::path& path) const { io::write_file(path, encode()); }

WeightArchive WeightArchive::load(const std::filesystem::path& path) {
  return decode(io::read_file(path));
}

namespace {

using Dims = std::vector<std::uint32_t>;

std::uint32_t u(int v) { return static_cast<std::uint32_t>(v); }

std::vector<double> widen(const Tensor& t) { return {t.data.begin(), t.data.end()}; }

// Runs a structural validation and reports failures as archive shape errors.
template <typename F>
void check_shape(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kBadInput) fail(ErrorKind::kShapeMismatch, e.what());
    throw;
  }
}

int count_layers(const WeightArchive& ar, const std::string& prefix) {
  int n = 0;
  while (ar.contains(prefix + "." + std::to_string(n) + ".weight")) ++n;
  return n;
}

std::vector<Kernel> load_stack(const WeightArchive& ar, const std::string& prefix) {
  std::vector<Kernel> out;
  const int n = count_layers(ar, prefix);
  if (n == 0) fail(ErrorKind::kMissingWeight, "weights: missing tensor " + prefix + ".0.weight");
  for (int i = 0; i < n; ++i) out.push_back(load_kernel(ar, prefix + "." + std::to_string(i)));
  return out;
}

void save_stack(WeightArchive& ar, const std::string& prefix, const std::vector<Kernel>& ks) {
  for (std::size_t i = 0; i < ks.size(); ++i) save_kernel(ar, prefix + "." + std::to_string(i), ks[i]);
}

int scalar_meta(const WeightArchive& ar, const std::string& name) {
  const std::uint32_t one[] = {1};
  const Tensor& t = ar.get(name, one);
  return static_cast<int>(t.data[0]);
}

void save_norm(WeightArchive& ar, const std::string& prefix, const LayerNorm& n) {
  ar.put(prefix + ".gamma", Dims{u(static_cast<int>(n.gamma.size()))}, std::span<const double>(n.gamma));
  ar.put(prefix + ".beta", Dims{u(static_cast<int>(n.beta.size()))}, std::span<const double>(n.beta));
}

LayerNorm load_norm(const WeightArchive& ar, const std::string& prefix) {
  LayerNorm n;
  n.gamma = widen(ar.get(prefix + ".gamma"));
  n.beta = widen(ar.get(prefix + ".beta"));
  return n;
}

}  // namespace

void save_kernel(WeightArchive& ar, const std::string& prefix, const Kernel& k) {
  ar.put(prefix + ".weight", Dims{u(k.out_channels), u(k.in_channels), u(k.kh), u(k.kw)},
         std::span<const double>(k.weights));
  if (!k.bias.empty()) ar.put(prefix + ".bias", Dims{u(k.out_channels)}, std::span<const double>(k.bias));
}

Kernel load_kernel(const WeightArchive& ar, const std::string& prefix) {
  const Tensor& t = ar.get(prefix + ".weight");
  if (t.dims.size() != 4) fail(ErrorKind::kShapeMismatch, "weights: " + prefix + " is not a 4-d kernel");
  Kernel k;
  k.out_channels = static_cast<int>(t.dims[0]);
  k.in_channels = static_cast<int>(t.dims[1]);
  k.kh = static_cast<int>(t.dims[2]);
  k.kw = static_cast<int>(t.dims[3]);
  k.weights = widen(t);
  if (ar.contains(prefix + ".bias")) {
    const std::uint32_t dims[] = {t.dims[0]};
    k.bias = widen(ar.get(prefix + ".bias", dims));
  }
  check_shape([&] { k.validate(); });
  return k;
}

void save_linear(WeightArchive& ar, const std::string& prefix, const Linear& l) {
  ar.put(prefix + ".weight", Dims{u(l.out_features), u(l.in_features)}, std::span<const double>(l.weight));
  if (!l.bias.empty()) ar.put(prefix + ".bias", Dims{u(l.out_features)}, std::span<const double>(l.bias));
}

Linear load_linear(const WeightArchive& ar, const std::string& prefix) {
  const Tensor& t = ar.get(prefix + ".weight");
  if (t.dims.size() != 2) fail(ErrorKind::kShapeMismatch, "weights: " + prefix + " is not a matrix");
  Linear l;
  l.out_features = static_cast<int>(t.dims[0]);
  l.in_features = static_cast<int>(t.dims[1]);
  l.weight = widen(t);
  if (ar.contains(prefix + ".bias")) {
    const std::uint32_t dims[] = {t.dims[0]};
    l.bias = widen(ar.get(prefix + ".bias", dims));
  }
  check_shape([&] { l.validate(); });
  return l;
}

void save_alignment(WeightArchive& ar, const std::string& prefix, const AlignmentWeights& w) {
  save_stack(ar, prefix + ".offset", w.offset_net);
  save_kernel(ar, prefix + ".dcn", w.dcn);
  save_stack(ar, prefix + ".fusion", w.fusion);
}

AlignmentWeights load_alignment(const WeightArchive& ar, const std::string& prefix) {
  AlignmentWeights w;
  w.offset_net = load_stack(ar, prefix + ".offset");
  w.dcn = load_kernel(ar, prefix + ".dcn");
  w.fusion = load_stack(ar, prefix + ".fusion");
  return w;
}

void save_rfc(WeightArchive& ar, const RfcWeights& w) {
  save_stack(ar, "rfc.encoder", w.encoder);
  save_alignment(ar, "rfc.backward", w.backward);
  save_alignment(ar, "rfc.forward", w.forward);
  save_kernel(ar, "rfc.fuse", w.fuse);
  save_stack(ar, "rfc.decoder", w.decoder);
}

RfcWeights load_rfc(const WeightArchive& ar) {
  RfcWeights w;
  w.encoder = load_stack(ar, "rfc.encoder");
  w.backward = load_alignment(ar, "rfc.backward");
  w.forward = load_alignment(ar, "rfc.forward");
  w.fuse = load_kernel(ar, "rfc.fuse");
  w.decoder = load_stack(ar, "rfc.decoder");
  check_shape([&] { w.validate(); });
  return w;
}

void save_msvt(WeightArchive& ar, const MsvtWeights& w) {
  ar.put("msvt.heads", Dims{1}, std::vector<float>{static_cast<float>(w.heads)});
  ar.put("msvt.blocks", Dims{1}, std::vector<float>{static_cast<float>(w.blocks.size())});
  for (std::size_t b = 0; b < w.blocks.size(); ++b) {
    const std::string p = "msvt." + std::to_string(b);
    const MsvtBlockWeights& bw = w.blocks[b];
    save_linear(ar, p + ".split", bw.split);
    save_linear(ar, p + ".compose", bw.compose);
    save_norm(ar, p + ".norm1", bw.norm1);
    save_linear(ar, p + ".q", bw.q);
    save_linear(ar, p + ".k", bw.k);
    save_linear(ar, p + ".v", bw.v);
    save_linear(ar, p + ".out", bw.out);
    save_norm(ar, p + ".norm2", bw.norm2);
    save_linear(ar, p + ".ffn1", bw.ffn1);
    save_linear(ar, p + ".ffn2", bw.ffn2);
  }
}

MsvtWeights load_msvt(const WeightArchive& ar) {
  MsvtWeights w;
  w.heads = scalar_meta(ar, "msvt.heads");
  const int blocks = scalar_meta(ar, "msvt.blocks");
  if (blocks <= 0) fail(ErrorKind::kShapeMismatch, "weights: msvt.blocks must be positive");
  for (int b = 0; b < blocks; ++b) {
    const std::string p = "msvt." + std::to_string(b);
    MsvtBlockWeights bw;
    bw.split = load_linear(ar, p + ".split");
    bw.compose = load_linear(ar, p + ".compose");
    bw.norm1 = load_norm(ar, p + ".norm1");
    bw.q = load_linear(ar, p + ".q");
    bw.k = load_linear(ar, p + ".k");
    bw.v = load_linear(ar, p + ".v");
    bw.out = load_linear(ar, p + ".out");
    bw.norm2 = load_norm(ar, p + ".norm2");
    bw.ffn1 = load_linear(ar, p + ".ffn1");
    bw.ffn2 = load_linear(ar, p + ".ffn2");
    w.blocks.push_back(std::move(bw));
  }
  w.token_channels = w.blocks.front().split.out_features;
  return w;
}

ModelWeights random_model_weights(std::uint64_t seed, const ModelShape& shape,
                                  const MsvtConfig& cfg) {
  Rng rng(seed);
  ModelWeights w;
  if (shape.rfc_channels > 0) w.rfc = random_rfc_weights(rng, shape.rfc_channels);
  w.encoder = random_encoder_weights(rng, shape.feature_channels);
  w.decoder = random_decoder_weights(rng, shape.feature_channels);
  w.feature_prop = random_feature_prop_weights(rng, shape.feature_channels);
  w.msvt = random_msvt_weights(rng, cfg, shape.feature_channels, shape.token_channels,
                               shape.heads, shape.blocks);
  return w;
}

WeightArchive to_archive(const ModelWeights& w) {
  WeightArchive ar;
  if (w.rfc) save_rfc(ar, *w.rfc);
  save_stack(ar, "encoder", w.encoder.layers);
  save_stack(ar, "decoder", w.decoder.layers);
  save_alignment(ar, "feature.backward", w.feature_prop.backward);
  save_alignment(ar, "feature.forward", w.feature_prop.forward);
  save_kernel(ar, "feature.fuse", w.feature_prop.fuse);
  save_msvt(ar, w.msvt);
  return ar;
}

ModelWeights from_archive(const WeightArchive& ar, const MsvtConfig& cfg) {
  ModelWeights w;
  if (ar.contains("rfc.encoder.0.weight")) w.rfc = load_rfc(ar);
  w.encoder.layers = load_stack(ar, "encoder");
  w.decoder.layers = load_stack(ar, "decoder");
  w.feature_prop.backward = load_alignment(ar, "feature.backward");
  w.feature_prop.forward = load_alignment(ar, "feature.forward");
  w.feature_prop.fuse = load_kernel(ar, "feature.fuse");
  w.msvt = load_msvt(ar);
  check_shape([&] {
    w.encoder.validate();
    w.decoder.validate();
    const int c = w.encoder.channels();
    w.feature_prop.validate(c);
    require(w.decoder.layers.front().in_channels == c, "decoder input != encoder output width");
    w.msvt.feature_channels = c;
    w.msvt.validate(cfg);
  });
  return w;
}

}  // namespace dualprop
