#include "ttfs/io/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <zlib.h>

#include "json.hpp"
#include "ttfs/error.hpp"
#include "ttfs/io/files.hpp"

namespace ttfs::io {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'T', 'T', 'F', 'S', 'C', 'K', '0', '1'};
constexpr std::size_t kHeaderBytes = 8 + 4 + 8 + 4;

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(std::string_view bytes, std::size_t at) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    v |= static_cast<U>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  return v;
}

class BlobWriter {
 public:
  json add(const Tensor& t) {
    json meta = {{"shape", t.shape()}, {"offset", blob.size()}, {"count", t.size()}};
    append_f32_le(blob, t.data());
    return meta;
  }
  std::string blob;
};

json kernel_json(const TemporalKernel& k) {
  return {{"tau", k.tau}, {"t_d", k.t_d}, {"t_ref", k.t_ref}, {"window", k.window}, {"theta0", k.theta0}};
}

TemporalKernel kernel_from(const json& j) {
  TemporalKernel k;
  k.tau = j.at("tau").get<double>();
  k.t_d = j.at("t_d").get<double>();
  k.t_ref = j.at("t_ref").get<std::uint32_t>();
  k.window = j.at("window").get<std::uint32_t>();
  k.theta0 = j.at("theta0").get<double>();
  return k;
}

json init_json(const KernelInit& i) { return {{"tau0", i.tau0}, {"t_d0", i.t_d0}}; }
KernelInit init_from(const json& j) { return {j.at("tau0").get<double>(), j.at("t_d0").get<double>()}; }

Tensor tensor_from(const json& meta, std::string_view blob) {
  const Shape shape = meta.at("shape").get<Shape>();
  const auto offset = meta.at("offset").get<std::uint64_t>();
  const auto count = meta.at("count").get<std::uint64_t>();
  if (shape_size(shape) != count) throw FormatError("tensor count does not match its shape");
  if (offset > blob.size() || count * 4 > blob.size() - offset)
    throw FormatError("tensor at offset " + std::to_string(offset) + " runs past the end of the blob");
  const std::vector<float> v = read_f32_le(blob.substr(offset, count * 4));
  return Tensor(shape, v);
}

}  // namespace

std::uint32_t crc32(std::string_view bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large inputs in chunks.
  std::size_t at = 0;
  while (at < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - at, 1u << 30);
    c = ::crc32(c, reinterpret_cast<const Bytef*>(bytes.data() + at), static_cast<uInt>(n));
    at += n;
  }
  return static_cast<std::uint32_t>(c);
}

void append_f32_le(std::string& out, std::span<const float> values) {
  out.reserve(out.size() + values.size() * 4);
  for (float f : values) put_le(out, std::bit_cast<std::uint32_t>(f));
}

std::vector<float> read_f32_le(std::string_view bytes) {
  if (bytes.size() % 4 != 0) throw FormatError("float blob length is not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, i * 4));
  return out;
}

std::string encode_checkpoint(const Checkpoint& c) {
  c.net.validate();
  BlobWriter w;
  json layers = json::array();
  for (const NetLayer& l : c.net.layers) {
    json jl;
    jl["kind"] = nn::to_string(l.params.kind);
    jl["weights"] = l.params.weights.empty() ? json(nullptr) : w.add(l.params.weights);
    jl["bias"] = l.params.has_bias() ? w.add(l.params.bias) : json(nullptr);
    if (l.bn) {
      jl["bn"] = {{"gamma", w.add(l.bn->gamma)},
                  {"beta", w.add(l.bn->beta)},
                  {"running_mean", w.add(l.bn->running_mean)},
                  {"running_var", w.add(l.bn->running_var)},
                  {"momentum", l.bn->momentum},
                  {"eps", l.bn->eps}};
    } else {
      jl["bn"] = nullptr;
    }
    jl["kernel"] = l.kernel ? kernel_json(*l.kernel) : json(nullptr);
    jl["init"] = init_json(l.init);
    layers.push_back(std::move(jl));
  }
  json m;
  m["format"] = "ttfs-checkpoint";
  m["version"] = kCheckpointVersion;
  m["epoch"] = c.epoch;
  m["rng"] = {{"shuffle", c.shuffle_rng}, {"relaxation", c.relax_rng}};
  m["input_shape"] = c.net.input_shape;
  m["input_kernel"] = kernel_json(c.net.input_kernel);
  m["input_init"] = init_json(c.net.input_init);
  m["layers"] = std::move(layers);
  m["blob"] = {{"bytes", w.blob.size()}, {"crc32", crc32(w.blob)}};
  const std::string manifest = m.dump(1);

  std::string out(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, manifest.size());
  put_le<std::uint32_t>(out, crc32(manifest));
  out += manifest;
  out += w.blob;
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < kHeaderBytes) throw FormatError("checkpoint is truncated (no header)");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw FormatError("not a checkpoint file (bad magic)");
  const auto version = get_le<std::uint32_t>(bytes, 8);
  if (version != kCheckpointVersion)
    throw VersionError("checkpoint version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  const auto mlen = get_le<std::uint64_t>(bytes, 12);
  const auto mcrc = get_le<std::uint32_t>(bytes, 20);
  if (mlen > bytes.size() - kHeaderBytes) throw FormatError("checkpoint is truncated (manifest)");
  const std::string_view manifest = bytes.substr(kHeaderBytes, mlen);
  if (crc32(manifest) != mcrc) throw ChecksumError("checkpoint manifest checksum mismatch");
  const std::string_view blob = bytes.substr(kHeaderBytes + mlen);

  Checkpoint c;
  try {
    const json m = json::parse(manifest);
    if (m.at("format") != "ttfs-checkpoint") throw FormatError("manifest format tag is wrong");
    if (m.at("version").get<std::uint32_t>() != version)
      throw FormatError("manifest version disagrees with the header");
    const auto blob_bytes = m.at("blob").at("bytes").get<std::uint64_t>();
    if (blob.size() < blob_bytes) throw FormatError("checkpoint is truncated (blob)");
    if (blob.size() > blob_bytes) throw FormatError("checkpoint has trailing bytes after the blob");
    if (crc32(blob) != m.at("blob").at("crc32").get<std::uint32_t>())
      throw ChecksumError("checkpoint parameter blob checksum mismatch");

    c.epoch = m.at("epoch").get<std::uint32_t>();
    c.shuffle_rng = m.at("rng").at("shuffle").get<std::string>();
    c.relax_rng = m.at("rng").at("relaxation").get<std::string>();
    c.net.input_shape = m.at("input_shape").get<Shape>();
    c.net.input_kernel = kernel_from(m.at("input_kernel"));
    c.net.input_init = init_from(m.at("input_init"));
    for (const json& jl : m.at("layers")) {
      NetLayer l;
      l.params.kind = nn::layer_kind_from_string(jl.at("kind").get<std::string>());
      if (!jl.at("weights").is_null()) l.params.weights = tensor_from(jl.at("weights"), blob);
      if (!jl.at("bias").is_null()) l.params.bias = tensor_from(jl.at("bias"), blob);
      if (!jl.at("bn").is_null()) {
        const json& b = jl.at("bn");
        nn::BatchNormParams p;
        p.gamma = tensor_from(b.at("gamma"), blob);
        p.beta = tensor_from(b.at("beta"), blob);
        p.running_mean = tensor_from(b.at("running_mean"), blob);
        p.running_var = tensor_from(b.at("running_var"), blob);
        p.momentum = b.at("momentum").get<double>();
        p.eps = b.at("eps").get<double>();
        l.bn = std::move(p);
      }
      if (!jl.at("kernel").is_null()) l.kernel = kernel_from(jl.at("kernel"));
      l.init = init_from(jl.at("init"));
      c.net.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  try {
    c.net.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint describes an invalid network: ") + e.what());
  }
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace ttfs::io
