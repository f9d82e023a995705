#include "ttfs/io/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "ttfs/error.hpp"
#include "ttfs/io/files.hpp"

namespace ttfs::io {

namespace {

Dataset from_rows(std::vector<float> x, std::vector<int> y, Shape sample, std::size_t classes) {
  Dataset d;
  Shape s{y.size()};
  s.insert(s.end(), sample.begin(), sample.end());
  d.x = Tensor(s, std::move(x));
  d.y = std::move(y);
  d.sample_shape = std::move(sample);
  d.classes = classes;
  return d;
}

std::size_t resolve_classes(const std::vector<int>& y, std::size_t classes, const std::string& what) {
  const int max_label = y.empty() ? -1 : *std::max_element(y.begin(), y.end());
  if (classes == 0) classes = static_cast<std::size_t>(max_label + 1);
  if (max_label >= 0 && static_cast<std::size_t>(max_label) >= classes)
    throw FormatError(what + ": label " + std::to_string(max_label) + " out of range for " +
                      std::to_string(classes) + " classes");
  if (classes < 2) throw FormatError(what + ": need at least 2 classes");
  return classes;
}

std::uint32_t be32(std::string_view b, std::size_t at) {
  return (std::uint32_t{static_cast<unsigned char>(b[at])} << 24) |
         (std::uint32_t{static_cast<unsigned char>(b[at + 1])} << 16) |
         (std::uint32_t{static_cast<unsigned char>(b[at + 2])} << 8) |
         std::uint32_t{static_cast<unsigned char>(b[at + 3])};
}

// IDX header: two zero bytes, type code, rank, then big-endian dims.
std::vector<std::size_t> idx_header(std::string_view b, std::uint8_t rank, const std::string& name) {
  if (b.size() < 4 || b[0] != 0 || b[1] != 0 || static_cast<unsigned char>(b[2]) != 0x08 ||
      static_cast<unsigned char>(b[3]) != rank)
    throw FormatError(name + ": IDX magic mismatch (expected unsigned-byte rank " +
                      std::to_string(rank) + ")");
  if (b.size() < 4 + 4u * rank) throw FormatError(name + ": truncated IDX header");
  std::vector<std::size_t> dims(rank);
  std::size_t total = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    dims[i] = be32(b, 4 + 4 * i);
    total *= dims[i];
  }
  if (b.size() != 4 + 4u * rank + total) throw FormatError(name + ": IDX payload size does not match its dims");
  return dims;
}

std::map<std::string, std::string> parse_options(const std::string& text, const std::string& source) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("data source '" + source + "': expected key=value, got '" + item + "'");
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

class Options {
 public:
  Options(std::map<std::string, std::string> kv, std::string source)
      : kv_(std::move(kv)), source_(std::move(source)) {}

  template <typename T>
  void get(const std::string& key, T& out) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return;
    const std::string& v = it->second;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      throw ConfigError("data source '" + source_ + "': bad value for " + key + ": '" + v + "'");
    kv_.erase(it);
  }

  void get_shape(const std::string& key, Shape& out) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return;
    std::stringstream ss(it->second);
    std::string part;
    out.clear();
    while (std::getline(ss, part, 'x')) {
      std::size_t v = 0;
      auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
      if (ec != std::errc() || p != part.data() + part.size() || v == 0)
        throw ConfigError("data source '" + source_ + "': bad shape '" + it->second + "'");
      out.push_back(v);
    }
    kv_.erase(it);
  }

  void finish() const {
    if (!kv_.empty())
      throw ConfigError("data source '" + source_ + "': unknown option '" + kv_.begin()->first + "'");
  }

 private:
  std::map<std::string, std::string> kv_;
  std::string source_;
};

}  // namespace

Dataset make_blobs(const BlobOptions& o, Rng& rng) {
  if (o.classes < 2 || o.dim == 0 || o.clusters == 0 || o.n < o.classes)
    throw ConfigError("blobs need classes >= 2, dim >= 1, clusters >= 1 and n >= classes");
  if (!(o.spread >= 0.0) || !(o.separation > 0.0))
    throw ConfigError("blobs need spread >= 0 and separation > 0");
  const std::size_t centres = o.classes * o.clusters;
  std::vector<double> c(centres * o.dim);
  for (double& v : c) v = rng.normal(0.0, o.separation);
  std::vector<float> x(o.n * o.dim);
  std::vector<int> y(o.n);
  for (std::size_t i = 0; i < o.n; ++i) {
    const std::size_t cls = i % o.classes;
    const std::size_t centre = cls * o.clusters + rng.below(o.clusters);
    y[i] = static_cast<int>(cls);
    for (std::size_t d = 0; d < o.dim; ++d)
      x[i * o.dim + d] = static_cast<float>(c[centre * o.dim + d] + rng.normal(0.0, o.spread));
  }
  return from_rows(std::move(x), std::move(y), {o.dim}, o.classes);
}

Dataset make_moons(const MoonOptions& o, Rng& rng) {
  if (o.n < 2) throw ConfigError("moons need n >= 2");
  if (!(o.noise >= 0.0)) throw ConfigError("moons need noise >= 0");
  std::vector<float> x(o.n * 2);
  std::vector<int> y(o.n);
  for (std::size_t i = 0; i < o.n; ++i) {
    const int cls = static_cast<int>(i % 2);
    const double t = std::numbers::pi * rng.uniform();
    double a = std::cos(t), b = std::sin(t);
    if (cls == 1) {
      a = 1.0 - a;
      b = 0.5 - b;
    }
    x[2 * i] = static_cast<float>(a + rng.normal(0.0, o.noise));
    x[2 * i + 1] = static_cast<float>(b + rng.normal(0.0, o.noise));
    y[i] = cls;
  }
  return from_rows(std::move(x), std::move(y), {2}, 2);
}

Dataset load_csv(const std::filesystem::path& path, std::size_t classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  const std::string name = path.string();
  std::vector<float> x;
  std::vector<int> y;
  std::size_t width = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> fields;
    const char* p = line.data();
    const char* end = p + line.size();
    bool numeric = true;
    while (true) {
      double v = 0.0;
      while (p < end && *p == ' ') ++p;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) {
        numeric = false;
        break;
      }
      fields.push_back(v);
      p = next;
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      if (*p != ',') {
        numeric = false;
        break;
      }
      ++p;
    }
    if (!numeric) {
      if (lineno == 1 && y.empty()) continue;  // header row
      throw ParseError(name + " line " + std::to_string(lineno) + ": expected comma-separated numbers");
    }
    if (fields.size() < 2)
      throw ParseError(name + " line " + std::to_string(lineno) + ": need a label and at least one value");
    if (width == 0) width = fields.size() - 1;
    if (fields.size() - 1 != width)
      throw ParseError(name + " line " + std::to_string(lineno) + ": expected " + std::to_string(width) +
                       " values, got " + std::to_string(fields.size() - 1));
    const double label = fields[0];
    if (label < 0.0 || label != std::floor(label) || label > 1e9)
      throw FormatError(name + " line " + std::to_string(lineno) + ": label must be a non-negative integer");
    if (classes != 0 && label >= static_cast<double>(classes))
      throw FormatError(name + " line " + std::to_string(lineno) + ": label " +
                        std::to_string(static_cast<long>(label)) + " out of range for " +
                        std::to_string(classes) + " classes");
    y.push_back(static_cast<int>(label));
    for (std::size_t i = 1; i < fields.size(); ++i) {
      if (!(fields[i] >= 0.0 && fields[i] <= 255.0))
        throw FormatError(name + " line " + std::to_string(lineno) + ": pixel value outside [0, 255]");
      x.push_back(static_cast<float>(fields[i] / 255.0));
    }
  }
  if (y.empty()) throw FormatError(name + ": no samples");
  classes = resolve_classes(y, classes, name);
  return from_rows(std::move(x), std::move(y), {width}, classes);
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t classes) {
  const std::string ib = read_file(images);
  const std::string lb = read_file(labels);
  const auto idims = idx_header(ib, 3, images.string());
  const auto ldims = idx_header(lb, 1, labels.string());
  if (idims[0] != ldims[0])
    throw FormatError("IDX image count " + std::to_string(idims[0]) + " does not match label count " +
                      std::to_string(ldims[0]));
  const std::size_t n = idims[0], px = idims[1] * idims[2];
  std::vector<float> x(n * px);
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = static_cast<float>(static_cast<unsigned char>(ib[16 + i]) / 255.0);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<unsigned char>(lb[8 + i]);
  classes = resolve_classes(y, classes, labels.string());
  return from_rows(std::move(x), std::move(y), {1, idims[1], idims[2]}, classes);
}

DatasetHandle split_dataset(const Dataset& all, std::uint64_t seed, const SplitSpec& split) {
  if (!(split.val >= 0.0) || !(split.test >= 0.0) || !(split.val + split.test < 1.0))
    throw ConfigError("split fractions must be >= 0 and sum to less than 1");
  const std::size_t n = all.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = named_stream(seed, "split");
  rng.shuffle(order);
  const auto n_test = static_cast<std::size_t>(std::llround(split.test * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(split.val * static_cast<double>(n)));
  if (n_test + n_val >= n) throw ConfigError("split leaves no training samples");
  DatasetHandle h;
  const std::span<const std::size_t> o(order);
  h.test = all.select(o.subspan(0, n_test));
  h.val = all.select(o.subspan(n_test, n_val));
  h.train = all.select(o.subspan(n_test + n_val));
  h.input_shape = all.sample_shape;
  h.classes = all.classes;
  return h;
}

void minmax_normalize(DatasetHandle& h) {
  const std::size_t f = h.train.sample_size();
  std::vector<float> lo(f, std::numeric_limits<float>::infinity());
  std::vector<float> hi(f, -std::numeric_limits<float>::infinity());
  for (std::size_t i = 0; i < h.train.size(); ++i)
    for (std::size_t d = 0; d < f; ++d) {
      const float v = h.train.x[i * f + d];
      lo[d] = std::min(lo[d], v);
      hi[d] = std::max(hi[d], v);
    }
  for (Dataset* d : {&h.train, &h.val, &h.test})
    for (std::size_t i = 0; i < d->size(); ++i)
      for (std::size_t k = 0; k < f; ++k) {
        float& v = d->x[i * f + k];
        const float range = hi[k] - lo[k];
        const float s = range > 0.0f ? (v - lo[k]) / range : 0.0f;
        v = std::clamp(s, 0.0f, 1.0f);
      }
}

DatasetHandle ingest_dataset(const std::string& source, std::uint64_t seed, const SplitSpec& split) {
  const auto colon = source.find(':');
  const std::string kind = source.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : source.substr(colon + 1);
  DatasetHandle h;
  if (kind == "blobs" || kind == "moons") {
    Options opt(parse_options(rest, source), source);
    Rng rng = named_stream(seed, "data");
    Dataset all;
    if (kind == "blobs") {
      BlobOptions b;
      opt.get("n", b.n);
      opt.get("classes", b.classes);
      opt.get("dim", b.dim);
      opt.get("clusters", b.clusters);
      opt.get("spread", b.spread);
      opt.get("separation", b.separation);
      opt.finish();
      all = make_blobs(b, rng);
    } else {
      MoonOptions m;
      opt.get("n", m.n);
      opt.get("noise", m.noise);
      opt.finish();
      all = make_moons(m, rng);
    }
    h = split_dataset(all, seed, split);
    minmax_normalize(h);
  } else if (kind == "csv" || kind == "idx") {
    const auto comma = rest.find(',');
    const std::string paths = rest.substr(0, comma);
    Options opt(parse_options(comma == std::string::npos ? "" : rest.substr(comma + 1), source), source);
    std::size_t classes = 0, limit = 0;
    Shape shape;
    opt.get("classes", classes);
    opt.get("limit", limit);
    if (kind == "csv") opt.get_shape("shape", shape);
    opt.finish();
    if (paths.empty()) throw ConfigError("data source '" + source + "' names no file");
    Dataset all;
    if (kind == "csv") {
      all = load_csv(paths, classes);
    } else {
      const auto sep = paths.find(':');
      if (sep == std::string::npos)
        throw ConfigError("idx source needs IMAGES:LABELS, got '" + paths + "'");
      all = load_idx(paths.substr(0, sep), paths.substr(sep + 1), classes);
    }
    if (!shape.empty()) {
      if (shape_size(shape) != all.sample_size())
        throw ConfigError("shape " + shape_str(shape) + " does not match " +
                          std::to_string(all.sample_size()) + " values per row");
      all.sample_shape = shape;
      Shape full{all.size()};
      full.insert(full.end(), shape.begin(), shape.end());
      all.x = all.x.reshaped(full);
    }
    if (limit > 0 && limit < all.size()) all = all.slice(0, limit);
    h = split_dataset(all, seed, split);
  } else {
    throw ConfigError("unknown data source '" + kind + "' (expected blobs, moons, csv or idx)");
  }
  h.source = source;
  return h;
}

}  // namespace ttfs::io
